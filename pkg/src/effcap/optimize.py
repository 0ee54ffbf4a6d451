"""QoS-aware resource allocation on top of the capacity solver.

Four consumers of the same primitive: power control and bandwidth
allocation (dual decomposition over a shared budget), effective energy
efficiency (Dinkelbach's fractional programming), and admission control
(point-in-region tests against the QoS boundary).

Everything here treats the contention layer as fixed: transmit power
and bandwidth shape the PHY rate, not the MAC operating point, so the
collision probability and backoff transforms are resolved once per
configuration and shared across the search.

Concavity of C(theta, R(x)) in the allocated resource is asserted, not
proven: every marginal-value evaluation made during a search is checked
against its neighbours, and an increase raises ConcavityError rather
than returning a local optimum from an unvalidated regime.
"""

import bisect as _bisect_mod
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

from .errors import ConcavityError, ConvergenceError, MonotonicityError
from .mac import (
    ContentionConfig,
    MacOperatingPoint,
    backoff_transforms,
    solve_operating_point,
)
from .solver import (
    LinkParams,
    _fixed_point_lhs,
    effcap_closed_form,
    mean_throughput,
)

LN2 = math.log(2.0)

_DUAL_MAX_ITER = 200
_BUDGET_RTOL = 1e-12  # well inside the 1e-9 contract
_KKT_TOL = 1e-6


@lru_cache(maxsize=None)
def _shared_op(cfg: ContentionConfig) -> MacOperatingPoint:
    return solve_operating_point(cfg)


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class ReceiverLink:
    """One receiver of the tagged transmitter.

    ``power_p`` and ``bandwidth_b`` are the operating values; the
    allocators treat one of them as the variable and the other as
    fixed.  The contention context (``cfg``, optionally a pre-solved
    ``op``) is shared by all receivers of the transmitter.
    """

    gain_h: float
    noise_n0: float
    theta_k: float
    bandwidth_b: float
    power_p: float
    cfg: ContentionConfig
    op: MacOperatingPoint | None = None
    per_eps: float = 0.0

    def __post_init__(self):
        if not self.gain_h > 0.0:
            raise ValueError("gain_h must be > 0")
        if not self.noise_n0 > 0.0:
            raise ValueError("noise_n0 must be > 0")
        if not self.theta_k > 0.0:
            raise ValueError("theta_k must be > 0")
        if not self.bandwidth_b > 0.0:
            raise ValueError("bandwidth_b must be > 0")
        if not (self.power_p >= 0.0 and math.isfinite(self.power_p)):
            raise ValueError("power_p must be finite and >= 0")
        if not 0.0 <= self.per_eps <= 1.0:
            raise ValueError("per_eps must lie in [0, 1]")

    def operating_point(self) -> MacOperatingPoint:
        return self.op if self.op is not None else _shared_op(self.cfg)


@dataclass(frozen=True)
class AllocationResult:
    """Outcome of one allocation (optimizer or baseline)."""

    allocation: tuple[float, ...]
    rates: tuple[float, ...]
    effcaps: tuple[float, ...]
    objective: float
    kkt_residual: float
    iterations: int
    multiplier: float = math.nan

    def __post_init__(self):
        if any(not (a >= 0.0) for a in self.allocation):
            raise ValueError("allocations must be >= 0")
        if not (len(self.allocation) == len(self.rates) == len(self.effcaps)):
            raise ValueError("per-receiver fields must have equal length")


@dataclass(frozen=True)
class AdmissionDecision:
    """Accept/reject with the rate margin to the QoS boundary."""

    accepted: bool
    margin: float
    boundary_rate: float
    theta_star: float
    eta: float
    reason: str = ""


@dataclass(frozen=True)
class DinkelbachResult:
    x_star: float
    ratio: float
    iterations: int
    multipliers: tuple[float, ...]


# ---------------------------------------------------------------------------
# rate map and derivatives


def receiver_rate(rl: ReceiverLink, power: float | None = None,
                  bandwidth: float | None = None) -> float:
    """Shannon rate over the allocated band, bits/second."""
    p = rl.power_p if power is None else power
    b = rl.bandwidth_b if bandwidth is None else bandwidth
    if p <= 0.0 or b <= 0.0:
        return 0.0
    return b * math.log2(1.0 + p * rl.gain_h / (rl.noise_n0 * b))


def receiver_effcap(rl: ReceiverLink, power: float | None = None,
                    bandwidth: float | None = None) -> float:
    """Effective capacity of one receiver at its QoS exponent."""
    r = receiver_rate(rl, power=power, bandwidth=bandwidth)
    if r <= 0.0:
        return 0.0
    link = LinkParams(rate_r=r, per_eps=rl.per_eps)
    return effcap_closed_form(link, rl.cfg, rl.operating_point(),
                              rl.theta_k).c_theta


def effcap_rate_derivative(
    link: LinkParams,
    cfg: ContentionConfig,
    op_pt: MacOperatingPoint,
    theta: float,
) -> float:
    """dC/dR by implicit differentiation of the service fixed point.

    With F(c, R) the fixed-point expression minus one, dC/dR =
    -F_R/F_c at the root.  Only the collision-free success branch
    carries R, so F_R is a single term; F_c uses the transform
    derivatives returned alongside the transforms themselves.
    """
    c = effcap_closed_form(link, cfg, op_pt, theta).c_theta
    t1, dt1, _, dt2 = backoff_transforms(cfg, op_pt, theta * c)
    q = op_pt.p_laa ** cfg.retry_limit
    eps = link.per_eps
    tf = cfg.t_f
    e_succ = math.exp((c - link.rate_r) * theta * tf)
    e_err = math.exp(c * theta * tf)

    f_r = -(1.0 - q) * t1 * (1.0 - eps) * theta * tf * e_succ
    f_c = (1.0 - q) * theta * (
        dt1 * (e_succ * (1.0 - eps) + e_err * eps)
        + t1 * tf * (e_succ * (1.0 - eps) + e_err * eps)
    ) + q * theta * dt2
    if not f_c > 0.0:
        raise MonotonicityError(
            "service fixed point is not increasing in c at its root"
        )
    return -f_r / f_c


def _rate_slope_power(rl: ReceiverLink, p: float) -> float:
    # dR/dp at fixed bandwidth
    u = p * rl.gain_h / (rl.noise_n0 * rl.bandwidth_b)
    return rl.gain_h / (rl.noise_n0 * (1.0 + u) * LN2)


def _rate_slope_bandwidth(rl: ReceiverLink, b: float) -> float:
    # dR/dB at fixed power; positive and decreasing in b
    u = rl.power_p * rl.gain_h / (rl.noise_n0 * b)
    return (math.log1p(u) - u / (1.0 + u)) / LN2


def _cap_rate_derivative(rl: ReceiverLink, r: float) -> float:
    link = LinkParams(rate_r=r, per_eps=rl.per_eps)
    return effcap_rate_derivative(link, rl.cfg, rl.operating_point(),
                                  rl.theta_k)


# ---------------------------------------------------------------------------
# dual decomposition over a shared budget


class _MarginalCurve:
    """Exact marginal-value evaluations with bracket reuse.

    Stores every (x, dC/dx) pair computed during the search, sorted by
    x.  Lookups bracket new targets from the cache, so late dual
    iterations cost a handful of fresh solves.  Each insertion checks
    that the marginal is still decreasing in x; a violation means the
    objective is not concave where we are searching.
    """

    def __init__(self, fn: Callable[[float], float], label: str):
        self.fn = fn
        self.label = label
        self.xs: list[float] = []
        self.ms: list[float] = []

    def at(self, x: float) -> float:
        i = _bisect_mod.bisect_left(self.xs, x)
        if i < len(self.xs) and self.xs[i] == x:
            return self.ms[i]
        m = self.fn(x)
        if (i > 0 and self.ms[i - 1] < m * (1.0 - 1e-9)) or (
            i < len(self.ms) and m < self.ms[i] * (1.0 - 1e-9)
        ):
            raise ConcavityError(
                f"{self.label}: marginal value increased with the "
                f"allocation near x={x:.6g}; outside the validated "
                "concave regime"
            )
        self.xs.insert(i, x)
        self.ms.insert(i, m)
        return m

    def solve(self, lam: float, lo: float, hi: float, xtol: float) -> float:
        """Largest-bracket bisection for fn(x) = lam, fn decreasing."""
        # tighten [lo, hi] from the cache before bisecting
        for x, m in zip(self.xs, self.ms):
            if m > lam and x > lo:
                lo = x
            if m < lam and x < hi:
                hi = min(hi, x)
                break
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if self.at(mid) > lam:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def _dual_allocate(
    curves: Sequence[_MarginalCurve],
    total: float,
    floor: float,
) -> tuple[list[float], float, int]:
    """Maximize a separable concave sum under a simplex budget.

    Bisects the budget multiplier; each receiver's allocation solves
    marginal_k(x) = lam on [0, total] with the convention that a
    marginal already below lam at the floor allocates zero.
    """
    k = len(curves)
    m_floor = [c.at(floor) for c in curves]
    m_total = [c.at(total) for c in curves]
    xtol = 1e-13 * total

    def alloc_at(lam: float) -> list[float]:
        xs = []
        for i, c in enumerate(curves):
            if m_floor[i] <= lam:
                xs.append(0.0)
            elif m_total[i] >= lam:
                xs.append(total)
            else:
                xs.append(c.solve(lam, floor, total, xtol))
        return xs

    lam_hi = max(m_floor)
    lam_lo = min(m_total) * 0.5
    if lam_lo <= 0.0:
        lam_lo = min(m for m in m_floor if m > 0.0) * 1e-9
    xs = alloc_at(lam_lo)
    if sum(xs) < total:
        # budget is not binding even at a token multiplier; concave
        # increasing objectives should never get here
        raise ConvergenceError("budget constraint failed to bind")

    it = 0
    for it in range(1, _DUAL_MAX_ITER + 1):
        lam = 0.5 * (lam_lo + lam_hi)
        if lam == lam_lo or lam == lam_hi:
            break
        xs = alloc_at(lam)
        gap = sum(xs) - total
        if abs(gap) <= _BUDGET_RTOL * total:
            return xs, lam, it
        if gap > 0.0:
            lam_lo = lam
        else:
            lam_hi = lam
    lam = 0.5 * (lam_lo + lam_hi)
    xs = alloc_at(lam)
    if abs(sum(xs) - total) > 1e-9 * total:
        raise ConvergenceError(
            "dual bisection failed to meet the budget",
            abs(sum(xs) - total) / total,
        )
    return xs, lam, it


def _kkt_residual(curves, xs, lam, floor, total) -> float:
    res = abs(sum(xs) - total) / total
    for c, x in zip(curves, xs):
        if x > floor:
            res = max(res, abs(c.at(x) - lam) / lam)
        else:
            res = max(res, max(0.0, c.at(floor) - lam) / lam)
    return res


def _finalize(rls, xs, lam, iters, kkt, *, variable) -> AllocationResult:
    if variable == "power":
        rates = [receiver_rate(rl, power=x) for rl, x in zip(rls, xs)]
        caps = [receiver_effcap(rl, power=x) for rl, x in zip(rls, xs)]
    else:
        rates = [receiver_rate(rl, bandwidth=x) for rl, x in zip(rls, xs)]
        caps = [receiver_effcap(rl, bandwidth=x) for rl, x in zip(rls, xs)]
    return AllocationResult(
        allocation=tuple(xs), rates=tuple(rates), effcaps=tuple(caps),
        objective=sum(caps), kkt_residual=kkt, iterations=iters,
        multiplier=lam,
    )


def _assert_dominates(result: AllocationResult, baselines) -> None:
    slack = 1e-9 * max(1.0, abs(result.objective))
    for name, base in baselines:
        if result.objective < base.objective - slack:
            raise ConvergenceError(
                f"optimizer objective {result.objective:.12g} fell below "
                f"the {name} baseline {base.objective:.12g}"
            )


def optimize_power(rls: Sequence[ReceiverLink], p_total: float) -> AllocationResult:
    """Maximize total effective capacity over the power budget."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not p_total > 0.0:
        raise ValueError("p_total must be > 0")
    rls = [replace(rl, op=rl.operating_point()) for rl in rls]
    floor = 1e-12 * p_total

    def marginal(rl):
        return lambda p: (
            _cap_rate_derivative(rl, receiver_rate(rl, power=max(p, floor)))
            * _rate_slope_power(rl, max(p, floor))
        )

    curves = [_MarginalCurve(marginal(rl), f"receiver {i} power")
              for i, rl in enumerate(rls)]
    xs, lam, iters = _dual_allocate(curves, p_total, floor)
    kkt = _kkt_residual(curves, xs, lam, floor, p_total)
    if kkt > _KKT_TOL:
        raise ConvergenceError("KKT residual above tolerance", kkt)
    result = _finalize(rls, xs, lam, iters, kkt, variable="power")
    _assert_dominates(result, [
        ("water-filling", waterfilling_baseline(rls, p_total)),
        ("channel-inversion", channel_inversion_baseline(rls, p_total)),
    ])
    return result


def optimize_bandwidth(rls: Sequence[ReceiverLink], b_total: float) -> AllocationResult:
    """Maximize total effective capacity over the bandwidth budget."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not b_total > 0.0:
        raise ValueError("b_total must be > 0")
    rls = [replace(rl, op=rl.operating_point()) for rl in rls]
    floor = 1e-12 * b_total

    def marginal(rl):
        def m(b):
            b = max(b, floor)
            r = receiver_rate(rl, bandwidth=b)
            return _cap_rate_derivative(rl, r) * _rate_slope_bandwidth(rl, b)
        return m

    curves = [_MarginalCurve(marginal(rl), f"receiver {i} bandwidth")
              for i, rl in enumerate(rls)]
    xs, lam, iters = _dual_allocate(curves, b_total, floor)
    kkt = _kkt_residual(curves, xs, lam, floor, b_total)
    if kkt > _KKT_TOL:
        raise ConvergenceError("KKT residual above tolerance", kkt)
    result = _finalize(rls, xs, lam, iters, kkt, variable="bandwidth")
    _assert_dominates(result, [
        ("optimal-rate", optimal_rate_baseline(rls, b_total)),
        ("equal-split", equal_baseline(rls, b_total)),
    ])
    return result


# ---------------------------------------------------------------------------
# baselines


def waterfilling_baseline(rls: Sequence[ReceiverLink], p_total: float) -> AllocationResult:
    """Classic water-filling on the Shannon rates, QoS-blind."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not p_total > 0.0:
        raise ValueError("p_total must be > 0")
    # level w in power-per-Hz: p_k = B_k * max(0, w - N0/h_k)
    lo = 0.0
    hi = p_total / min(rl.bandwidth_b for rl in rls) + max(
        rl.noise_n0 / rl.gain_h for rl in rls
    )

    def spent(w):
        return sum(rl.bandwidth_b * max(0.0, w - rl.noise_n0 / rl.gain_h)
                   for rl in rls)

    it = 0
    for it in range(1, 200 + 1):
        w = 0.5 * (lo + hi)
        if w == lo or w == hi:
            break
        if spent(w) < p_total:
            lo = w
        else:
            hi = w
    w = 0.5 * (lo + hi)
    xs = [rl.bandwidth_b * max(0.0, w - rl.noise_n0 / rl.gain_h) for rl in rls]
    scale = p_total / sum(xs)  # absorb the last bisection step exactly
    xs = [x * scale for x in xs]
    result = _finalize(rls, xs, math.nan, it, math.nan, variable="power")
    return result


def channel_inversion_baseline(rls: Sequence[ReceiverLink], p_total: float) -> AllocationResult:
    """Power inversely proportional to the channel gain."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not p_total > 0.0:
        raise ValueError("p_total must be > 0")
    inv = [1.0 / rl.gain_h for rl in rls]
    s = sum(inv)
    xs = [p_total * v / s for v in inv]
    return _finalize(rls, xs, math.nan, 0, math.nan, variable="power")


def optimal_rate_baseline(rls: Sequence[ReceiverLink], b_total: float) -> AllocationResult:
    """Bandwidth split maximizing the plain rate sum, QoS-blind."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not b_total > 0.0:
        raise ValueError("b_total must be > 0")
    floor = 1e-12 * b_total
    curves = [
        _MarginalCurve(
            (lambda rl: lambda b: _rate_slope_bandwidth(rl, max(b, floor)))(rl),
            f"receiver {i} rate slope",
        )
        for i, rl in enumerate(rls)
    ]
    xs, lam, iters = _dual_allocate(curves, b_total, floor)
    result = _finalize(rls, xs, lam, iters, math.nan, variable="bandwidth")
    return result


def equal_baseline(rls: Sequence[ReceiverLink], b_total: float) -> AllocationResult:
    """Uniform bandwidth split."""
    if not rls:
        raise ValueError("need at least one receiver")
    if not b_total > 0.0:
        raise ValueError("b_total must be > 0")
    xs = [b_total / len(rls)] * len(rls)
    return _finalize(rls, xs, math.nan, 0, math.nan, variable="bandwidth")


# ---------------------------------------------------------------------------
# effective energy efficiency


def _argmax_concave(g: Callable[[float], float], lo: float, hi: float) -> float:
    """Golden-section maximizer; ties resolve to the smallest x."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(200):
        if b - a <= 1e-14 * max(abs(lo), abs(hi), 1.0):
            break
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = g(d)
    x = 0.5 * (a + b)
    gx = g(x)
    # plateau tie-break: the interval infimum wins when it is as good
    if g(lo) >= gx - 1e-12 * max(1.0, abs(gx)):
        return lo
    return x


def dinkelbach_ratio(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    offset: float = 0.0,
    max_iter: int = 100,
) -> DinkelbachResult:
    """Maximize fn(x)/(x + offset) for concave nonnegative fn.

    Standard Dinkelbach iteration: maximize fn(x) - lam*(x + offset),
    update lam to the achieved ratio, stop when the auxiliary optimum
    reaches zero.  The multiplier sequence must be non-decreasing;
    a decrease means fn is outside the concave regime.
    """
    if not (lo > 0.0 and hi > lo):
        raise ValueError("need 0 < lo < hi")
    if offset < 0.0:
        raise ValueError("offset must be >= 0")
    lam = fn(lo) / (lo + offset)
    lams = [lam]
    for it in range(1, max_iter + 1):
        x = _argmax_concave(lambda v: fn(v) - lam * (v + offset), lo, hi)
        fx = fn(x)
        aux = fx - lam * (x + offset)
        if abs(aux) <= 1e-9 * max(fx, 1e-300):
            return DinkelbachResult(x, fx / (x + offset), it, tuple(lams))
        nxt = fx / (x + offset)
        if nxt < lam * (1.0 - 1e-12):
            raise ConvergenceError(
                "Dinkelbach multiplier decreased; objective is not "
                "concave over the range"
            )
        lam = nxt
        lams.append(lam)
    raise ConvergenceError(f"Dinkelbach failed to converge in {max_iter} iterations")


def dinkelbach_eee(
    rl: ReceiverLink,
    p_range: tuple[float, float],
    static_offset: float = 0.0,
) -> tuple[float, float]:
    """Most energy-efficient transmit power.

    Maximizes C(theta, R(p)) / (p + static_offset) over the range; the
    default offset of zero charges transmit power only.
    """
    lo, hi = p_range
    res = dinkelbach_ratio(lambda p: receiver_effcap(rl, power=p), lo, hi,
                           offset=static_offset)
    return res.x_star, res.ratio


# ---------------------------------------------------------------------------
# admission control


def admission_control(
    current: Sequence[float],
    candidate_rate: float,
    d_max: float,
    p_th: float,
    cfg: ContentionConfig,
    link: LinkParams,
    eta: float | None = None,
) -> AdmissionDecision:
    """Accept a flow iff its (rate, delay-bound) point fits the region.

    Every admitted flow, and the candidate itself, contends as one
    more transmitter, so the boundary is computed at the incremented
    density.  The margin is measured along the rate axis: boundary
    rate at the candidate's delay bound minus the demand.
    """
    if not candidate_rate > 0.0:
        raise ValueError("candidate rate demand must be > 0")
    if not d_max > 0.0:
        raise ValueError("d_max must be > 0")
    if not 0.0 < p_th < 1.0:
        raise ValueError("p_th must lie in (0, 1)")

    cfg_next = replace(cfg, n_laa=cfg.n_laa + len(current) + 1)
    op = _shared_op(cfg_next)
    avg = mean_throughput(link, cfg_next, op)

    if eta is None:
        eta = min(1.0, candidate_rate / avg)
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")

    if eta <= p_th:
        # the violation target is met by the arrival ratio alone; only
        # the rate axis constrains admission
        margin = avg - candidate_rate
        return AdmissionDecision(
            accepted=margin > 0.0, margin=margin, boundary_rate=avg,
            theta_star=math.nan, eta=eta,
            reason="" if margin > 0.0 else "demand exceeds the mean service rate",
        )

    log_ratio = math.log(eta / p_th)

    def delay_bound(theta: float) -> float:
        c = effcap_closed_form(link, cfg_next, op, theta).c_theta
        if c <= 0.0:
            return math.inf
        return log_ratio / (theta * c)

    # the bound decreases in theta; scan for a crossing, then bisect
    grid = [10.0 ** (-9.0 + 8.0 * i / 80.0) for i in range(81)]
    th_hi = None
    th_lo = None
    for th in grid:
        if delay_bound(th) <= d_max:
            th_hi = th
            break
        th_lo = th
    if th_hi is None:
        return AdmissionDecision(
            accepted=False, margin=-math.inf, boundary_rate=0.0,
            theta_star=math.nan, eta=eta,
            reason=f"no QoS exponent meets d_max={d_max:g} at p_th={p_th:g}",
        )
    if th_lo is not None:
        for _ in range(100):
            mid = math.sqrt(th_lo * th_hi)
            if mid == th_lo or mid == th_hi:
                break
            if delay_bound(mid) > d_max:
                th_lo = mid
            else:
                th_hi = mid
    theta_star = th_hi  # smallest exponent meeting the bound
    boundary_rate = effcap_closed_form(link, cfg_next, op, theta_star).c_theta
    margin = boundary_rate - candidate_rate
    return AdmissionDecision(
        accepted=margin >= 0.0, margin=margin, boundary_rate=boundary_rate,
        theta_star=theta_star, eta=eta,
        reason="" if margin >= 0.0 else "demand exceeds the boundary rate",
    )
