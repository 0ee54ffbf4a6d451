"""Effective-capacity solvers for the contention link.

Two independent routes to the same number:

``effcap_closed_form``
    Root of the scalar fixed-point equation tying the service-process
    MGF to the candidate capacity ``c``:

        (1 - q) * t1(theta*c) * [exp((c - R)*theta*t_f) * (1 - eps)
                                 + exp(c*theta*t_f) * eps]
            + q * t2(theta*c)  =  1,          q = p_laa ** retry_limit

    where t1/t2 are the conditional backoff-delay MGFs from
    :mod:`effcap.mac`, R the instantaneous rate and eps the residual
    packet error probability of a collision-free transmission.

``effcap_spectral``
    Generic semi-Markov route: the capacity is the ``c`` at which the
    spectral radius of diag(duration MGFs at theta*(c - reward_i)) @ P
    equals one.  ``four_state_model`` builds the service chain of the
    contention link (ON, collision-free-but-lost, backoff-to-delivery,
    backoff-to-drop) whose radius condition is algebraically identical
    to the closed form; the generic solver also accepts any other
    semi-Markov reward model, which the tests exploit.

All functions are pure; inputs are frozen dataclasses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    InfeasibleModelError,
    MonotonicityError,
    TransformDivergenceError,
)
from .mac import (
    ContentionConfig,
    MacOperatingPoint,
    backoff_transforms,
    mean_delay_delivered,
    mean_delay_dropped,
    pgf_delivered,
    pgf_dropped,
    solve_operating_point,
)

_BISECT_MAX_ITER = 200
_RESIDUAL_TOL = 1e-9
_MONOTONE_PROBES = 16


@dataclass(frozen=True)
class LinkParams:
    """Physical-layer view of the tagged link.

    ``rate_r`` is the instantaneous rate while transmitting (bits/second)
    and ``per_eps`` the probability that a collision-free transmission is
    still lost to the channel.
    """

    rate_r: float
    per_eps: float = 0.0

    def __post_init__(self):
        if not self.rate_r > 0.0:
            raise ValueError("rate_r must be > 0")
        if not 0.0 <= self.per_eps <= 1.0:
            raise ValueError("per_eps must lie in [0, 1]")


@dataclass(frozen=True)
class QosSpec:
    """Statistical QoS target: exponent, delay bound and violation cap."""

    theta: float
    d_max: float
    p_th: float
    eta: float = 1.0

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError("theta must be > 0")
        if not self.d_max > 0.0:
            raise ValueError("d_max must be > 0")
        if not 0.0 < self.p_th < 1.0:
            raise ValueError("p_th must lie in (0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")


@dataclass(frozen=True)
class EffCapResult:
    """Solved effective capacity at one QoS exponent."""

    c_theta: float
    theta: float
    solver: str
    residual: float
    bracket: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.bracket
        if not (lo - 1e-12 <= self.c_theta <= hi * (1.0 + 1e-12) + 1e-12):
            raise ValueError("c_theta must lie inside the solve bracket")
        if self.residual > _RESIDUAL_TOL:
            raise ValueError("residual exceeds solver tolerance")


@dataclass(frozen=True)
class SemiMarkovModel:
    """Semi-Markov reward source: embedded chain, per-state duration MGFs
    (callables of the exponent argument) and per-state reward rates."""

    p_matrix: np.ndarray
    duration_mgfs: tuple[Callable[[float], float], ...]
    reward_rates: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.p_matrix, dtype=float)
        object.__setattr__(self, "p_matrix", p)
        n = len(self.reward_rates)
        if p.shape != (n, n) or len(self.duration_mgfs) != n:
            raise ValueError("p_matrix, duration_mgfs and reward_rates disagree on n")
        if np.any(p < -1e-15) or np.any(p > 1.0 + 1e-15):
            raise ValueError("p_matrix entries must lie in [0, 1]")
        rows = p.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("p_matrix rows must sum to 1 within 1e-12")
        for i, mgf in enumerate(self.duration_mgfs):
            if abs(mgf(0.0) - 1.0) > 1e-12:
                raise ValueError(f"duration MGF {i} must equal 1 at argument 0")


def spectral_radius(model: SemiMarkovModel, theta: float, c: float) -> float:
    """Perron root of diag(MGF_i(theta*(c - r_i))) @ P."""
    gammas = np.array(
        [
            mgf(theta * (c - r))
            for mgf, r in zip(model.duration_mgfs, model.reward_rates)
        ]
    )
    if not np.all(np.isfinite(gammas)):
        raise InfeasibleModelError("duration MGF not finite at requested argument")
    rho = float(np.max(np.abs(np.linalg.eigvals(gammas[:, None] * model.p_matrix))))
    if not math.isfinite(rho):
        raise InfeasibleModelError("spectral radius is not finite")
    return rho


def _bisect(f, lo, hi, max_iter=_BISECT_MAX_ITER):
    """Sign-change bisection; f(lo) <= 0 <= f(hi) assumed checked."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inf_on_divergence(f):
    """Both solve targets are increasing in c, so a transform that
    overflows at some c means the target is far above its root there;
    map divergence to +inf instead of failing the solve."""

    def wrapped(c):
        try:
            return f(c)
        except (TransformDivergenceError, OverflowError):
            return math.inf

    return wrapped


def effcap_spectral(model: SemiMarkovModel, theta: float) -> EffCapResult:
    """Effective capacity of a semi-Markov reward source.

    Bisects the spectral-radius condition rho(theta, c) = 1 over
    c in [0, max reward rate]; the radius must be monotone over the
    bracket or the root is not trusted.
    """
    if not theta > 0.0:
        raise ValueError("theta must be > 0")
    r_max = max(model.reward_rates)
    if not r_max > 0.0:
        raise ValueError("at least one reward rate must be positive")

    rho = _inf_on_divergence(lambda c: spectral_radius(model, theta, c))
    probes = [rho(r_max * i / (_MONOTONE_PROBES - 1)) for i in range(_MONOTONE_PROBES)]
    for a, b in zip(probes, probes[1:]):
        if b < a - 1e-12:
            raise MonotonicityError(
                "spectral radius is not monotone in c over the bracket"
            )
    rho_lo, rho_hi = probes[0], probes[-1]
    if rho_lo > 1.0 + 1e-12 or rho_hi < 1.0 - 1e-12:
        raise InfeasibleModelError(
            f"no spectral root in bracket: rho(0)={rho_lo:.12g}, "
            f"rho(r_max)={rho_hi:.12g}"
        )

    c = _bisect(lambda x: rho(x) - 1.0, 0.0, r_max)
    residual = abs(spectral_radius(model, theta, c) - 1.0)
    if residual > _RESIDUAL_TOL:
        raise ConvergenceError("spectral solve residual above tolerance", residual)
    return EffCapResult(
        c_theta=c, theta=theta, solver="spectral", residual=residual,
        bracket=(0.0, r_max),
    )


def four_state_model(
    link: LinkParams, cfg: ContentionConfig, op_pt: MacOperatingPoint
) -> SemiMarkovModel:
    """Service chain of the contention link.

    States: 0 = transmitting and delivering (reward rate_r), 1 =
    collision-free transmission lost to the channel, 2 = backoff of a
    packet that reaches a collision-free attempt, 3 = backoff-plus-
    collisions of a packet dropped at the retry limit.
    """
    q = op_pt.p_laa**cfg.retry_limit
    eps = link.per_eps
    after_tx = [0.0, 0.0, 1.0 - q, q]
    p = np.array([after_tx, after_tx, [1.0 - eps, eps, 0.0, 0.0], after_tx])
    t_f = cfg.t_f
    return SemiMarkovModel(
        p_matrix=p,
        duration_mgfs=(
            lambda s: math.exp(s * t_f),
            lambda s: math.exp(s * t_f),
            lambda s: pgf_delivered(cfg, op_pt, s),
            lambda s: pgf_dropped(cfg, op_pt, s),
        ),
        reward_rates=(link.rate_r, 0.0, 0.0, 0.0),
    )


def _fixed_point_lhs(link, cfg, op_pt, theta, c):
    t1, _, t2, _ = backoff_transforms(cfg, op_pt, theta * c)
    q = op_pt.p_laa**cfg.retry_limit
    eps = link.per_eps
    a = math.exp((c - link.rate_r) * theta * cfg.t_f)
    b = math.exp(c * theta * cfg.t_f)
    return (1.0 - q) * t1 * (a * (1.0 - eps) + b * eps) + q * t2


def effcap_closed_form(
    link: LinkParams,
    cfg: ContentionConfig,
    op_pt: MacOperatingPoint,
    theta: float,
) -> EffCapResult:
    """Effective capacity from the scalar service fixed-point equation."""
    if not theta > 0.0:
        raise ValueError("theta must be > 0")
    r = link.rate_r
    lhs = _inf_on_divergence(lambda c: _fixed_point_lhs(link, cfg, op_pt, theta, c))

    probes = [lhs(r * i / (_MONOTONE_PROBES - 1)) for i in range(_MONOTONE_PROBES)]
    for a, b in zip(probes, probes[1:]):
        if b < a - 1e-12:
            raise MonotonicityError(
                "fixed-point equation is not monotone in c over [0, rate_r]"
            )
    if probes[0] > 1.0 + 1e-12:
        raise InfeasibleModelError(
            f"fixed-point equation exceeds 1 at c=0 (lhs={probes[0]:.12g})"
        )
    if probes[-1] < 1.0 - 1e-12:
        raise InfeasibleModelError(
            f"fixed-point equation stays below 1 at c=rate_r "
            f"(lhs={probes[-1]:.12g})"
        )

    c = _bisect(lambda x: lhs(x) - 1.0, 0.0, r)
    residual = abs(lhs(c) - 1.0)
    if residual > _RESIDUAL_TOL:
        raise ConvergenceError("closed-form residual above tolerance", residual)
    return EffCapResult(
        c_theta=c, theta=theta, solver="closed_form", residual=residual,
        bracket=(0.0, r),
    )


def mean_throughput(
    link: LinkParams, cfg: ContentionConfig, op_pt: MacOperatingPoint
) -> float:
    """Long-run average delivered rate (the theta -> 0 capacity limit).

    One packet journey ends in a delivered transmission (probability
    (1-q)(1-eps)), a channel loss, or a drop; only the first earns
    rate_r * t_f bits.
    """
    q = op_pt.p_laa**cfg.retry_limit
    num = link.rate_r * cfg.t_f * (1.0 - link.per_eps) * (1.0 - q)
    cycle = (1.0 - q) * (cfg.t_f + mean_delay_delivered(cfg, op_pt)) + (
        q * mean_delay_dropped(cfg, op_pt)
    )
    return num / cycle


def delay_violation(c: EffCapResult, spec: QosSpec) -> float:
    """Model delay-violation probability eta * exp(-theta*C*d_max),
    clipped to 1."""
    if not math.isclose(c.theta, spec.theta, rel_tol=1e-12):
        raise ValueError("capacity was solved at a different theta than the spec")
    return min(1.0, spec.eta * math.exp(-spec.theta * c.c_theta * spec.d_max))


@dataclass(frozen=True)
class RegionPoint:
    """One boundary point of the supportable (rate, delay-bound) region."""

    theta: float
    rate: float
    d_max: float


def qos_region(
    link: LinkParams,
    cfg: ContentionConfig,
    p_th: float,
    eta: float | None,
    theta_grid: Sequence[float],
) -> tuple[list[RegionPoint], list[str]]:
    """Trace the QoS-region boundary over a grid of exponents.

    For each theta the supportable arrival rate is C(theta) and the
    tightest delay bound d_max solves eta * exp(-theta*C*d) = p_th.
    When ``eta`` is None it defaults per point to the ratio of the
    boundary rate to the long-run average rate.  Points where the
    capacity vanishes (or the bound is not positive) are skipped and
    reported in the warnings list.
    """
    if not 0.0 < p_th < 1.0:
        raise ValueError("p_th must lie in (0, 1)")
    grid = list(theta_grid)
    if not grid or any(t <= 0.0 for t in grid):
        raise ValueError("theta_grid must be non-empty and positive")
    if sorted(grid) != grid:
        raise ValueError("theta_grid must be ascending")

    points: list[RegionPoint] = []
    warnings: list[str] = []
    op_pt = solve_operating_point(cfg)
    avg = mean_throughput(link, cfg, op_pt)
    prev_rate = math.inf
    for theta in grid:
        res = effcap_closed_form(link, cfg, op_pt, theta)
        c = res.c_theta
        if c <= 1e-9 * link.rate_r:
            warnings.append(f"theta={theta:.6g}: capacity is zero, point omitted")
            continue
        eta_pt = eta if eta is not None else min(1.0, c / avg)
        log_ratio = math.log(eta_pt / p_th)
        if log_ratio <= 0.0:
            warnings.append(
                f"theta={theta:.6g}: violation target met at zero delay, "
                "point omitted"
            )
            continue
        if c > prev_rate * (1.0 + 1e-9):
            raise MonotonicityError("region boundary rate increased with theta")
        prev_rate = c
        points.append(RegionPoint(theta=theta, rate=c, d_max=log_ratio / (theta * c)))
    return points, warnings
