"""Contention MAC model: saturated fixed point and backoff-delay transforms.

The channel is abstracted as a slotted process.  Every backoff counter
decrements once per slot; a slot occupied by other traffic is not skipped
but simply lasts longer (the busy period is absorbed into that slot's
duration).  From the tagged transmitter's point of view a slot therefore
falls into one of three classes: idle, another node's successful
transmission, or a collision.

``solve_operating_point`` computes per-class transmission probabilities
with the usual decoupling approximation (each attempt of the tagged node
collides independently with probability ``p_laa``), and the ``pgf_*``
functions turn the resulting slot-class mixture into moment generating
functions of the random delay a packet accumulates before it is either
delivered or dropped.  Everything here is a pure function of its inputs;
the configs are frozen and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    ConvergenceError,
    InfeasibleModelError,
    MultipleRootsError,
    TransformDivergenceError,
)

_PICARD_DAMPING = 0.5
_PICARD_MAX_ITER = 10_000
_PICARD_TOL = 1e-10
_SWEEP_POINTS = 801


class Policy(Enum):
    """Contention-window policy of the tagged transmitter's class."""

    FCW = "fcw"  # fixed window on every attempt
    VCW = "vcw"  # binary exponential growth, capped at max_stage doublings


@dataclass(frozen=True)
class ContentionConfig:
    """Static parameters of one contention domain.

    ``n_laa`` counts unlicensed-band transmitters (the tagged one
    included), ``m_wifi`` counts coexisting Wi-Fi stations.  Durations are
    seconds: ``sigma`` is the idle slot, ``t_f`` one collision-free
    transmission of the tagged node, ``t_s``/``t_c`` the slot durations
    observed during another node's success and during a collision.  When
    ``t_s``/``t_c`` are not given they default to ``t_f + sigma``.
    """

    n_laa: int
    m_wifi: int
    policy: Policy
    w0: int
    max_stage: int
    retry_limit: int
    sigma: float
    t_f: float
    t_s: float | None = None
    t_c: float | None = None
    wifi_w0: int = 16
    wifi_max_stage: int = 6
    wifi_retry_limit: int = 7

    def __post_init__(self):
        if self.t_s is None:
            object.__setattr__(self, "t_s", self.t_f + self.sigma)
        if self.t_c is None:
            object.__setattr__(self, "t_c", self.t_f + self.sigma)
        _require(self.n_laa >= 1, "n_laa must be >= 1")
        _require(self.m_wifi >= 0, "m_wifi must be >= 0")
        _require(isinstance(self.policy, Policy), "policy must be a Policy")
        _require(self.w0 >= 1, "w0 must be >= 1")
        _require(self.max_stage >= 0, "max_stage must be >= 0")
        _require(self.retry_limit >= 1, "retry_limit must be >= 1")
        _require(self.wifi_w0 >= 1, "wifi_w0 must be >= 1")
        _require(self.wifi_max_stage >= 0, "wifi_max_stage must be >= 0")
        _require(self.wifi_retry_limit >= 1, "wifi_retry_limit must be >= 1")
        _require(self.sigma > 0, "sigma must be > 0")
        _require(self.t_f > 0, "t_f must be > 0")
        _require(self.t_s >= self.sigma, "t_s must be >= sigma")
        _require(self.t_c >= self.sigma, "t_c must be >= sigma")

    def window(self, attempt: int) -> int:
        """Contention window of the tagged class on a 1-based attempt."""
        if self.policy is Policy.FCW:
            return self.w0
        return self.w0 << min(attempt - 1, self.max_stage)

    def windows(self) -> list[int]:
        return [self.window(k) for k in range(1, self.retry_limit + 1)]

    def wifi_windows(self) -> list[int]:
        return [
            self.wifi_w0 << min(k, self.wifi_max_stage)
            for k in range(self.wifi_retry_limit)
        ]


@dataclass(frozen=True)
class MacOperatingPoint:
    """Solved stationary point of the contention domain.

    ``tau_*`` are per-slot transmission probabilities, ``p_*`` the
    conditional collision probabilities of one attempt.  The ``p_idle`` /
    ``p_other_succ`` / ``p_other_coll`` triple partitions the slots the
    tagged node observes while it is counting down.
    """

    tau_laa: float
    tau_wifi: float
    p_laa: float
    p_wifi: float
    p_idle: float
    p_other_succ: float
    p_other_coll: float

    def __post_init__(self):
        total = self.p_idle + self.p_other_succ + self.p_other_coll
        _require(abs(total - 1.0) <= 1e-12, "slot-class probabilities must sum to 1")
        for name in ("tau_laa", "tau_wifi", "p_wifi", "p_idle", "p_other_succ",
                     "p_other_coll"):
            v = getattr(self, name)
            _require(0.0 <= v <= 1.0, f"{name} must lie in [0, 1]")
        _require(0.0 <= self.p_laa < 1.0, "p_laa must lie in [0, 1)")


def _require(cond: bool, message: str):
    if not cond:
        raise ValueError(message)


def _tau_from_windows(p: float, windows: list[int]) -> float:
    # Renewal argument over one packet: attempt k is reached with
    # probability p^(k-1) and spends (W_k - 1)/2 backoff slots plus the
    # transmission slot itself.  For a fixed window this collapses to
    # 2 / (w0 + 1) independently of p.
    attempts = 0.0
    slots = 0.0
    pk = 1.0
    for w in windows:
        attempts += pk
        slots += pk * (w + 1)
        pk *= p
    return 2.0 * attempts / slots


def _collision_probs(tau_l, tau_w, n, m):
    p_l = 1.0 - (1.0 - tau_l) ** (n - 1) * (1.0 - tau_w) ** m
    p_w = 1.0 - (1.0 - tau_l) ** n * (1.0 - tau_w) ** (m - 1) if m >= 1 else 0.0
    return p_l, p_w


def _solve_wifi_inner(cfg: ContentionConfig, tau_l: float) -> float:
    """Wi-Fi transmission probability consistent with a given tau_laa."""
    if cfg.m_wifi == 0:
        return 0.0
    wins = cfg.wifi_windows()

    def excess(p_w):
        tw = _tau_from_windows(p_w, wins)
        other = 1.0 - (1.0 - tau_l) ** cfg.n_laa * (1.0 - tw) ** (cfg.m_wifi - 1)
        return p_w - other

    lo, hi = 0.0, 1.0 - 1e-12
    if excess(lo) >= 0.0:
        return _tau_from_windows(0.0, wins)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return _tau_from_windows(0.5 * (lo + hi), wins)


def _verify_single_root(cfg: ContentionConfig):
    """Sign-change sweep over candidate p_laa values.

    The damped iteration in solve_operating_point does not prove
    uniqueness, so we scan the 1-D residual h(p) = p - p_implied(p) and
    refuse configurations where it crosses zero more than once.
    """
    n, m = cfg.n_laa, cfg.m_wifi
    wins = cfg.windows()
    crossings = 0
    prev = None
    for i in range(_SWEEP_POINTS):
        p = i / (_SWEEP_POINTS - 1) * (1.0 - 1e-9)
        tau_l = _tau_from_windows(p, wins)
        tau_w = _solve_wifi_inner(cfg, tau_l)
        h = p - (1.0 - (1.0 - tau_l) ** (n - 1) * (1.0 - tau_w) ** m)
        if prev is not None and (prev < 0.0) != (h < 0.0):
            crossings += 1
        prev = h
    if crossings > 1:
        raise MultipleRootsError(
            f"operating-point sweep found {crossings} sign changes for "
            f"n_laa={n}, m_wifi={m}"
        )


def solve_operating_point(cfg: ContentionConfig) -> MacOperatingPoint:
    """Solve the coupled transmission/collision fixed point.

    Damped Picard iteration on (tau_laa, tau_wifi); raises
    ConvergenceError if the residual stays above tolerance, and
    MultipleRootsError if the verification sweep detects a second root.
    """
    n, m = cfg.n_laa, cfg.m_wifi
    wins = cfg.windows()
    tau_l = _tau_from_windows(0.0, wins)
    tau_w = _tau_from_windows(0.0, cfg.wifi_windows()) if m >= 1 else 0.0

    residual = math.inf
    for _ in range(_PICARD_MAX_ITER):
        p_l, p_w = _collision_probs(tau_l, tau_w, n, m)
        new_l = _tau_from_windows(p_l, wins)
        new_w = _tau_from_windows(p_w, cfg.wifi_windows()) if m >= 1 else 0.0
        residual = max(abs(new_l - tau_l), abs(new_w - tau_w))
        if residual <= _PICARD_TOL:
            break
        tau_l += _PICARD_DAMPING * (new_l - tau_l)
        tau_w += _PICARD_DAMPING * (new_w - tau_w)
    else:
        raise ConvergenceError(
            f"operating point did not converge within {_PICARD_MAX_ITER} "
            f"iterations (residual {residual:.3e})",
            residual=residual,
        )

    if n > 1 or m > 0:
        _verify_single_root(cfg)

    p_l, p_w = _collision_probs(tau_l, tau_w, n, m)
    if p_l >= 1.0 - 1e-12:
        raise InfeasibleModelError(
            "every slot collides (p_laa -> 1); the configuration is degenerate"
        )

    one_l = 1.0 - tau_l
    one_w = 1.0 - tau_w
    p_idle = one_l ** (n - 1) * one_w**m
    p_succ = 0.0
    if n >= 2:
        p_succ += (n - 1) * tau_l * one_l ** (n - 2) * one_w**m
    if m >= 1:
        p_succ += m * tau_w * one_w ** (m - 1) * one_l ** (n - 1)
    p_coll = 1.0 - p_idle - p_succ
    if -1e-15 <= p_coll < 0.0:
        p_coll = 0.0

    return MacOperatingPoint(
        tau_laa=tau_l,
        tau_wifi=tau_w,
        p_laa=p_l,
        p_wifi=p_w,
        p_idle=p_idle,
        p_other_succ=p_succ,
        p_other_coll=p_coll,
    )


# ---------------------------------------------------------------------------
# Delay transforms
# ---------------------------------------------------------------------------


def _exp(x: float) -> float:
    if x > 709.0:
        raise TransformDivergenceError(f"exp overflow at argument {x:.6g}")
    return math.exp(x)


def slot_mgf(cfg: ContentionConfig, op_pt: MacOperatingPoint, s: float) -> float:
    """E[exp(s * slot duration)] for one observed backoff slot."""
    return (
        op_pt.p_idle * _exp(s * cfg.sigma)
        + op_pt.p_other_succ * _exp(s * cfg.t_s)
        + op_pt.p_other_coll * _exp(s * cfg.t_c)
    )


def _slot_mgf_deriv(cfg, op_pt, s):
    return (
        op_pt.p_idle * cfg.sigma * _exp(s * cfg.sigma)
        + op_pt.p_other_succ * cfg.t_s * _exp(s * cfg.t_s)
        + op_pt.p_other_coll * cfg.t_c * _exp(s * cfg.t_c)
    )


def _stage_transform(g: float, dg: float, w: int) -> tuple[float, float]:
    """MGF (and d/ds) of one backoff stage: uniform{0..w-1} slots, each
    with slot transform g(s).  Returns (B, dB/ds)."""
    if w == 1:
        return 1.0, 0.0
    d = g - 1.0
    if abs(d) * w < 1e-3:
        # series in (g - 1); exact coefficients of the finite geometric sum
        b = (
            1.0
            + d * (w - 1) / 2.0
            + d * d * (w - 1) * (w - 2) / 6.0
            + d * d * d * (w - 1) * (w - 2) * (w - 3) / 24.0
        )
        dbdg = (
            (w - 1) / 2.0
            + d * (w - 1) * (w - 2) / 3.0
            + d * d * (w - 1) * (w - 2) * (w - 3) / 8.0
        )
        return b, dbdg * dg
    if g > 1.0 and w * math.log(g) > 700.0:
        raise TransformDivergenceError(
            f"stage transform overflows (w={w}, g={g:.6g})"
        )
    gw = g**w
    b = (gw - 1.0) / (w * d)
    dbdg = (w * (gw / g) * d - (gw - 1.0)) / (w * d * d)
    return b, dbdg * dg


def backoff_transforms(
    cfg: ContentionConfig, op_pt: MacOperatingPoint, s: float
) -> tuple[float, float, float, float]:
    """Conditional delay MGFs of the tagged node's backoff process.

    Returns (t1, t1', t2, t2') at exponent rate ``s``, where t1 is
    E[exp(s*D) | delivered] over the random pre-transmission delay D of a
    packet that reaches a collision-free attempt within the retry limit,
    and t2 the same for a packet dropped after retry_limit collisions.
    Primes are derivatives in s (so t1'(0) is the mean delivered-packet
    backoff delay).
    """
    p = op_pt.p_laa
    k_max = cfg.retry_limit
    if s * cfg.t_c * k_max > 700.0:
        raise TransformDivergenceError("collision factor overflows")
    g = slot_mgf(cfg, op_pt, s)
    dg = _slot_mgf_deriv(cfg, op_pt, s)
    e_c = math.exp(s * cfg.t_c)

    prod, dprod = 1.0, 0.0
    total, dtotal = 0.0, 0.0
    pk = 1.0
    ec_pow, dec_pow = 1.0, 0.0  # exp(s*t_c*(k-1)) and its s-derivative
    for k in range(1, k_max + 1):
        b, db = _stage_transform(g, dg, cfg.window(k))
        prod, dprod = prod * b, dprod * b + prod * db
        weight = pk * (1.0 - p)
        total += weight * prod * ec_pow
        dtotal += weight * (dprod * ec_pow + prod * dec_pow)
        pk *= p
        ec_pow *= e_c
        dec_pow = ec_pow * cfg.t_c * k
    denom = 1.0 - p**k_max
    t1 = total / denom
    dt1 = dtotal / denom
    # dropped packets: all retry_limit stages plus retry_limit collisions
    ec_k = math.exp(s * cfg.t_c * k_max)
    t2 = prod * ec_k
    dt2 = (dprod + prod * cfg.t_c * k_max) * ec_k
    for v in (t1, dt1, t2, dt2):
        if not math.isfinite(v):
            raise TransformDivergenceError("backoff transform is not finite")
    return t1, dt1, t2, dt2


def pgf_delivered(cfg: ContentionConfig, op_pt: MacOperatingPoint, s: float) -> float:
    """E[exp(s*D)] of the pre-transmission delay of a delivered packet."""
    return backoff_transforms(cfg, op_pt, s)[0]


def pgf_dropped(cfg: ContentionConfig, op_pt: MacOperatingPoint, s: float) -> float:
    """E[exp(s*D)] of the total delay of a packet dropped after the
    retry limit."""
    return backoff_transforms(cfg, op_pt, s)[2]


def mean_slot_duration(cfg: ContentionConfig, op_pt: MacOperatingPoint) -> float:
    return _slot_mgf_deriv(cfg, op_pt, 0.0)


def mean_delay_delivered(cfg: ContentionConfig, op_pt: MacOperatingPoint) -> float:
    return backoff_transforms(cfg, op_pt, 0.0)[1]


def mean_delay_dropped(cfg: ContentionConfig, op_pt: MacOperatingPoint) -> float:
    return backoff_transforms(cfg, op_pt, 0.0)[3]
