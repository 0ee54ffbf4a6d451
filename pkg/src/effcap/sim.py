"""Slot-level simulator of the contention link.

The engine advances one medium event ("slot") at a time, mirroring the
abstraction behind the analytical model: every backoff counter freezes
while the medium is busy and the busy period is absorbed into the slot
that triggered it.  A slot therefore falls into one of four classes,
each with a fixed wall-clock duration:

    idle                      sigma
    collision (any nodes)     t_c
    tagged transmission       t_f   (success or channel loss)
    other-node success        t_s

The clock is the dot product of four integer slot counts with those
durations, so simulated time carries no accumulation drift regardless
of run length.

Only the tagged node has a queue, fed at a constant bit rate; all other
nodes always contend.  A channel loss (probability ``per_eps``, tagged
sole transmissions only) puts the head packet back at a fresh
first-stage backoff with a full retry budget.  Runs of idle slots are
skipped in one step, capped so block boundaries, warmup, and pending
arrivals still land exactly.

Estimators operate on per-block service sums: the capacity estimate is
the normalized log of the empirical service MGF with a jackknife
standard error, and delay-violation probabilities carry Wilson score
intervals.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, fields

import numpy as np

from .errors import InsufficientDataError
from .mac import ContentionConfig

_WILSON_Z = 1.959963984540054  # two-sided 95%
_MIN_BLOCKS = 100
_MIN_DELAY_SAMPLES = 1000


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``tagged_arrival_rate`` is a constant arrival rate in bits per
    second (one packet_size-sized packet every packet_size/rate
    seconds, the first at one full interval); ``math.inf`` means the
    tagged queue never empties and ``0.0`` means it never fills.
    ``record_trace`` additionally collects one record per completed
    tagged packet.
    """

    cfg: ContentionConfig
    horizon_slots: int
    seed: int
    packet_size: float
    tagged_arrival_rate: float = math.inf
    per_eps: float = 0.0
    # 4000-slot blocks keep lag-1 autocorrelation of block sums under
    # 0.05 in saturated pilot runs up to N+M=10; shorter blocks trade
    # independence for tail resolution at large theta
    block_slots: int = 4000
    warmup_slots: int = 2000
    record_trace: bool = False

    def __post_init__(self):
        if self.horizon_slots < 1:
            raise ValueError("horizon_slots must be >= 1")
        if not self.packet_size > 0.0:
            raise ValueError("packet_size must be > 0")
        if not 0.0 <= self.per_eps <= 1.0:
            raise ValueError("per_eps must lie in [0, 1]")
        if self.block_slots < 1:
            raise ValueError("block_slots must be >= 1")
        if not 0 <= self.warmup_slots < self.horizon_slots:
            raise ValueError("warmup_slots must lie in [0, horizon_slots)")
        if not (self.tagged_arrival_rate >= 0.0):  # also rejects nan
            raise ValueError("tagged_arrival_rate must be >= 0 or inf")


@dataclass(frozen=True)
class PacketRecord:
    """One completed tagged packet (trace output)."""

    packet_id: int
    arrival_s: float
    departure_s: float
    attempts: int
    outcome: str  # "delivered" | "dropped"


@dataclass(frozen=True)
class SimStats:
    """Run outcome.

    Bit accounting (arrived/delivered/dropped/backlog) and delays cover
    the whole run, so arrived_bits == delivered_bits + dropped_bits +
    backlog_bits holds exactly; in saturated mode each journey begun
    counts as one arrival.  Slot-class counts, attempt counts and block
    sums cover the post-warmup measurement window.
    """

    seed: int
    horizon_slots: int
    warmup_slots: int
    block_slots: int
    packet_size: float
    # whole run
    arrived_bits: float
    delivered_bits: float
    dropped_bits: float
    backlog_bits: float
    elapsed_time: float
    delays: tuple[float, ...]
    packet_trace: tuple[PacketRecord, ...]
    # measurement window
    slots_measured: int
    n_idle: int
    n_collision: int
    n_tagged_ok: int
    n_tagged_err: int
    n_other_success: int
    measured_time: float
    tagged_attempts: int
    tagged_collisions: int
    per_node_attempts: tuple[int, ...]
    per_node_collisions: tuple[int, ...]
    # estimator inputs
    block_bits: tuple[float, ...]
    block_durations: tuple[float, ...]

    @property
    def p_hat(self) -> float:
        """Empirical conditional collision probability of tagged attempts."""
        if self.tagged_attempts == 0:
            return math.nan
        return self.tagged_collisions / self.tagged_attempts

    @property
    def tau_hat(self) -> float:
        """Empirical per-slot transmission probability of the tagged node."""
        return self.tagged_attempts / self.slots_measured

    @property
    def throughput_bps(self) -> float:
        """Delivered tagged bits per second over the measurement window."""
        return self.n_tagged_ok * self.packet_size / self.measured_time

    def as_record(self) -> dict:
        """Scalar fields plus derived rates as a flat dict."""
        rec = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)):
                rec[f.name] = v
        rec["p_hat"] = self.p_hat
        rec["tau_hat"] = self.tau_hat
        rec["throughput_bps"] = self.throughput_bps
        return rec


def _node_windows(cfg: ContentionConfig) -> list[list[int]]:
    """Per-node backoff window ladder; index 0 is the tagged node."""
    laa = cfg.windows()
    wifi = cfg.wifi_windows()
    return [list(laa) for _ in range(cfg.n_laa)] + [
        list(wifi) for _ in range(cfg.m_wifi)
    ]


def run_sim(sc: SimConfig) -> SimStats:
    cfg = sc.cfg
    rng = random.Random(sc.seed)
    wins = _node_windows(cfg)
    n_nodes = len(wins)
    saturated = math.isinf(sc.tagged_arrival_rate)

    # per-node contention state; stage is the 1-based attempt index
    stage = [1] * n_nodes
    counter = [rng.randrange(w[0]) for w in wins]
    tagged_active = saturated

    # tagged queue holds arrival timestamps (finite-rate mode only)
    queue: deque[float] = deque()
    interarrival = math.inf
    next_arrival = math.inf
    if not saturated and sc.tagged_arrival_rate > 0.0:
        interarrival = sc.packet_size / sc.tagged_arrival_rate
        next_arrival = interarrival

    sigma, t_f = cfg.sigma, cfg.t_f
    t_s, t_c = cfg.t_s, cfg.t_c

    # whole-run slot-class counts; the clock derives from these alone
    g_idle = g_coll = g_tok = g_terr = g_osucc = 0

    def clock() -> float:
        return g_idle * sigma + g_coll * t_c + (g_tok + g_terr) * t_f + g_osucc * t_s

    # measurement-window counts
    m_idle = m_coll = m_tok = m_terr = m_osucc = 0
    tagged_attempts = tagged_collisions = 0
    per_node_attempts = [0] * n_nodes
    per_node_collisions = [0] * n_nodes

    arrivals = 1 if saturated else 0  # saturated: first journey is open
    delivered = dropped = 0
    delays: list[float] = []
    trace: list[PacketRecord] = []
    head_arrival = 0.0  # saturated mode: when the head packet took the floor
    head_attempts = 0

    block_bits: list[float] = []
    block_durations: list[float] = []
    cur_bits = 0.0
    block_start_time = 0.0
    block_start_slot = sc.warmup_slots

    def restart_tagged():
        stage[0] = 1
        counter[0] = rng.randrange(wins[0][0])

    def close_packet(outcome: str):
        nonlocal head_arrival, head_attempts
        if sc.record_trace:
            trace.append(
                PacketRecord(
                    packet_id=delivered + dropped - 1,
                    arrival_s=head_arrival,
                    departure_s=clock(),
                    attempts=head_attempts,
                    outcome=outcome,
                )
            )
        head_attempts = 0

    slot = 0
    while slot < sc.horizon_slots:
        start = 0 if tagged_active else 1
        transmitters = [i for i in range(start, n_nodes) if counter[i] == 0]

        if not transmitters:
            # idle run: every slot until the smallest counter reaches 0
            # (or a structural boundary) is idle
            if n_nodes > start:
                run = min(counter[start:])
            else:
                run = sc.horizon_slots - slot  # nobody contends at all
            run = min(max(run, 1), sc.horizon_slots - slot)
            if slot < sc.warmup_slots:
                run = min(run, sc.warmup_slots - slot)
            else:
                run = min(run, block_start_slot + sc.block_slots - slot)
            if next_arrival < math.inf:
                gap = next_arrival - clock()
                run = min(run, max(1, math.ceil(gap / sigma)))
            g_idle += run
            if slot >= sc.warmup_slots:
                m_idle += run
            for i in range(start, n_nodes):
                counter[i] -= run
            slot += run
        else:
            measured = slot >= sc.warmup_slots
            # backoff of everyone not transmitting shrinks by one slot
            for j in range(start, n_nodes):
                if counter[j] > 0:
                    counter[j] -= 1
            if len(transmitters) >= 2:
                g_coll += 1
                if measured:
                    m_coll += 1
                for i in transmitters:
                    if measured:
                        per_node_attempts[i] += 1
                        per_node_collisions[i] += 1
                    if i == 0:
                        if measured:
                            tagged_attempts += 1
                            tagged_collisions += 1
                        head_attempts += 1
                        stage[0] += 1
                        if stage[0] > cfg.retry_limit:
                            dropped += 1
                            close_packet("dropped")
                            if saturated:
                                arrivals += 1
                                head_arrival = clock()
                                restart_tagged()
                            else:
                                queue.popleft()
                                if queue:
                                    head_arrival = queue[0]
                                    restart_tagged()
                                else:
                                    tagged_active = False
                        else:
                            counter[0] = rng.randrange(wins[0][stage[0] - 1])
                    else:
                        stage[i] += 1
                        if stage[i] > len(wins[i]):
                            stage[i] = 1
                        counter[i] = rng.randrange(wins[i][stage[i] - 1])
            else:
                i = transmitters[0]
                if measured:
                    per_node_attempts[i] += 1
                if i == 0:
                    if measured:
                        tagged_attempts += 1
                    head_attempts += 1
                    if sc.per_eps > 0.0 and rng.random() < sc.per_eps:
                        g_terr += 1
                        if measured:
                            m_terr += 1
                        restart_tagged()  # same packet, fresh budget
                    else:
                        g_tok += 1
                        if measured:
                            m_tok += 1
                            cur_bits += sc.packet_size
                        delivered += 1
                        if saturated:
                            close_packet("delivered")
                            arrivals += 1
                            head_arrival = clock()
                            restart_tagged()
                        else:
                            t_arr = queue.popleft()
                            delays.append(clock() - t_arr)
                            close_packet("delivered")
                            if queue:
                                head_arrival = queue[0]
                                restart_tagged()
                            else:
                                tagged_active = False
                else:
                    g_osucc += 1
                    if measured:
                        m_osucc += 1
                    stage[i] = 1
                    counter[i] = rng.randrange(wins[i][0])
            slot += 1

        now = clock()
        while next_arrival <= now:
            arrivals += 1
            queue.append(next_arrival)
            if not tagged_active:
                tagged_active = True
                head_arrival = next_arrival
                restart_tagged()
            next_arrival += interarrival

        if slot == sc.warmup_slots:
            block_start_time = now
            block_start_slot = slot
        elif slot > sc.warmup_slots and slot - block_start_slot == sc.block_slots:
            block_bits.append(cur_bits)
            block_durations.append(now - block_start_time)
            cur_bits = 0.0
            block_start_time = now
            block_start_slot = slot

    backlog = 1 if saturated else len(queue)
    size = sc.packet_size
    return SimStats(
        seed=sc.seed,
        horizon_slots=sc.horizon_slots,
        warmup_slots=sc.warmup_slots,
        block_slots=sc.block_slots,
        packet_size=size,
        arrived_bits=arrivals * size,
        delivered_bits=delivered * size,
        dropped_bits=dropped * size,
        backlog_bits=backlog * size,
        elapsed_time=clock(),
        delays=tuple(delays),
        packet_trace=tuple(trace),
        slots_measured=sc.horizon_slots - sc.warmup_slots,
        n_idle=m_idle,
        n_collision=m_coll,
        n_tagged_ok=m_tok,
        n_tagged_err=m_terr,
        n_other_success=m_osucc,
        measured_time=m_idle * sigma
        + m_coll * t_c
        + (m_tok + m_terr) * t_f
        + m_osucc * t_s,
        tagged_attempts=tagged_attempts,
        tagged_collisions=tagged_collisions,
        per_node_attempts=tuple(per_node_attempts),
        per_node_collisions=tuple(per_node_collisions),
        block_bits=tuple(block_bits),
        block_durations=tuple(block_durations),
    )


@dataclass(frozen=True)
class EffCapEstimate:
    """Block-MGF capacity estimate with jackknife standard error."""

    c_hat: float
    stderr: float
    theta: float
    n_blocks: int


def estimate_effcap(stats: SimStats, theta: float) -> EffCapEstimate:
    """Capacity from per-block service sums.

    c_hat = -log( mean_b exp(-theta * s_b) ) / (theta * mean block
    duration); the jackknife leaves one block out at a time, with both
    the MGF mean and the duration mean recomputed.
    """
    if not theta > 0.0:
        raise ValueError("theta must be > 0")
    n = len(stats.block_bits)
    if n < _MIN_BLOCKS:
        raise InsufficientDataError(f"need at least {_MIN_BLOCKS} blocks, have {n}")
    s = np.asarray(stats.block_bits)
    d = np.asarray(stats.block_durations)
    a = -theta * s
    m = float(np.max(a))
    e = np.exp(a - m)
    tot = float(np.sum(e))

    log_mean = m + math.log(tot) - math.log(n)
    c_hat = -log_mean / (theta * float(np.mean(d))) + 0.0

    rest = tot - e
    if np.any(rest <= 0.0):
        raise InsufficientDataError(
            "service MGF estimate is dominated by a single block"
        )
    log_mean_loo = m + np.log(rest) - math.log(n - 1)
    d_loo = (float(np.sum(d)) - d) / (n - 1)
    c_loo = -log_mean_loo / (theta * d_loo)
    stderr = math.sqrt((n - 1) / n * float(np.sum((c_loo - np.mean(c_loo)) ** 2)))
    return EffCapEstimate(c_hat=c_hat, stderr=stderr, theta=theta, n_blocks=n)


@dataclass(frozen=True)
class DelayViolationEstimate:
    """Empirical delay-violation probability with a Wilson 95% interval."""

    p_hat: float
    ci_low: float
    ci_high: float
    n_samples: int


def wilson_interval(k: int, n: int) -> tuple[float, float]:
    """Two-sided 95% Wilson score interval for k successes in n trials."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = _WILSON_Z
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def estimate_delay_violation(stats: SimStats, d_max: float) -> DelayViolationEstimate:
    """Fraction of delivered packets whose queueing delay exceeded d_max."""
    if d_max < 0.0:
        raise ValueError("d_max must be >= 0")
    n = len(stats.delays)
    if n < _MIN_DELAY_SAMPLES:
        raise InsufficientDataError(
            f"need at least {_MIN_DELAY_SAMPLES} delay samples, have {n}"
        )
    k = sum(1 for x in stats.delays if x > d_max)
    lo, hi = wilson_interval(k, n)
    return DelayViolationEstimate(p_hat=k / n, ci_low=lo, ci_high=hi, n_samples=n)
