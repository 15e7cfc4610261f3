"""Slotted FIFO queue simulator for checking the LD delay estimate.

Random streams: ``numpy.random.SeedSequence(seed).spawn(2)`` feeds two
Philox generators, the first for the arrival chain (initial state, then one
uniform per period for the transition) and the second for the service draws
(one uniform per period). Periods are simulated in fixed-size chunks, so the
output depends only on the inputs and the seed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .arrivals import MarkovArrivalProcess, stationary_distribution
from .errors import InstabilityError
from .ld import THETA_CAP, find_theta_star, qos_from_theta
from .policy import PolicyMatrix, ServiceSpectrum, SystemParams, enumerate_leaves, mean_service_rate

CHUNK = 1 << 20
MAX_DELAY = 1 << 16
RING = 1 << 20
WORK_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int = 0
    warmup: int | None = None
    backlog_guard: float = 1e9

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 100)
        if not 0 <= self.warmup < self.horizon:
            raise ValueError(f"warmup must satisfy 0 <= warmup < horizon, got {self.warmup!r}")


@dataclass
class SimResult:
    """Work-weighted delay histogram of the batches that arrived after warmup.

    ``delay_histogram[d]`` is the work that left exactly ``d`` periods after
    arriving; ``overflow_mass`` collects delays of ``MAX_DELAY`` or more.
    """

    delay_histogram: np.ndarray
    delay_counts: np.ndarray
    overflow_mass: float
    mean_queue: float
    samples: int
    periods: int

    @property
    def total_mass(self) -> float:
        return float(self.delay_histogram.sum() + self.overflow_mass)

    def p_delay_empirical(self, d: int) -> float:
        """Fraction of work whose delay exceeds ``d`` periods."""
        total = self.total_mass
        if total == 0.0:
            return 0.0
        d = int(d)
        tail = self.delay_histogram[d + 1 :].sum() if d + 1 < len(self.delay_histogram) else 0.0
        return float(min(1.0, (tail + self.overflow_mass) / total))

    def exceedances(self, d: int) -> int:
        d = int(d)
        return int(self.delay_counts[d + 1 :].sum()) if d + 1 < len(self.delay_counts) else 0


@numba.njit(cache=True)
def _run_chunk(u_arr, u_srv, t0, warmup, cum_P, values, cdf_srv, rates,
               q_time, q_work, q_orig, ring, hist, counts, scal, guard):
    # scal: [head, size, state, backlog, lindley, queue_sum, queue_periods,
    #        overflow_mass, samples]
    head = int(scal[0])
    size = int(scal[1])
    state = int(scal[2])
    backlog = scal[3]
    lindley = scal[4]
    M = values.shape[0]
    L = rates.shape[0]
    nbins = hist.shape[0]
    for i in range(u_arr.shape[0]):
        t = t0 + i
        a = values[state]
        if a > 0.0:
            if size == ring:
                return 2
            pos = (head + size) % ring
            q_time[pos] = t
            q_work[pos] = a
            q_orig[pos] = a
            size += 1
            backlog += a
        j = 0
        while j < L - 1 and u_srv[i] >= cdf_srv[j]:
            j += 1
        s = rates[j]
        remaining = s
        while size > 0 and remaining > 0.0:
            w = q_work[head]
            if w <= remaining + WORK_EPS:
                remaining -= w
                if q_time[head] >= warmup:
                    delay = t - q_time[head]
                    if delay < nbins:
                        hist[delay] += q_orig[head]
                        counts[delay] += 1
                    else:
                        scal[7] += q_orig[head]
                    scal[8] += 1
                head = (head + 1) % ring
                size -= 1
            else:
                q_work[head] = w - remaining
                remaining = 0.0
        if size == 0:
            remaining = s if remaining > s else remaining
        served = s - remaining
        backlog = backlog - served
        if size == 0:
            backlog = 0.0
        lindley = max(0.0, lindley + a - s)
        if abs(lindley - backlog) > 1e-6 * (1.0 + backlog):
            return 3
        if backlog > guard:
            return 1
        if t >= warmup:
            scal[5] += backlog
            scal[6] += 1
        n = 0
        while n < M - 1 and u_arr[i] >= cum_P[state, n]:
            n += 1
        state = n
    scal[0] = head
    scal[1] = size
    scal[2] = state
    scal[3] = backlog
    scal[4] = lindley
    return 0


def simulate(proc: MarkovArrivalProcess, spectrum: ServiceSpectrum, cfg: SimConfig) -> SimResult:
    """Run the queue for ``cfg.horizon`` periods.

    Each period the current state's batch joins the tail, then up to S(t)
    units of work are served FIFO; a batch's delay is the period in which its
    last unit leaves minus its arrival period.
    """
    ss_arr, ss_srv = np.random.SeedSequence(int(cfg.seed)).spawn(2)
    g_arr = np.random.Generator(np.random.Philox(ss_arr))
    g_srv = np.random.Generator(np.random.Philox(ss_srv))
    cum_P = np.cumsum(proc.transition, axis=1)
    cdf_srv = np.cumsum(spectrum.probs)
    pi = stationary_distribution(proc)
    state0 = min(int(np.searchsorted(np.cumsum(pi), g_arr.random(), side="right")), proc.n_states - 1)

    q_time = np.zeros(RING, dtype=np.int64)
    q_work = np.zeros(RING)
    q_orig = np.zeros(RING)
    hist = np.zeros(MAX_DELAY)
    counts = np.zeros(MAX_DELAY, dtype=np.int64)
    scal = np.zeros(9)
    scal[2] = state0
    values = np.ascontiguousarray(proc.values, dtype=float)
    rates = np.ascontiguousarray(spectrum.rates, dtype=float)

    t = 0
    while t < cfg.horizon:
        n = min(CHUNK, cfg.horizon - t)
        u_arr = g_arr.random(n)
        u_srv = g_srv.random(n)
        status = _run_chunk(u_arr, u_srv, t, cfg.warmup, cum_P, values, cdf_srv, rates,
                            q_time, q_work, q_orig, RING, hist, counts, scal, cfg.backlog_guard)
        if status == 1 or status == 2:
            raise InstabilityError(
                f"backlog exceeded guard near period {t + n}; mean arrivals likely >= mean service"
            )
        if status == 3:
            raise AssertionError("FIFO backlog diverged from the Lindley recursion")
        t += n
    measured = scal[6]
    return SimResult(
        delay_histogram=hist,
        delay_counts=counts,
        overflow_mass=float(scal[7]),
        mean_queue=float(scal[5] / measured) if measured else 0.0,
        samples=int(scal[8]),
        periods=int(cfg.horizon),
    )


@dataclass
class LdValidation:
    rows: list[tuple[int, float, float, int]]
    theta_star: float
    delta: float
    slope: float
    fit_thresholds: list[int]
    warnings: list[str] = field(default_factory=list)


def fit_tail_slope(ds, ps, lo: float = 1e-6, hi: float = 1e-2):
    """Least-squares slope of log p against d over points with p in [lo, hi]."""
    pts = [(d, p) for d, p in zip(ds, ps) if lo <= p <= hi]
    if len(pts) < 2:
        return math.nan, [d for d, _ in pts]
    x = np.array([d for d, _ in pts], dtype=float)
    y = np.log([p for _, p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope), [int(d) for d, _ in pts]


def validate_ld(proc: MarkovArrivalProcess, params: SystemParams, policy: PolicyMatrix,
                d_range, cfg: SimConfig, theta_cap: float = THETA_CAP) -> LdValidation:
    """Tabulate simulated delay tails against ``exp(-theta* delta d)``."""
    spectrum = enumerate_leaves(policy, params)
    theta = find_theta_star(proc, spectrum, theta_cap)
    q = qos_from_theta(proc, theta, 1.0, mean_service_rate(spectrum))
    sim = simulate(proc, spectrum, cfg)
    rows = []
    ds = sorted(int(d) for d in d_range)
    for d in ds:
        p_ld = 1.0 if theta == 0.0 else math.exp(-q.theta_star * q.delta * d) if math.isfinite(theta) else 0.0
        rows.append((d, sim.p_delay_empirical(d), p_ld, sim.exceedances(d)))
    slope, used = fit_tail_slope(ds, [r[1] for r in rows])
    warnings = []
    if theta == 0.0 or math.isinf(theta):
        warnings.append(f"theta* = {theta}; the LD estimate is degenerate for this instance")
    if used:
        n = sim.exceedances(max(used))
        if n < 100:
            warnings.append(
                f"only {n} exceedances at d={max(used)}; tail estimate is statistically weak"
            )
    else:
        warnings.append("no threshold has an empirical tail in [1e-6, 1e-2]; slope not fitted")
    return LdValidation(rows, q.theta_star, q.delta, slope, used, warnings)


def write_validation_csv(result: LdValidation, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["d", "p_empirical", "p_ld", "samples"])
    for d, pe, pl, n in result.rows:
        w.writerow([d, f"{pe:.12g}", f"{pl:.12g}", n])
