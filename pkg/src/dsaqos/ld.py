"""Large-deviations root finding: theta*, delta and the delay-violation estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arrivals import MarkovArrivalProcess, log_mgf_arrivals, mean_arrival_rate
from .policy import (
    PolicyMatrix,
    ServiceSpectrum,
    SystemParams,
    enumerate_leaves,
    log_mgf_service_neg,
    mean_service_rate,
)

THETA_CAP = 1e6
REL_TOL = 1e-10
MAX_BISECT = 200


@dataclass(frozen=True)
class QosResult:
    """LD summary of one policy: ``p_delay = exp(-theta_star * delta * d_max)``."""

    theta_star: float
    delta: float
    p_delay: float
    mean_service: float = float("nan")

    def key(self) -> tuple[float, float]:
        """Ordering used by the optimizers: larger exponent, then larger throughput."""
        return (self.theta_star, self.mean_service)


def qos_gap(proc: MarkovArrivalProcess, spectrum: ServiceSpectrum, theta):
    """``Lambda_A(theta) + log E[exp(-theta S)]``; convex, zero at the origin."""
    return log_mgf_arrivals(proc, theta) + log_mgf_service_neg(spectrum, theta)


class _PaddedSpectra:
    """Stack of spectra padded to equal length, for batched gap evaluation."""

    def __init__(self, spectra):
        L = max(len(sp) for sp in spectra)
        N = len(spectra)
        self.rates = np.zeros((N, L))
        self.logp = np.full((N, L), -np.inf)
        for i, sp in enumerate(spectra):
            n = len(sp)
            self.rates[i, :n] = sp.rates
            self.logp[i, :n] = np.log(sp.probs)
        self.means = np.array([mean_service_rate(sp) for sp in spectra])

    def log_mgf_neg(self, idx, theta):
        z = self.logp[idx] - theta[:, None] * self.rates[idx]
        zmax = z.max(axis=1)
        out = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        return np.minimum(out, 0.0)


def theta_star_many(proc: MarkovArrivalProcess, spectra, theta_cap: float = THETA_CAP) -> np.ndarray:
    """Positive root of the gap function for each spectrum (0 if unstable, inf if none).

    Every spectrum follows its own bracketing and bisection sequence; the answer
    for one spectrum does not depend on the others in the batch.
    """
    spectra = list(spectra)
    N = len(spectra)
    out = np.zeros(N)
    if N == 0:
        return out
    pad = _PaddedSpectra(spectra)
    ea = mean_arrival_rate(proc)

    def gap(idx, theta):
        return log_mgf_arrivals(proc, theta) + pad.log_mgf_neg(idx, theta)

    active = np.flatnonzero(pad.means > ea)
    lo = np.zeros(N)
    hi = np.ones(N)
    # Double the upper end until the gap turns positive or passes the cap.
    bracketed = []
    while active.size:
        g = gap(active, hi[active])
        pos = g > 0
        bracketed.append(active[pos])
        rest = active[~pos]
        lo[rest] = hi[rest]
        hi[rest] *= 2.0
        capped = hi[rest] > theta_cap
        out[rest[capped]] = math.inf
        active = rest[~capped]
    active = np.concatenate(bracketed) if bracketed else np.array([], dtype=int)
    active.sort()
    for _ in range(MAX_BISECT):
        if active.size == 0:
            break
        done = (hi[active] - lo[active]) <= REL_TOL * hi[active]
        out[active[done]] = 0.5 * (lo[active[done]] + hi[active[done]])
        active = active[~done]
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        neg = gap(active, mid) < 0
        lo[active[neg]] = mid[neg]
        hi[active[~neg]] = mid[~neg]
    out[active] = 0.5 * (lo[active] + hi[active])
    return out


def find_theta_star(proc: MarkovArrivalProcess, spectrum: ServiceSpectrum,
                    theta_cap: float = THETA_CAP) -> float:
    return float(theta_star_many(proc, [spectrum], theta_cap)[0])


def qos_from_theta(proc: MarkovArrivalProcess, theta_star: float, d_max: float,
                   mean_service: float = float("nan")) -> QosResult:
    if theta_star == 0.0:
        return QosResult(0.0, 0.0, 1.0, mean_service)
    if math.isinf(theta_star):
        return QosResult(math.inf, math.inf, 0.0, mean_service)
    delta = log_mgf_arrivals(proc, theta_star)
    return QosResult(theta_star, delta, math.exp(-theta_star * delta * d_max), mean_service)


def evaluate_spectra(proc, spectra, d_max: float, theta_cap: float = THETA_CAP) -> list[QosResult]:
    if not d_max > 0:
        raise ValueError(f"d_max must be positive, got {d_max!r}")
    spectra = list(spectra)
    thetas = theta_star_many(proc, spectra, theta_cap)
    finite = np.isfinite(thetas) & (thetas > 0)
    deltas = np.zeros(len(spectra))
    if finite.any():
        deltas[finite] = log_mgf_arrivals(proc, thetas[finite])
    out = []
    for t, dl, sp in zip(thetas.tolist(), deltas.tolist(), spectra):
        es = mean_service_rate(sp)
        if t == 0.0 or math.isinf(t):
            out.append(qos_from_theta(proc, t, d_max, es))
        else:
            out.append(QosResult(t, dl, math.exp(-t * dl * d_max), es))
    return out


def evaluate_many(proc, params: SystemParams, policies, d_max: float,
                  theta_cap: float = THETA_CAP) -> list[QosResult]:
    spectra = [enumerate_leaves(D, params) for D in policies]
    return evaluate_spectra(proc, spectra, d_max, theta_cap)


def evaluate_policy(proc: MarkovArrivalProcess, params: SystemParams, policy: PolicyMatrix,
                    d_max: float, theta_cap: float = THETA_CAP) -> QosResult:
    return evaluate_many(proc, params, [policy], d_max, theta_cap)[0]
