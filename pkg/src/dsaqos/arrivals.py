"""Markov-modulated arrival process and its limiting log-MGF."""
from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError

ROW_TOL = 1e-12
PERRON_TOL = 1e-13
MAX_ITER = 100_000


class MarkovArrivalProcess:
    """Arrivals driven by an irreducible M-state Markov chain.

    While the chain is in state ``m`` exactly ``values[m]`` packets arrive in
    the slot. ``transition[m, n]`` is the probability of moving from ``m`` to
    ``n``. Instances are immutable.
    """

    def __init__(self, transition, values):
        P = np.array(transition, dtype=float, ndmin=2)
        v = np.array(values, dtype=float, ndmin=1)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"transition must be square, got shape {P.shape}")
        if v.shape != (P.shape[0],):
            raise ValueError(f"values must have length {P.shape[0]}, got {v.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition entries must lie in [0, 1]")
        sums = P.sum(axis=1)
        for m, total in enumerate(sums):
            if abs(total - 1.0) > ROW_TOL:
                raise ValueError(f"transition row {m} sums to {total!r}, expected 1")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
        if ncomp != 1:
            raise ValueError("transition matrix is not irreducible")
        P.setflags(write=False)
        v.setflags(write=False)
        self.transition = P
        self.values = v

    @property
    def n_states(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, MarkovArrivalProcess):
            return NotImplemented
        return np.array_equal(self.transition, other.transition) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.transition.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return (
            f"MarkovArrivalProcess(transition={self.transition.tolist()}, "
            f"values={self.values.tolist()})"
        )


def stationary_distribution(proc: MarkovArrivalProcess) -> np.ndarray:
    """Stationary vector ``pi`` with ``pi @ P = pi`` and ``sum(pi) = 1``."""
    P = proc.transition
    M = proc.n_states
    # pi (P - I) = 0 plus normalization, solved in the least-squares sense.
    A = np.vstack([(P - np.eye(M)).T, np.ones((1, M))])
    b = np.zeros(M + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    # One polishing step of the fixed point brings the residual to rounding level.
    pi = pi @ P
    pi /= pi.sum()
    residual = np.max(np.abs(pi @ P - pi))
    if residual > 1e-12:
        raise NumericalError(f"stationary distribution residual {residual:.3e}")
    return pi


def mean_arrival_rate(proc: MarkovArrivalProcess) -> float:
    return float(stationary_distribution(proc) @ proc.values)


def perron_root(B: np.ndarray, tol: float = PERRON_TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Perron root of a stack of nonnegative irreducible matrices ``B[..., n, n]``.

    Power iteration on the shifted matrix ``B + sigma*I`` (which is primitive
    even when ``B`` is periodic), stopped once the Collatz-Wielandt bounds
    ``min_i (Bv)_i/v_i <= rho <= max_i (Bv)_i/v_i`` agree to relative ``tol``.
    Each matrix in the stack is frozen as soon as it converges, so its result
    does not depend on what else is in the batch.
    """
    B = np.asarray(B, dtype=float)
    batch_shape = B.shape[:-2]
    n = B.shape[-1]
    B = B.reshape(-1, n, n)
    N = B.shape[0]
    # A small shift is enough to break periodicity without slowing convergence much.
    sigma = 0.1 * B.sum(axis=-1).mean(axis=-1)
    sigma = np.where(sigma > 0, sigma, 1.0)
    v = np.ones((N, n))
    rho = np.empty(N)
    active = np.arange(N)
    for _ in range(max_iter):
        Bv = (B[active] * v[active, None, :]).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = Bv / v[active]
        lo = ratio.min(axis=-1)
        hi = ratio.max(axis=-1)
        done = (hi - lo) <= tol * hi
        done |= hi == 0.0
        if np.any(done):
            idx = active[done]
            rho[idx] = 0.5 * (lo[done] + hi[done])
        keep = ~done
        w = Bv[keep] + sigma[active[keep], None] * v[active[keep]]
        w /= w.max(axis=-1, keepdims=True)
        active = active[keep]
        v[active] = w
        if active.size == 0:
            return rho.reshape(batch_shape)
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def log_mgf_arrivals(proc: MarkovArrivalProcess, theta):
    """Limiting log-MGF of the arrivals, ``log rho(P diag(exp(theta*values)))``.

    ``theta`` may be a scalar or an array; the result has the same shape.
    The tilt is applied as ``exp(theta*(values - max))`` and the maximum is
    added back outside the log, so large ``theta`` does not overflow.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    v = proc.values
    vmax = v.max()
    t = theta.reshape(-1)
    tilt = np.exp(t[:, None] * (v - vmax)[None, :])
    rho = perron_root(proc.transition[None, :, :] * tilt[:, None, :])
    with np.errstate(divide="ignore"):
        out = t * vmax + np.log(rho)
    # The untilted matrix is stochastic: its Perron root is exactly one.
    out = np.where(t == 0.0, 0.0, out)
    if theta.ndim == 0:
        return float(out[0])
    return out.reshape(theta.shape)


def scale_arrivals(proc: MarkovArrivalProcess, alpha: float) -> MarkovArrivalProcess:
    if not alpha > 0:
        raise ValueError(f"scaling factor must be positive, got {alpha!r}")
    return MarkovArrivalProcess(proc.transition, alpha * proc.values)
