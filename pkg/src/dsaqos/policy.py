"""Sensing/transmitting policies and the service distributions they induce."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class SystemParams:
    """Physical configuration of the secondary user.

    W channels are sensed one per slot, K slots make up a period, and an idle
    channel carries ``c`` packets per slot of transmission time.
    """

    W: int
    K: int
    c: float
    p_idle: float

    def __post_init__(self):
        if int(self.W) != self.W or self.W < 1:
            raise ValueError(f"W must be a positive integer, got {self.W!r}")
        if int(self.K) != self.K or self.K < self.W:
            raise ValueError(f"K must be an integer with K >= W, got K={self.K!r}, W={self.W!r}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c!r}")
        if not 0 < self.p_idle < 1:
            raise ValueError(f"p_idle must lie in (0, 1), got {self.p_idle!r}")

    def rate(self, k: int, s: int) -> float:
        """Packets sent in a period after stopping at ``k`` sensed, ``s`` idle."""
        return float(s * (self.K - k)) * self.c


class PolicyMatrix:
    """Lower-triangular 0/1 decision matrix.

    ``entries[k, s] == 1`` means: having sensed ``k`` channels and found ``s``
    idle, stop and transmit. Entries above the diagonal are kept at zero and
    column 0 is always zero.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        D = np.array(entries, dtype=np.int8, ndmin=2)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"policy matrix must be square, got shape {D.shape}")
        if np.any((D != 0) & (D != 1)):
            raise ValueError("policy entries must be 0 or 1")
        D = np.tril(D)
        if np.any(D[:, 0] != 0):
            raise ValueError("column 0 of a policy matrix must be all zeros")
        D.setflags(write=False)
        object.__setattr__(self, "entries", D)

    def __setattr__(self, name, value):
        raise AttributeError("PolicyMatrix is immutable")

    @property
    def W(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ks):
        return int(self.entries[ks])

    def with_entry(self, k: int, s: int, value: int) -> "PolicyMatrix":
        D = self.entries.copy()
        D[k, s] = value
        return PolicyMatrix(D)

    def bits(self) -> tuple:
        """Defined entries in row-major order, row k contributing k+1 values."""
        return tuple(int(self.entries[k, s]) for k in range(self.W) for s in range(k + 1))

    def rows(self) -> list[list[int]]:
        return [[int(x) for x in self.entries[k, : k + 1]] for k in range(self.W)]

    def __eq__(self, other):
        if not isinstance(other, PolicyMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"PolicyMatrix({self.rows()})"

    @classmethod
    def zeros(cls, W: int) -> "PolicyMatrix":
        return cls(np.zeros((W, W), dtype=np.int8))

    @classmethod
    def all_stop(cls, W: int) -> "PolicyMatrix":
        """Column 0 zero, every other defined entry one."""
        D = np.tril(np.ones((W, W), dtype=np.int8))
        D[:, 0] = 0
        return cls(D)


def iter_all_policies(W: int):
    """All 2**(W(W-1)/2) policy matrices, in increasing order of their free bits."""
    free = [(k, s) for k in range(1, W) for s in range(1, k + 1)]
    for combo in itertools.product((0, 1), repeat=len(free)):
        D = np.zeros((W, W), dtype=np.int8)
        for (k, s), b in zip(free, combo):
            D[k, s] = b
        yield PolicyMatrix(D)


class ServiceSpectrum:
    """Finite distribution of per-period service, as (rate, probability) atoms.

    Atoms with equal rate are merged and stored in increasing rate order.
    """

    __slots__ = ("rates", "probs")

    def __init__(self, atoms):
        merged: dict[float, float] = {}
        for r, p in atoms:
            r = float(r)
            p = float(p)
            if not r >= 0:
                raise ValueError(f"service rate must be nonnegative, got {r!r}")
            if not p > 0:
                raise ValueError(f"atom probability must be positive, got {p!r}")
            merged[r] = merged.get(r, 0.0) + p
        if not merged:
            raise ValueError("service spectrum needs at least one atom")
        rates = np.array(sorted(merged))
        probs = np.array([merged[r] for r in rates])
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {probs.sum()!r}, expected 1")
        rates.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "probs", probs)

    def __setattr__(self, name, value):
        raise AttributeError("ServiceSpectrum is immutable")

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.rates.tolist(), self.probs.tolist()))

    def __len__(self):
        return len(self.rates)

    def __eq__(self, other):
        if not isinstance(other, ServiceSpectrum):
            return NotImplemented
        return np.array_equal(self.rates, other.rates) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.rates.tobytes(), self.probs.tobytes()))

    def __repr__(self):
        return f"ServiceSpectrum({self.atoms})"


def _graph_leaves(D: np.ndarray, params: SystemParams) -> dict[float, float]:
    W, p = params.W, params.p_idle
    leaves: dict[float, float] = {}
    mass = np.zeros(W + 1)
    mass[0] = 1.0
    for k in range(W):
        nxt = np.zeros(W + 1)
        for s in range(k + 1):
            m = mass[s]
            if m == 0.0:
                continue
            if D[k, s]:
                r = params.rate(k, s)
                leaves[r] = leaves.get(r, 0.0) + m
            else:
                nxt[s + 1] += m * p
                nxt[s] += m * (1.0 - p)
        mass = nxt
    for s in range(W + 1):
        if mass[s] > 0.0:
            r = params.rate(W, s)
            leaves[r] = leaves.get(r, 0.0) + mass[s]
    return leaves


def enumerate_leaves(policy: PolicyMatrix, params: SystemParams) -> ServiceSpectrum:
    """Service distribution of ``policy``.

    Probability mass is pushed through the decision graph state by state;
    each ``(k, s)`` node carries the total weight of every sensing path that
    reaches it, so the cost is O(W^2) instead of O(2^W).
    """
    if policy.W != params.W:
        raise ValueError(f"policy has dimension {policy.W}, system has W={params.W}")
    return ServiceSpectrum(_graph_leaves(policy.entries, params).items())


def log_mgf_service_neg(spectrum: ServiceSpectrum, theta):
    """``log sum_i p_i exp(-theta r_i)`` evaluated stably; vectorized over theta."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    t = theta.reshape(-1, 1)
    out = logsumexp(-t * spectrum.rates[None, :], b=spectrum.probs[None, :], axis=1)
    out = np.where(theta.reshape(-1) == 0.0, 0.0, np.minimum(out, 0.0))
    if theta.ndim == 0:
        return float(out[0])
    return out.reshape(theta.shape)


def mean_service_rate(spectrum: ServiceSpectrum) -> float:
    return float(spectrum.probs @ spectrum.rates)


def is_staircase(policy: PolicyMatrix) -> bool:
    """True iff every 1 has only 1s to its right (to the diagonal) and below it."""
    D = policy.entries
    W = policy.W
    for k in range(W):
        for s in range(k + 1):
            if not D[k, s]:
                continue
            if not all(D[k, j] for j in range(s + 1, k + 1)):
                return False
            if not all(D[l, s] for l in range(k + 1, W)):
                return False
    return True


def check_thresholds(x, W: int) -> list[int]:
    """Validate a threshold vector; ``x[j-1]`` is the number of leading zeros of row j.

    Each row j holds between 1 and j+1 leading zeros. Once a row contains a
    1, no later row may have more leading zeros than it.
    """
    x = [int(v) for v in x]
    if len(x) != W - 1:
        raise ValueError(f"need {W - 1} thresholds for W={W}, got {len(x)}")
    prev = None
    for j, xj in enumerate(x, start=1):
        if not 1 <= xj <= j + 1:
            raise ValueError(f"threshold for row {j} must lie in [1, {j + 1}], got {xj}")
        if prev is not None and xj > prev:
            raise ValueError(
                f"threshold for row {j} ({xj}) exceeds that of row {j - 1} ({prev}), "
                "which already contains a 1"
            )
        prev = xj if xj <= j else None
    return x


def staircase_from_thresholds(x, W: int) -> PolicyMatrix:
    x = check_thresholds(x, W)
    D = np.zeros((W, W), dtype=np.int8)
    for j, xj in enumerate(x, start=1):
        D[j, xj : j + 1] = 1
    return PolicyMatrix(D)


def thresholds_from_staircase(policy: PolicyMatrix) -> list[int]:
    if not is_staircase(policy):
        raise ValueError("policy is not a staircase matrix")
    x = []
    for j in range(1, policy.W):
        row = policy.entries[j, : j + 1]
        ones = np.flatnonzero(row)
        x.append(int(ones[0]) if ones.size else j + 1)
    return x


def iter_thresholds(W: int):
    """Every valid threshold vector for dimension W (there are 2**(W-1))."""

    def rec(j, cap, prefix):
        if j == W:
            yield list(prefix)
            return
        hi = j + 1 if cap is None else cap
        for xj in range(1, hi + 1):
            prefix.append(xj)
            yield from rec(j + 1, xj if xj <= j else None, prefix)
            prefix.pop()

    yield from rec(1, None, [])


# -- policy text format -------------------------------------------------------

def format_policy(policy: PolicyMatrix, header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(" ".join(str(b) for b in row) for row in policy.rows())
    return "\n".join(lines) + "\n"


def parse_policy(text: str) -> PolicyMatrix:
    """Parse W rows of 0/1 tokens, row k holding k+1 tokens; '#' starts a comment line."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        k = len(rows)
        if len(tokens) != k + 1:
            raise ValueError(f"line {lineno}: row {k} needs {k + 1} entries, got {len(tokens)}")
        if any(t not in ("0", "1") for t in tokens):
            raise ValueError(f"line {lineno}: entries must be 0 or 1")
        rows.append([int(t) for t in tokens])
    if not rows:
        raise ValueError("policy file contains no rows")
    W = len(rows)
    D = np.zeros((W, W), dtype=np.int8)
    for k, row in enumerate(rows):
        D[k, : k + 1] = row
    if D[:, 0].any():
        raise ValueError("column 0 of a policy matrix must be all zeros")
    return PolicyMatrix(D)


def read_policy(path) -> PolicyMatrix:
    return parse_policy(Path(path).read_text())


def write_policy(policy: PolicyMatrix, path, header: str | None = None) -> None:
    Path(path).write_text(format_policy(policy, header))
