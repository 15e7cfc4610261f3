"""Searches over policy matrices for the largest LD exponent theta*."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import RefusalError
from .ld import THETA_CAP, QosResult, evaluate_many
from .policy import (
    PolicyMatrix,
    SystemParams,
    iter_all_policies,
    iter_thresholds,
    staircase_from_thresholds,
)

EXHAUSTIVE_MAX_W = 7
BATCH = 4096


class Algorithm(str, Enum):
    EXHAUSTIVE = "exhaustive"
    STAIRCASE = "staircase"
    GREEDY = "greedy"
    DP_THROUGHPUT = "dp_throughput"
    DP_THETA = "dp_theta"


@dataclass(frozen=True)
class OptimizationReport:
    best_policy: PolicyMatrix
    best_qos: QosResult
    candidates_evaluated: int
    algorithm: Algorithm


def _rank(policy: PolicyMatrix, qos: QosResult):
    # Total order: exponent, then throughput, then the matrix bits.
    return (qos.theta_star, qos.mean_service, policy.bits())


def _best_of(proc, params, policies, d_max, theta_cap):
    best = None
    count = 0
    batch = []

    def flush():
        nonlocal best
        for D, q in zip(batch, evaluate_many(proc, params, batch, d_max, theta_cap)):
            if best is None or _rank(D, q) > _rank(*best):
                best = (D, q)
        batch.clear()

    for D in policies:
        batch.append(D)
        count += 1
        if len(batch) >= BATCH:
            flush()
    if batch:
        flush()
    return best[0], best[1], count


def exhaustive_search(proc, params: SystemParams, d_max: float,
                      theta_cap: float = THETA_CAP) -> OptimizationReport:
    """Evaluate every policy matrix; only feasible for small W."""
    if params.W > EXHAUSTIVE_MAX_W:
        raise RefusalError(
            f"exhaustive search supports W <= {EXHAUSTIVE_MAX_W}, got W={params.W} "
            f"(2^{params.W * (params.W - 1) // 2} candidates)"
        )
    D, q, n = _best_of(proc, params, iter_all_policies(params.W), d_max, theta_cap)
    return OptimizationReport(D, q, n, Algorithm.EXHAUSTIVE)


def algorithm_a(proc, params: SystemParams, d_max: float,
                theta_cap: float = THETA_CAP) -> OptimizationReport:
    """Evaluate every staircase matrix (2**(W-1) of them) and keep the best."""
    W = params.W
    policies = (staircase_from_thresholds(x, W) for x in iter_thresholds(W))
    D, q, n = _best_of(proc, params, policies, d_max, theta_cap)
    return OptimizationReport(D, q, n, Algorithm.STAIRCASE)


def algorithm_b(proc, params: SystemParams, d_max: float,
                theta_cap: float = THETA_CAP) -> OptimizationReport:
    """Greedy column-by-column bit flipping from the all-stop staircase.

    Column j is scanned downward from the diagonal. A 1 is flipped to 0 only
    when no earlier column of its row holds a 1, and the flip is kept only if
    the result strictly improves in the (theta*, mean service) order; the
    first rejected or blocked flip ends the column. The throughput tie-break
    only matters on the theta* = 0 plateau, where it lets the search climb out
    of an unstable starting matrix.
    """
    W = params.W
    D = PolicyMatrix.all_stop(W).entries.copy()

    def theta_of(M):
        return evaluate_many(proc, params, [PolicyMatrix(M)], d_max, theta_cap)[0]

    best = theta_of(D)
    evaluated = 1
    for j in range(1, W):
        for i in range(j, W):
            if D[i, j] != 1:
                continue
            if D[i, :j].any():
                break
            D[i, j] = 0
            trial = theta_of(D)
            evaluated += 1
            if trial.key() > best.key():
                best = trial
            else:
                D[i, j] = 1
                break
    return OptimizationReport(PolicyMatrix(D), best, evaluated, Algorithm.GREEDY)


def _backward_induction(params: SystemParams, leaf_value, combine, prefer_stop):
    """Optimal stopping over the decision graph.

    ``leaf_value(k, s)`` is the value of stopping at ``(k, s)``,
    ``combine(v_idle, v_busy, p)`` the value of sensing one more channel, and
    ``prefer_stop(stop, cont)`` must return True on ties.
    """
    W, p = params.W, params.p_idle
    V = [leaf_value(W, s) for s in range(W + 1)]
    D = np.zeros((W, W), dtype=np.int8)
    for k in range(W - 1, -1, -1):
        newV = []
        for s in range(k + 1):
            stop = leaf_value(k, s)
            cont = combine(V[s + 1], V[s], p)
            if s > 0 and prefer_stop(stop, cont):
                D[k, s] = 1
                newV.append(stop)
            else:
                newV.append(cont)
        V = newV
    return PolicyMatrix(D), V[0]


def _mix(v_idle, v_busy, p):
    return p * v_idle + (1.0 - p) * v_busy


def _log_mix(v_idle, v_busy, p):
    return float(np.logaddexp(math.log(p) + v_idle, math.log1p(-p) + v_busy))


def dp_throughput(params: SystemParams) -> PolicyMatrix:
    """Policy maximizing the mean service rate, by backward induction (ties stop)."""
    D, _ = _backward_induction(params, params.rate, _mix, lambda a, b: a >= b)
    return D


def dp_min_mgf(params: SystemParams, theta: float) -> PolicyMatrix:
    """Policy minimizing E[exp(-theta S)], by backward induction in log space (ties stop)."""
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative, got {theta!r}")
    D, _ = _backward_induction(
        params, lambda k, s: -theta * params.rate(k, s), _log_mix, lambda a, b: a <= b
    )
    return D


def dp_theta(proc, params: SystemParams, d_max: float, max_rounds: int = 50,
             theta_cap: float = THETA_CAP) -> OptimizationReport:
    """Fixed-point iteration: re-solve the exact fixed-theta DP at the last theta*.

    Starts from the throughput-optimal policy's exponent and stops when a
    policy repeats, theta* becomes infinite, or ``max_rounds`` is spent.
    """
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
    start = dp_throughput(params)
    q = evaluate_many(proc, params, [start], d_max, theta_cap)[0]
    evaluated = 1
    best = (start, q)
    visited = {start}
    theta = q.theta_star
    if theta == 0.0 or math.isinf(theta):
        return OptimizationReport(start, q, evaluated, Algorithm.DP_THETA)
    for _ in range(max_rounds):
        D = dp_min_mgf(params, theta)
        if D in visited:
            break
        visited.add(D)
        q = evaluate_many(proc, params, [D], d_max, theta_cap)[0]
        evaluated += 1
        if _rank(D, q) > _rank(*best):
            best = (D, q)
        theta = q.theta_star
        if theta == 0.0 or math.isinf(theta):
            break
    return OptimizationReport(best[0], best[1], evaluated, Algorithm.DP_THETA)


def run_algorithm(name, proc, params, d_max, theta_cap: float = THETA_CAP) -> OptimizationReport:
    alg = Algorithm(name)
    if alg is Algorithm.EXHAUSTIVE:
        return exhaustive_search(proc, params, d_max, theta_cap)
    if alg is Algorithm.STAIRCASE:
        return algorithm_a(proc, params, d_max, theta_cap)
    if alg is Algorithm.GREEDY:
        return algorithm_b(proc, params, d_max, theta_cap)
    if alg is Algorithm.DP_THETA:
        return dp_theta(proc, params, d_max, theta_cap=theta_cap)
    D = dp_throughput(params)
    q = evaluate_many(proc, params, [D], d_max, theta_cap)[0]
    return OptimizationReport(D, q, 1, Algorithm.DP_THROUGHPUT)
