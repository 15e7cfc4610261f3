import math

import numpy as np
import pytest

from dsaqos import (
    MarkovArrivalProcess,
    PolicyMatrix,
    SystemParams,
    algorithm_a,
    algorithm_b,
    dp_min_mgf,
    dp_theta,
    dp_throughput,
    enumerate_leaves,
    evaluate_policy,
    exhaustive_search,
    is_staircase,
    mean_service_rate,
)
from dsaqos.errors import RefusalError
from dsaqos.optimizers import run_algorithm
from dsaqos.policy import iter_all_policies

from instances import random_instance

D_MAX = 2.0


@pytest.fixture(scope="module")
def small_instances():
    rng = np.random.default_rng(123)
    return [random_instance(rng) for _ in range(12)]


def test_exhaustive_forced_policy():
    proc = MarkovArrivalProcess([[1.0]], [0.2])
    rep = exhaustive_search(proc, SystemParams(1, 3, 1.0, 0.5), D_MAX)
    assert rep.best_policy == PolicyMatrix.zeros(1)
    assert rep.candidates_evaluated == 1


@pytest.mark.parametrize("W, count", [(2, 2), (4, 64)])
def test_exhaustive_counts(W, count):
    proc = MarkovArrivalProcess([[1.0]], [0.5])
    rep = exhaustive_search(proc, SystemParams(W, W + 1, 1.0, 0.5), D_MAX)
    assert rep.candidates_evaluated == count


def test_exhaustive_refuses_large_w():
    proc = MarkovArrivalProcess([[1.0]], [0.5])
    with pytest.raises(RefusalError):
        exhaustive_search(proc, SystemParams(8, 8, 1.0, 0.5), D_MAX)


@pytest.mark.parametrize("W", [2, 3, 4, 5])
def test_staircase_candidate_count(W):
    proc = MarkovArrivalProcess([[1.0]], [0.5])
    rep = algorithm_a(proc, SystemParams(W, W, 1.0, 0.5), D_MAX)
    # brute force: how many of all matrices are staircases
    assert rep.candidates_evaluated == sum(is_staircase(D) for D in iter_all_policies(W))
    if W >= 3:
        assert rep.candidates_evaluated < 2 ** (W * (W - 1) // 2)


def test_staircase_matches_exhaustive(small_instances):
    for proc, params in small_instances:
        a = algorithm_a(proc, params, D_MAX)
        e = exhaustive_search(proc, params, D_MAX)
        assert a.best_qos.theta_star == e.best_qos.theta_star
        assert is_staircase(a.best_policy)


def test_greedy_single_channel():
    proc = MarkovArrivalProcess([[1.0]], [0.2])
    rep = algorithm_b(proc, SystemParams(1, 2, 1.0, 0.5), D_MAX)
    assert rep.best_policy == PolicyMatrix.zeros(1)
    assert rep.candidates_evaluated == 1


def test_greedy_keeps_optimal_initialization():
    # K = W with scarce idle channels: stopping at the first idle channel is best
    params = SystemParams(4, 4, 1.0, 0.3)
    proc = MarkovArrivalProcess([[0.5, 0.5], [0.5, 0.5]], [0.0, 1.0])
    assert algorithm_a(proc, params, D_MAX).best_policy == PolicyMatrix.all_stop(4)
    rep = algorithm_b(proc, params, D_MAX)
    assert rep.best_policy == PolicyMatrix.all_stop(4)


def test_greedy_infinite_exponent_prefers_throughput():
    # no arrivals: every policy has theta* = inf, so only throughput can improve
    proc = MarkovArrivalProcess([[1.0]], [0.0])
    params = SystemParams(5, 7, 1.0, 0.4)
    rep = algorithm_b(proc, params, D_MAX)
    assert rep.best_qos.theta_star == math.inf
    init = evaluate_policy(proc, params, PolicyMatrix.all_stop(5), D_MAX)
    assert rep.best_qos.mean_service >= init.mean_service


def test_greedy_flip_budget_and_structure(small_instances):
    for proc, params in small_instances:
        W = params.W
        b = algorithm_b(proc, params, D_MAX)
        assert b.candidates_evaluated - 1 <= W * (W - 1) // 2 + 1
        assert is_staircase(b.best_policy)
        assert b.best_qos.theta_star == algorithm_a(proc, params, D_MAX).best_qos.theta_star


def test_dp_throughput_near_deterministic():
    D = dp_throughput(SystemParams(10, 10, 1.0, 0.999))
    assert D[5, 5] == 1
    assert all(D[k, k] == 0 for k in range(1, 5))


def test_dp_throughput_single_channel():
    assert dp_throughput(SystemParams(1, 4, 1.0, 0.3)) == PolicyMatrix.zeros(1)


def test_dp_throughput_is_exhaustive_max():
    rng = np.random.default_rng(31)
    for _ in range(10):
        _, params = random_instance(rng)
        best = max(mean_service_rate(enumerate_leaves(D, params)) for D in iter_all_policies(params.W))
        got = mean_service_rate(enumerate_leaves(dp_throughput(params), params))
        assert abs(got - best) <= 1e-12


def test_dp_min_mgf_is_exhaustive_min():
    rng = np.random.default_rng(32)
    for _ in range(10):
        _, params = random_instance(rng)
        theta = float(rng.uniform(0.01, 2.0))

        def mgf(D):
            sp = enumerate_leaves(D, params)
            return float(sp.probs @ np.exp(-theta * sp.rates))

        best = min(mgf(D) for D in iter_all_policies(params.W))
        assert abs(mgf(dp_min_mgf(params, theta)) - best) <= 1e-12


def test_dp_theta_single_channel():
    proc = MarkovArrivalProcess([[1.0]], [0.2])
    rep = dp_theta(proc, SystemParams(1, 3, 1.0, 0.5), D_MAX)
    assert rep.best_policy == PolicyMatrix.zeros(1)


def test_dp_theta_unstable_returns_throughput_policy():
    params = SystemParams(4, 6, 1.0, 0.5)
    proc = MarkovArrivalProcess([[1.0]], [50.0])
    rep = dp_theta(proc, params, D_MAX)
    assert rep.best_policy == dp_throughput(params)
    assert rep.best_qos.theta_star == 0.0


def test_optimum_dominates_baselines(small_instances):
    for proc, params in small_instances:
        a = algorithm_a(proc, params, D_MAX).best_qos.theta_star
        thr = evaluate_policy(proc, params, dp_throughput(params), D_MAX).theta_star
        assert a >= thr
        assert a >= dp_theta(proc, params, D_MAX).best_qos.theta_star


@pytest.mark.xfail(
    strict=True,
    reason="the fixed-theta iteration raises theta* monotonically and its fixed point is "
    "a global optimum, so no instance with a strictly worse result is expected",
)
def test_dp_theta_can_be_suboptimal():
    rng = np.random.default_rng(77)
    for _ in range(60):
        proc, params = random_instance(rng)
        a = algorithm_a(proc, params, D_MAX).best_qos.theta_star
        t = dp_theta(proc, params, D_MAX).best_qos.theta_star
        if t < a * (1 - 1e-9):
            return
    pytest.fail("no instance where dp_theta falls short of the staircase optimum")


@pytest.mark.parametrize("name", ["exhaustive", "staircase", "greedy", "dp_throughput", "dp_theta"])
def test_deterministic(name, small_instances):
    proc, params = small_instances[0]
    r1 = run_algorithm(name, proc, params, D_MAX)
    r2 = run_algorithm(name, proc, params, D_MAX)
    assert r1 == r2
