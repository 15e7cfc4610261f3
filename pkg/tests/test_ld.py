import math

import numpy as np
import pytest

from dsaqos import (
    MarkovArrivalProcess,
    PolicyMatrix,
    ServiceSpectrum,
    enumerate_leaves,
    evaluate_policy,
    find_theta_star,
    log_mgf_service_neg,
    mean_arrival_rate,
    mean_service_rate,
    qos_gap,
)
from dsaqos.ld import theta_star_many

from instances import random_instance

DETERMINISTIC_1 = MarkovArrivalProcess([[1.0]], [1.0])
COIN_0_4 = ServiceSpectrum([(0.0, 0.5), (4.0, 0.5)])
# root of t + log(0.5 + 0.5 exp(-4t)), 200 bisection steps at 40 digits (mpmath)
COIN_THETA = 0.6093778634360062315368034


def oracle_gap(proc, spectrum, theta):
    tilted = proc.transition * np.exp(theta * proc.values)[None, :]
    lam = math.log(max(abs(np.linalg.eigvals(tilted))))
    return lam + math.log(sum(p * math.exp(-theta * r) for r, p in spectrum.atoms))


def oracle_theta(proc, spectrum, cap=1e6):
    """Plain bisection on the eigvals-based gap, to relative 1e-14."""
    if mean_arrival_rate(proc) >= mean_service_rate(spectrum):
        return 0.0
    lo, hi = 0.0, 1.0
    while oracle_gap(proc, spectrum, hi) <= 0:
        lo, hi = hi, 2 * hi
        if hi > cap:
            return math.inf
    while hi - lo > 1e-14 * hi:
        mid = 0.5 * (lo + hi)
        if oracle_gap(proc, spectrum, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_policy(rng, W):
    D = np.tril(rng.integers(0, 2, size=(W, W))).astype(np.int8)
    D[:, 0] = 0
    return PolicyMatrix(D)


def test_gap_zero_at_origin(two_state):
    assert qos_gap(two_state, COIN_0_4, 0.0) == 0.0


def test_gap_linear_case():
    sp = ServiceSpectrum([(3.5, 1.0)])
    for t in (0.1, 1.0, 7.0):
        assert qos_gap(DETERMINISTIC_1, sp, t) == pytest.approx(t * (1.0 - 3.5), abs=1e-12)


def test_gap_slope_is_mean_difference(two_state):
    h = 1e-6
    slope = qos_gap(two_state, COIN_0_4, h) / h
    assert slope == pytest.approx(mean_arrival_rate(two_state) - mean_service_rate(COIN_0_4), abs=1e-4)


def test_theta_boundary_equal_means():
    proc = MarkovArrivalProcess([[1.0]], [2.0])
    assert find_theta_star(proc, ServiceSpectrum([(2.0, 1.0)])) == 0.0


def test_theta_scalar_oracle():
    assert find_theta_star(DETERMINISTIC_1, COIN_0_4) == pytest.approx(COIN_THETA, rel=1e-9)


def test_theta_infinite_when_service_dominates():
    assert find_theta_star(DETERMINISTIC_1, ServiceSpectrum([(2.0, 0.5), (3.0, 0.5)])) == math.inf


def test_theta_cap_is_respected():
    # root sits near -log(1e-4) ~ 9.2; doubling passes 5 before bracketing it
    sp = ServiceSpectrum([(0.0, 1e-4), (2.0, 1 - 1e-4)])
    assert find_theta_star(DETERMINISTIC_1, sp, theta_cap=5.0) == math.inf
    assert find_theta_star(DETERMINISTIC_1, sp) == pytest.approx(9.21, abs=0.01)


def test_evaluate_policy_examples():
    from dsaqos import SystemParams

    params = SystemParams(1, 5, 1.0, 0.5)
    # single channel, K=5: service is 0 or 4 with probability 1/2 each
    q = evaluate_policy(DETERMINISTIC_1, params, PolicyMatrix.zeros(1), 2.0)
    assert q.theta_star == pytest.approx(COIN_THETA, rel=1e-9)
    assert q.delta == pytest.approx(COIN_THETA, rel=1e-9)
    assert q.p_delay == pytest.approx(math.exp(-2 * COIN_THETA**2), rel=1e-8)

    heavy = MarkovArrivalProcess([[1.0]], [3.0])
    q = evaluate_policy(heavy, params, PolicyMatrix.zeros(1), 2.0)
    assert (q.theta_star, q.p_delay) == (0.0, 1.0)

    light = MarkovArrivalProcess([[1.0]], [0.0])
    params = SystemParams(2, 4, 1.0, 0.5)
    q = evaluate_policy(light, params, PolicyMatrix.all_stop(2), 2.0)
    # zero service has positive probability, yet zero arrivals never queue
    assert q.theta_star == math.inf and q.p_delay == 0.0


def test_theta_matches_independent_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        proc, params = random_instance(rng)
        sp = enumerate_leaves(random_policy(rng, params.W), params)
        got = find_theta_star(proc, sp)
        want = oracle_theta(proc, sp)
        if math.isinf(want) or want == 0.0:
            assert got == want
        else:
            assert abs(got - want) <= 1e-8 * want


def test_batched_equals_single():
    rng = np.random.default_rng(3)
    proc, params = random_instance(rng, W=5)
    spectra = [enumerate_leaves(random_policy(rng, 5), params) for _ in range(40)]
    batch = theta_star_many(proc, spectra)
    single = [find_theta_star(proc, sp) for sp in spectra]
    assert batch.tolist() == single


def test_root_is_unique_crossing():
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 30:
        proc, params = random_instance(rng)
        sp = enumerate_leaves(random_policy(rng, params.W), params)
        t = find_theta_star(proc, sp)
        if not 0 < t < math.inf:
            continue
        checked += 1
        below = np.linspace(0.02, 0.98, 25) * t
        above = np.linspace(1.02, 4.0, 25) * t
        assert np.all(qos_gap(proc, sp, below) < 0)
        assert np.all(qos_gap(proc, sp, above) > 0)


def test_ordering_at_midpoint():
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 50:
        proc, params = random_instance(rng)
        sp1, sp2 = (enumerate_leaves(random_policy(rng, params.W), params) for _ in range(2))
        t1, t2 = find_theta_star(proc, sp1), find_theta_star(proc, sp2)
        if not (0 < t1 < math.inf and 0 < t2 < math.inf) or abs(t1 - t2) < 1e-6 * t2:
            continue
        if t1 > t2:
            sp1, sp2, t1, t2 = sp2, sp1, t2, t1
        mid = 0.5 * (t1 + t2)
        assert log_mgf_service_neg(sp1, mid) > log_mgf_service_neg(sp2, mid)
        checked += 1


def test_shifting_mass_up_never_lowers_theta():
    rng = np.random.default_rng(8)
    for _ in range(50):
        proc, params = random_instance(rng)
        sp = enumerate_leaves(random_policy(rng, params.W), params)
        if len(sp) < 2:
            continue
        atoms = sp.atoms
        i = int(rng.integers(0, len(atoms) - 1))
        j = int(rng.integers(i + 1, len(atoms)))
        moved = float(rng.uniform(0, 1)) * atoms[i][1]
        new = list(atoms)
        new[i] = (atoms[i][0], atoms[i][1] - moved)
        new[j] = (atoms[j][0], atoms[j][1] + moved)
        better = ServiceSpectrum([a for a in new if a[1] > 0])
        assert find_theta_star(proc, better) >= find_theta_star(proc, sp)
