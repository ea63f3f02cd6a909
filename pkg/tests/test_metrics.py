import math

import numpy as np
import pytest

from opweb.errors import InvalidArgumentError
from opweb.explore import Trajectory
from opweb.metrics import (CompactifiedPoint, RescaledPath, b1_battery,
                           b2_fkg_check, eta_count, even_span, path_distance,
                           rho, set_distance, shear_rescale)
from opweb.oracle import cbm_baseline

TANH1 = math.tanh(1.0)


def _traj(start_t, values):
    return Trajectory(start_t, np.array(values, dtype=np.int64))


def _pl(times, values):
    return RescaledPath(np.array(times, float), np.array(values, float))


# -- compactified metric -----------------------------------------------------

def test_rho_known_values():
    assert rho((0.0, 0.0), (0.0, 0.0)) == 0.0
    assert rho((0.0, 0.0), (1.0, 0.0)) == pytest.approx(TANH1, abs=1e-15)
    assert rho((0.0, 0.0), (0.0, 1.0)) == pytest.approx(TANH1, abs=1e-15)


def test_rho_collapses_infinite_time_rows():
    assert rho((5.0, math.inf), (-3.0, math.inf)) == 0.0
    assert rho((math.inf, math.inf), (0.0, math.inf)) == 0.0
    assert rho((0.0, math.inf), (0.0, -math.inf)) == 2.0
    p = CompactifiedPoint.from_plane(math.inf, 2.0)
    assert p.u == pytest.approx(1.0 / 3.0)


# -- rescaling map -----------------------------------------------------------

def test_shear_identity():
    path = shear_rescale(_traj(0, [0, 1, 2, 1]), 0.0, 1.0, 1.0)
    assert np.allclose(path.times, [0, 1, 2, 3])
    assert np.allclose(path.values, [0, 1, 2, 1])


def test_shear_removes_exact_drift():
    traj = _traj(0, [0, 1, 2, 3, 4])
    path = shear_rescale(traj, 1.0, 2.0, 0.25)
    assert np.allclose(path.values, 0.0)
    assert np.allclose(path.times, 0.25 * np.arange(5))


def test_shear_rejects_bad_parameters():
    with pytest.raises(InvalidArgumentError):
        shear_rescale(_traj(0, [0, 1]), 0.0, 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        shear_rescale(_traj(0, [0, 1]), 0.0, 1.0, -1.0)


def test_shear_composition_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        t0 = int(rng.integers(-5, 5)) * 2
        vals = t0 + np.cumsum(rng.choice([-1, 1], size=n))
        traj = _traj(t0, np.concatenate([[t0], vals]))
        a = float(rng.uniform(-1, 1))
        b = float(rng.uniform(0.2, 3.0))
        eps = float(rng.uniform(0.01, 1.0))
        direct = shear_rescale(traj, a, b, eps)
        composed = shear_rescale(shear_rescale(traj, a, 1.0, 1.0), 0.0, b, eps)
        assert np.all(np.abs(direct.times - composed.times) < 1e-12)
        assert np.all(np.abs(direct.values - composed.values) < 1e-12)


# -- path distance -----------------------------------------------------------

def test_distance_identity():
    p = _pl([0, 1, 2], [0, 1, 0])
    assert path_distance(p, p) == 0.0


def test_distance_constant_paths_hand_value():
    p0 = _pl([0, 1000], [0, 0])
    p1 = _pl([0, 1000], [1, 1])
    assert path_distance(p0, p1) == pytest.approx(TANH1, abs=1e-12)


def _random_path(rng):
    n = int(rng.integers(2, 8))
    times = np.sort(rng.uniform(-3, 3, size=n))
    times[0] = times[0] - 0.1  # guard against duplicate knots
    return _pl(times, rng.uniform(-3, 3, size=n))


def test_distance_metric_axioms_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(300):
        p1, p2, p3 = (_random_path(rng) for _ in range(3))
        d12 = path_distance(p1, p2)
        d13 = path_distance(p1, p3)
        d23 = path_distance(p2, p3)
        assert d12 == path_distance(p2, p1)
        assert d12 >= 0
        assert d13 <= d12 + d23 + 1e-9


# -- set distance ------------------------------------------------------------

def _naive_hausdorff(K1, K2):
    one = max(min(path_distance(a, b) for b in K2) for a in K1)
    two = max(min(path_distance(a, b) for a in K1) for b in K2)
    return max(one, two)


def test_set_distance_identity_and_containment():
    rng = np.random.default_rng(11)
    K = [_random_path(rng) for _ in range(4)]
    assert set_distance(K, K) == 0.0
    sub = K[:2]
    d = set_distance(sub, K)
    assert d == pytest.approx(
        max(min(path_distance(b, a) for a in sub) for b in K), abs=1e-15)


def test_set_distance_matches_naive_double_loop():
    rng = np.random.default_rng(13)
    for _ in range(50):
        K1 = [_random_path(rng) for _ in range(int(rng.integers(1, 5)))]
        K2 = [_random_path(rng) for _ in range(int(rng.integers(1, 5)))]
        assert set_distance(K1, K2) == pytest.approx(
            _naive_hausdorff(K1, K2), abs=1e-15)


def test_set_distance_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        set_distance([], [_pl([0, 1], [0, 0])])


# -- eta ---------------------------------------------------------------------

def _coalescing_family(rng, k, length):
    """Non-crossing lattice walks that merge on meeting."""
    starts = np.sort(rng.choice(np.arange(-8, 9, 2), size=k, replace=False))
    vals = np.zeros((k, length + 1), dtype=np.int64)
    vals[:, 0] = starts
    driver = list(range(k))

    def root(i):
        while driver[i] != i:
            i = driver[i]
        return i

    for j in range(length):
        inc = rng.choice([-1, 1], size=k)
        for i in range(k):
            vals[i, j + 1] = vals[i, j] + inc[root(i)]
        order = np.argsort(vals[:, j + 1], kind="stable")
        for a, b in zip(order[:-1], order[1:]):
            if vals[a, j + 1] == vals[b, j + 1]:
                driver[root(b)] = root(a)
    return [_traj(0, row) for row in vals]


def test_eta_empty_and_single():
    assert eta_count([], 0, 5, -1, 1) == 0
    walk = _traj(0, [0, 1, 2, 3])
    assert eta_count([walk], 0, 3, -1, 1) == 1
    assert eta_count([walk], 0, 3, 1, 2) == 0  # starts outside the window


def test_eta_rejects_bad_window():
    with pytest.raises(InvalidArgumentError):
        eta_count([], 0, 5, 2, 1)
    with pytest.raises(InvalidArgumentError):
        eta_count([], 0, 0, 0, 1)


def test_eta_against_brute_force_on_coalescing_families():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        length = int(rng.integers(2, 20))
        fam = _coalescing_family(rng, k, length)
        t = int(rng.integers(1, length + 1))
        a = int(rng.integers(-9, 5))
        b = a + int(rng.integers(0, 10))
        expected = len({int(w.values[t]) for w in fam
                        if a <= int(w.values[0]) <= b})
        assert eta_count(fam, 0, t, a, b) == expected


def test_eta_monotone_in_window_and_set():
    rng = np.random.default_rng(19)
    for _ in range(200):
        fam = _coalescing_family(rng, 5, 10)
        base = eta_count(fam, 0, 5, -2, 2)
        assert eta_count(fam, 0, 5, -4, 4) >= base
        assert eta_count(fam[:3], 0, 5, -2, 2) <= base


def test_eta_nonincreasing_in_t_for_coalescing_families():
    rng = np.random.default_rng(23)
    for _ in range(200):
        fam = _coalescing_family(rng, 5, 16)
        etas = [eta_count(fam, 0, t, -8, 8) for t in range(1, 17)]
        assert all(a >= b for a, b in zip(etas[:-1], etas[1:]))


def test_eta_coalesced_family_counts_one():
    merged = [_traj(0, [0, 1, 2, 3]), _traj(0, [2, 1, 2, 3])]
    assert eta_count(merged, 0, 3, 0, 2) == 1


def test_even_span():
    assert even_span(27.6) == 30
    assert even_span(2.0) == 4
    assert even_span(0.5) == 4


# -- batteries ---------------------------------------------------------------

def test_b1_estimate_matches_walk_oracle_at_effective_gap():
    from opweb.oracle import coalescing_walk_survival
    rows = b1_battery(0.8, 1e-3, 1.0, [1.0], 4000, sigma_hat=0.8733, seed=8,
                      workers=2)
    row = rows[0]
    oracle = coalescing_walk_survival(row["delta_eff"], 1.0,
                                      replicas=2 * 10**5, seed=4)
    assert abs(oracle - row["baseline"]) < 0.01
    assert abs(row["estimate"] - oracle) < 0.02


def test_b1_probability_increases_with_gap():
    rows = b1_battery(0.8, 0.01, 0.5, [0.5, 1.0, 2.0], 400,
                      sigma_hat=0.8733, seed=6, workers=2)
    estimates = [row["estimate"] for row in rows]
    assert estimates[0] <= estimates[1] + 0.05
    assert estimates[1] <= estimates[2] + 0.05


def test_b1_large_t_kills_eta():
    rows = b1_battery(0.8, 0.05, 20.0, [0.25], 200, sigma_hat=0.8733, seed=2,
                      workers=2)
    assert rows[0]["estimate"] < 0.05


def test_b2_tiny_window_cannot_reach_three():
    rep = b2_fkg_check(0.8, 60, 1, 400, seed=3, workers=2)
    assert rep.p3 == 0.0


def test_b2_full_lattice_boundary_case():
    rep = b2_fkg_check(1.0, 50, 3, 60, seed=1)
    assert rep.p3 == 1.0
    assert rep.rhs == 1.0
    assert rep.holds


def test_b2_moderate_run_holds():
    rep = b2_fkg_check(0.8, 200, 8, 2000, seed=12, workers=2)
    assert rep.p3 <= rep.rhs + rep.slack
    assert 0 < rep.p2 < 1
