import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from games import always_first, both_nash_profiles, only_route_one, two_route_counterexample
from obedience_lab.design import robust_design
from obedience_lab.errors import NondifferentiablePoint, NotOptimal, RankDeficientActiveSet
from obedience_lab.experiments import build_geometric_instance, generate_instance
from obedience_lab.model import DeviationPair, GameInstance, RecommendationSet, _pair_index, weighted_gap_table
from obedience_lab.robustness import Mode, NormChoice
from obedience_lab.sensitivity import (
    active_set,
    jacobi_eigenvalues,
    projected_jacobian,
    slope_bound,
    smallest_singular_value,
    sweep_slope_bounds,
    value_sweep,
)

GRID = [0.0, 0.05, 0.1, 0.2, 0.4]


def h_value(inst, X, weights, eps, pair, norm):
    """Robust slack of one pair evaluated straight from the gap table."""
    g = weighted_gap_table(inst, X)[_pair_index(inst.edge_count, pair)]
    D = (weights * g).sum(axis=1)
    return inst.prior @ D - eps * NormChoice.parse(norm).dual_norm(D)


def test_sweep_examples():
    inst = two_route_counterexample(prior=(0.5, 0.5))
    bad = value_sweep(inst, RecommendationSet([[0.0, 1.0]]), GRID)
    assert not bad.feasible.any() and bad.frontier is None
    assert bad.prefix_feasible()
    nash = value_sweep(two_route_counterexample(), both_nash_profiles(), GRID + [1.0, 2.0], "l1", Mode.EXACT)
    assert nash.feasible.all() and nash.frontier == 2.0
    single = value_sweep(two_route_counterexample(), only_route_one(), GRID)
    assert single.feasible.tolist() == [True] + [False] * 4 and single.frontier == 0.0


def test_sweep_rejects_bad_grids():
    inst, X = two_route_counterexample(), both_nash_profiles()
    for grid in ([0.1, 0.2], [0.0, 0.2, 0.1], []):
        with pytest.raises(ValueError):
            value_sweep(inst, X, grid)


def test_sweeps_are_monotone_and_prefix_feasible():
    for i in range(8):
        inst, X = generate_instance(3, index=i)
        sw = value_sweep(inst, X, [0.02 * k for k in range(11)])
        assert sw.prefix_feasible()
        v = sw.values[sw.feasible]
        assert np.all(np.diff(v) >= -1e-8)


def test_active_set_examples():
    rep = robust_design(two_route_counterexample(), only_route_one(), 0.0)
    assert active_set(rep) == [DeviationPair(0, 1)]
    inst = GameInstance([0.5, 0.5], np.zeros((2, 2)), [[0.0, 2.0], [2.0, 0.0]])
    X = RecommendationSet([[0.9, 0.1], [0.1, 0.9]])
    assert active_set(robust_design(inst, X, 0.0)) == []
    with pytest.raises(NotOptimal):
        active_set(robust_design(two_route_counterexample(), only_route_one(), 0.1))


def test_geometric_crossing_adds_an_active_pair():
    inst, X = build_geometric_instance()
    assert active_set(robust_design(inst, X, 0.0)) == []
    assert len(active_set(robust_design(inst, X, 0.03))) >= 1


def test_projected_jacobian_at_zero_eps_is_projected_slack_gradient():
    inst, X = build_geometric_instance()
    pol = robust_design(inst, X, 0.0).policy
    pair = DeviationPair(0, 1)
    G = projected_jacobian(inst, X, pol, 0.0, [pair])
    grad = inst.prior[:, None] * weighted_gap_table(inst, X)[0]
    np.testing.assert_allclose(G[0], (grad - grad.mean(axis=1, keepdims=True)).reshape(-1))
    assert np.allclose(G.reshape(1, 2, 2).sum(axis=2), 0.0)


def test_projected_jacobian_single_state_formula():
    inst = GameInstance([1.0], [[1.0], [0.5]], [[0.0], [0.3]])
    X = RecommendationSet([[0.7, 0.3], [0.4, 0.6]])
    pair = DeviationPair(0, 1)
    g = weighted_gap_table(inst, X)[0, 0]  # x_r * Delta for both profiles
    G = projected_jacobian(inst, X, [[0.5, 0.5]], 0.0, [pair])
    np.testing.assert_allclose(G[0], g - g.mean())


def test_projected_jacobian_matches_finite_differences():
    inst, X = build_geometric_instance()
    rng = np.random.default_rng(0)
    for eps in (0.03, 0.05):
        rep = robust_design(inst, X, eps, "l1")
        B = active_set(rep)
        G = projected_jacobian(inst, X, rep.policy, eps, B, "l1")
        W = rep.policy.weights
        for _ in range(20):
            v = rng.normal(size=W.shape)
            v -= v.mean(axis=1, keepdims=True)
            v /= np.linalg.norm(v)
            t = 1e-6
            for row, pair in zip(G, B):
                fd = (h_value(inst, X, W + t * v, eps, pair, "l1")
                      - h_value(inst, X, W - t * v, eps, pair, "l1")) / (2 * t)
                assert fd == pytest.approx(row @ v.reshape(-1), abs=1e-5)


def test_kinks_are_reported():
    inst, X = two_route_counterexample(), both_nash_profiles()
    # D for pair (0,1) under the Nash policy is (2, 0): zero in a live state
    pol = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(NondifferentiablePoint):
        projected_jacobian(inst, X, pol, 0.1, [DeviationPair(0, 1)], "linf")
    # a tie in the sup-norm
    tie = GameInstance([0.5, 0.5], np.zeros((2, 2)), [[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(NondifferentiablePoint):
        projected_jacobian(tie, RecommendationSet([[1.0, 0.0]]), [[1.0], [1.0]], 0.1,
                           [DeviationPair(0, 1)], "l1")


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_jacobi_matches_numpy(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) * rng.choice([1e-3, 1.0, 1e3])
    S = A @ A.T
    np.testing.assert_allclose(np.sort(jacobi_eigenvalues(S)), np.linalg.eigvalsh(S),
                               atol=1e-9 * max(1.0, np.abs(S).max()))


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 8))
def test_smallest_singular_value(seed, m, n):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, n))
    ref = np.linalg.svd(G, compute_uv=False).min() if m <= n else 0.0
    assert smallest_singular_value(G) == pytest.approx(ref, abs=1e-7)


def test_slope_bound_basics():
    inst, X = build_geometric_instance()
    rep0 = robust_design(inst, X, 0.0)
    r0 = slope_bound(inst, X, rep0)
    assert r0.n_active == 0 and r0.bound == 0.0
    assert not r0.differentiable  # eps = 0 is a boundary point
    assert r0.kappa == 1.0
    rep = robust_design(inst, X, 0.03)
    r = slope_bound(inst, X, rep)
    assert r.n_active == 1 and math.isfinite(r.bound) and r.sigma_min > 0
    assert r.differentiable and r.checkable
    assert r.fd_slope == pytest.approx(r.envelope, rel=1e-4)
    assert r.to_dict()["bound"] == r.bound
    with pytest.raises(ValueError):
        slope_bound(inst, X, robust_design(inst, X, 0.03, "l1", Mode.EXACT))
    with pytest.raises(NotOptimal):
        slope_bound(two_route_counterexample(), only_route_one(),
                    robust_design(two_route_counterexample(), only_route_one(), 0.1))


def test_rank_deficiency():
    inst, X = two_route_counterexample(), only_route_one()
    rep = robust_design(inst, X, 0.0)
    with pytest.raises(RankDeficientActiveSet):
        slope_bound(inst, X, rep)
    loose = slope_bound(inst, X, rep, strict=False)
    assert loose.bound == math.inf and not loose.checkable
    assert always_first().weights.sum() == 2


def test_envelope_matches_finite_difference_slope():
    checked = 0
    for i in range(6):
        inst, X = generate_instance(1, index=i)
        sw = value_sweep(inst, X, [0.0, 0.02, 0.04, 0.06])
        for b in sweep_slope_bounds(inst, X, sw):
            if b is not None and b.differentiable and b.n_active:
                checked += 1
                assert b.fd_slope == pytest.approx(b.envelope, abs=1e-5 * max(1.0, abs(b.envelope)))
                assert b.fd_slope >= -1e-8
    assert checked > 0
