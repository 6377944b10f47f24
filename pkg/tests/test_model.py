import numpy as np
import pytest
from hypothesis import given, strategies as st

from games import always_first, both_nash_profiles, only_route_one, two_route_counterexample
from obedience_lab.experiments import build_geometric_instance, policy_from_p, random_game
from obedience_lab.model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    delta,
    deviation_matrix,
    deviation_pairs,
    deviation_vector,
    expected_cost,
    latency,
    obedience_slack,
    recommendation_masses,
    social_cost_profile,
    support_pattern_of,
)

PAIR12 = DeviationPair(0, 1)


def test_latency_examples():
    inst, _ = build_geometric_instance()
    assert latency(inst, 0, 0, 0.55) == pytest.approx(0.654, abs=1e-12)
    assert latency(inst, 1, 0, 1.0) == pytest.approx(2.0, abs=1e-12)
    assert latency(inst, 1, 2, 0.0) == inst.intercept[2, 1]
    assert latency(two_route_counterexample(), 1, 1, 1.0) == 1.0


def test_latency_rejects_bad_index():
    inst, _ = build_geometric_instance()
    with pytest.raises((IndexError, ValueError)):
        latency(inst, 0, 3, 0.5)
    with pytest.raises((IndexError, ValueError)):
        latency(inst, 2, 0, 0.5)


def test_social_cost_examples():
    inst, X = build_geometric_instance()
    assert social_cost_profile(inst, 0, X.profiles[0]) == pytest.approx(0.9311, abs=1e-4)
    flat = GameInstance([1.0], [[0.7], [0.3]], [[0.0], [0.0]])
    assert social_cost_profile(flat, 0, [0.0, 1.0]) == pytest.approx(0.3)
    assert social_cost_profile(two_route_counterexample(), 0, [1.0, 0.0]) == 0.0


def test_delta_examples():
    inst = two_route_counterexample()
    assert delta(inst, 0, 1, 0, [1.0, 0.0]) == 2.0
    assert delta(inst, 0, 1, 1, [1.0, 0.0]) == -1.0
    sym = GameInstance([1.0], [[0.5], [0.5]], [[0.2], [0.2]])
    assert delta(sym, 0, 1, 0, [0.5, 0.5]) == 0.0
    with pytest.raises(ValueError):
        delta(inst, 1, 1, 0, [1.0, 0.0])


def test_slack_is_three_mu_minus_one():
    inst, X, pol = two_route_counterexample(), only_route_one(), always_first()
    for mu1 in np.linspace(0, 1, 11):
        s = obedience_slack(inst, X, pol, [mu1, 1 - mu1], PAIR12)
        assert s == pytest.approx(3 * mu1 - 1, abs=1e-12)
    assert obedience_slack(inst, X, pol, [1 / 3, 2 / 3], PAIR12) == pytest.approx(0.0, abs=1e-15)
    # route 2 is never recommended
    assert obedience_slack(inst, X, pol, [0.5, 0.5], DeviationPair(1, 0)) == 0.0


def test_slack_rejects_wrong_dimensions():
    inst, X = two_route_counterexample(), only_route_one()
    with pytest.raises(ValueError):
        obedience_slack(inst, X, always_first(3), [0.5, 0.5], PAIR12)
    with pytest.raises(ValueError):
        obedience_slack(inst, X, always_first(), [0.2, 0.3, 0.5], PAIR12)


def test_deviation_vector_examples():
    inst, X, pol = two_route_counterexample(), only_route_one(), always_first()
    np.testing.assert_allclose(deviation_vector(inst, X, pol, PAIR12), [2.0, -1.0])
    np.testing.assert_array_equal(deviation_vector(inst, X, pol, DeviationPair(1, 0)), [0.0, 0.0])
    g_inst, g_X = build_geometric_instance()
    d = deviation_vector(g_inst, g_X, policy_from_p((1, 1)), PAIR12)
    assert d[0] == pytest.approx(0.55 * (1.46 - 0.654), abs=1e-4)


def test_expected_cost_examples():
    inst, X, pol = two_route_counterexample(), only_route_one(), always_first()
    assert expected_cost(inst, X, pol) == pytest.approx(4 / 3)
    g_inst, g_X = build_geometric_instance()
    one = GameInstance([1.0], g_inst.slope[:, :1], g_inst.intercept[:, :1])
    Xs = RecommendationSet(g_X.profiles[:1])
    assert expected_cost(one, Xs, SignalingPolicy([[1.0]])) == social_cost_profile(one, 0, Xs.profiles[0])


def test_recommendation_masses_examples():
    _, mbar = recommendation_masses(only_route_one(), always_first(), [1 / 3, 2 / 3])
    np.testing.assert_allclose(mbar, [1.0, 0.0])
    m, mbar = recommendation_masses(both_nash_profiles(), SignalingPolicy([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5])
    np.testing.assert_allclose(mbar, [0.5, 0.5])
    nash = SignalingPolicy([[1.0, 0.0], [0.0, 1.0]])
    m, mbar = recommendation_masses(both_nash_profiles(), nash, [1 / 3, 2 / 3])
    assert mbar[0] == pytest.approx(1 / 3)
    np.testing.assert_allclose(m[0], [1.0, 0.0])


def test_support_pattern_examples():
    X = both_nash_profiles()
    det = support_pattern_of(X, SignalingPolicy.deterministic([1, 0], 2))
    assert det.gamma.sum(axis=1).tolist() == [1, 1]
    full = support_pattern_of(X, SignalingPolicy([[0.3, 0.7], [0.6, 0.4]]))
    assert full.gamma.all()
    nash = support_pattern_of(X, SignalingPolicy([[1.0, 0.0], [0.0, 1.0]]))
    assert nash.per_route(0) == {(0, 0)}
    assert nash.per_route(1) == {(1, 1)}


def test_deviation_pair_order():
    assert deviation_pairs(3) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]


@pytest.mark.parametrize("kwargs", [
    dict(prior=[0.5, 0.6], slope=np.ones((2, 2)), intercept=np.ones((2, 2))),
    dict(prior=[0.5, 0.5], slope=-np.ones((2, 2)), intercept=np.ones((2, 2))),
    dict(prior=[0.5, 0.5], slope=np.ones((2, 2)), intercept=-np.ones((2, 2))),
    dict(prior=[0.5, 0.5], slope=np.ones((3, 2)), intercept=np.ones((2, 2))),
])
def test_instance_validation(kwargs):
    with pytest.raises(ValueError):
        GameInstance(**kwargs)


def test_profile_and_policy_validation():
    with pytest.raises(ValueError):
        RecommendationSet([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        RecommendationSet([[0.6, 0.5]])
    with pytest.raises(ValueError):
        SignalingPolicy([[0.5, 0.4]])
    with pytest.raises(ValueError):
        SignalingPolicy([[1.2, -0.2]])


@st.composite
def game_and_policies(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    E, S, K = draw(st.integers(2, 4)), draw(st.integers(1, 4)), draw(st.integers(1, 5))
    inst, X = random_game(rng, E, S, K, zero_slope_prob=0.2)
    pols = [SignalingPolicy(rng.dirichlet(np.ones(len(X)), S)) for _ in range(2)]
    mu = rng.dirichlet(np.ones(S))
    return inst, X, pols, mu, rng.uniform()


@given(game_and_policies())
def test_slack_is_inner_product_with_deviation_vector(case):
    inst, X, (pol, _), mu, _ = case
    D = deviation_matrix(inst, X, pol)
    for i, pair in enumerate(deviation_pairs(inst.edge_count)):
        assert obedience_slack(inst, X, pol, mu, pair) == pytest.approx(mu @ D[i], abs=1e-12)


@given(game_and_policies())
def test_masses_sum_to_one(case):
    inst, X, (pol, _), mu, _ = case
    m, mbar = recommendation_masses(X, pol, mu)
    assert mbar.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(m.sum(axis=0), 1.0, atol=1e-12)


@given(game_and_policies())
def test_cost_and_slacks_are_linear_in_policy(case):
    inst, X, (p, q), mu, lam = case
    mix = SignalingPolicy(lam * p.weights + (1 - lam) * q.weights)
    c = lam * expected_cost(inst, X, p) + (1 - lam) * expected_cost(inst, X, q)
    assert expected_cost(inst, X, mix) == pytest.approx(c, abs=1e-12)
    d = lam * deviation_matrix(inst, X, p) + (1 - lam) * deviation_matrix(inst, X, q)
    np.testing.assert_allclose(deviation_matrix(inst, X, mix), d, atol=1e-12)
