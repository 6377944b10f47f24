import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from games import always_first, both_nash_profiles, dominant_edge_game, only_route_one, two_route_counterexample
from obedience_lab.equilibrium import nash_policy
from obedience_lab.errors import EmptySupport, UnsupportedNorm
from obedience_lab.experiments import random_game
from obedience_lab.model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    SupportPattern,
    deviation_matrix,
    support_pattern_of,
)
from obedience_lab.robustness import (
    Mode,
    NormChoice,
    _worst_case,
    certified_radius,
    certified_radius_star,
    is_obedient,
    is_robust_obedient,
    lemma1_check,
    pattern_count,
    pattern_lp,
    population_check,
    project_to_simplex,
    robust_radius,
    sample_beliefs,
    worst_case_belief_lp,
    worst_case_slack,
    worst_case_slacks,
)

PAIR12 = DeviationPair(0, 1)
NASH = SignalingPolicy([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def counter():
    return two_route_counterexample(), only_route_one(), always_first()


def test_worst_case_examples(counter):
    inst, X, pol = counter
    for mode in Mode:
        v, mu = worst_case_slack(inst, X, pol, PAIR12, 0.0, "l1", mode)
        assert v == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(mu, inst.prior)
    v, mu = worst_case_slack(inst, X, pol, PAIR12, 0.2, "l1", Mode.EXACT)
    assert v == pytest.approx(-0.3, abs=1e-12)
    np.testing.assert_allclose(mu, [1 / 3 - 0.1, 2 / 3 + 0.1], atol=1e-12)
    v, _ = worst_case_slack(inst, X, pol, PAIR12, 0.2, "l1", Mode.CONSERVATIVE)
    assert v == pytest.approx(-0.4, abs=1e-12)


def test_exact_l2_is_unsupported(counter):
    with pytest.raises(UnsupportedNorm):
        worst_case_slack(*counter, PAIR12, 0.1, "l2", Mode.EXACT)


def test_brute_force_segment(counter):
    inst, X, pol = counter
    t = np.linspace(-0.1, 0.1, 20001)  # the l1 ball of radius 0.2 on the simplex
    brute = (3 * (1 / 3 + t) - 1).min()
    assert worst_case_slack(inst, X, pol, PAIR12, 0.2, "l1", Mode.EXACT)[0] == pytest.approx(brute, abs=1e-12)


@st.composite
def deviation_case(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    S = draw(st.integers(1, 7))
    D = rng.normal(size=S) * (rng.random(S) < 0.8)
    mu0 = rng.dirichlet(np.ones(S) * draw(st.sampled_from([0.3, 1.0, 5.0])))
    eps = draw(st.sampled_from([0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 3.0]))
    return D, mu0, eps


@given(deviation_case(), st.sampled_from(["l1", "linf"]))
def test_greedy_matches_lp_oracle(case, norm):
    D, mu0, eps = case
    norm = NormChoice.parse(norm)
    greedy, mu = _worst_case(D, mu0, eps, norm, Mode.EXACT)
    lp, _ = worst_case_belief_lp(D, mu0, eps, norm)
    assert greedy == pytest.approx(lp, abs=1e-9)
    assert mu.min() >= -1e-12 and mu.sum() == pytest.approx(1.0)
    assert norm.norm(mu - mu0) <= eps + 1e-9
    assert mu @ D == pytest.approx(greedy, abs=1e-12)


@given(deviation_case(), st.sampled_from(["l1", "l2", "linf"]))
def test_conservative_is_below_exact_and_monotone(case, norm):
    D, mu0, eps = case
    norm = NormChoice.parse(norm)
    cons = _worst_case(D, mu0, eps, norm, Mode.CONSERVATIVE)[0]
    assert cons == pytest.approx(mu0 @ D - eps * norm.dual_norm(D), abs=1e-12)
    if norm.p != 2.0:
        exact = _worst_case(D, mu0, eps, norm, Mode.EXACT)[0]
        assert cons <= exact + 1e-12
        assert _worst_case(D, mu0, eps + 0.1, norm, Mode.EXACT)[0] <= exact + 1e-12
    assert _worst_case(D, mu0, eps + 0.1, norm, Mode.CONSERVATIVE)[0] <= cons + 1e-12


def test_robust_obedience_examples(counter):
    inst, X, pol = counter
    assert is_robust_obedient(inst, X, pol, 0.0)[0] == is_obedient(inst, X, pol)
    for eps in (1e-6, 0.01, 0.5):
        ok, bad = is_robust_obedient(inst, X, pol, eps, "l1", Mode.EXACT)
        assert not ok and bad[0][0] == PAIR12
    Xn = both_nash_profiles()
    assert is_robust_obedient(inst, Xn, nash_policy(inst, Xn), 2.0, "l1", Mode.EXACT)[0]


def test_radius_examples(counter):
    inst, X, pol = counter
    for mode in Mode:
        assert robust_radius(inst, X, pol, "l1", mode) == 0.0
    assert robust_radius(inst, both_nash_profiles(), NASH, "l1", Mode.EXACT) == math.inf
    # the conservative ball leaves the simplex: min(2/3 / 2, (2/3) / 1)
    assert robust_radius(inst, both_nash_profiles(), NASH, "l1", Mode.CONSERVATIVE) == pytest.approx(1 / 3)


def test_conservative_radius_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(50):
        inst, X = random_game(rng, 3, 3, 4)
        pol = SignalingPolicy(rng.dirichlet(np.ones(len(X)), 3))
        Dm = deviation_matrix(inst, X, pol)
        if not is_obedient(inst, X, pol):
            continue
        for norm in ("l1", "l2", "linf"):
            nc = NormChoice.parse(norm)
            expect = min(max(inst.prior @ D, 0) / nc.dual_norm(D) for D in Dm if nc.dual_norm(D) > 0)
            assert robust_radius(inst, X, pol, norm) == pytest.approx(expect, abs=1e-12)


def test_exact_radius_is_the_feasibility_boundary():
    rng = np.random.default_rng(4)
    seen = 0
    while seen < 20:
        inst, X = random_game(rng, 2, 2, 3)
        pol = SignalingPolicy(rng.dirichlet(np.ones(len(X)), 2))
        if not is_obedient(inst, X, pol):
            continue
        rho = robust_radius(inst, X, pol, "l1", Mode.EXACT)
        if not 0 < rho < math.inf:
            continue
        seen += 1
        assert is_robust_obedient(inst, X, pol, rho, "l1", Mode.EXACT)[0]
        assert not is_robust_obedient(inst, X, pol, rho + 2e-6, "l1", Mode.EXACT)[0]
        assert robust_radius(inst, X, pol, "l1") <= rho + 1e-6


def test_certificate_examples(counter):
    inst = two_route_counterexample()
    cert = certified_radius(inst, both_nash_profiles(), NASH, "l1")
    assert not cert.vacuous
    assert cert.radius == pytest.approx(1 / 3, abs=1e-12)
    bad = certified_radius(*counter, "l1")
    assert bad.vacuous and bad.radius == 0.0
    assert bad.pairs[0].sigma_lo == -1.0


def test_certificate_single_pair_formula():
    inst = GameInstance([0.3, 0.7], np.zeros((2, 2)), [[0.0, 0.5], [1.0, 2.0]])
    X = RecommendationSet([[1.0, 0.0]])
    pol = SignalingPolicy([[1.0], [1.0]])
    for norm in ("l1", "l2", "linf"):
        nc = NormChoice.parse(norm)
        cert = certified_radius(inst, X, pol, norm)
        # gaps 1.0 and 1.5 on the support, mass 1
        assert cert.radius == pytest.approx(1.0 / (nc.state_factor(2) * 1.5), abs=1e-12)


def test_certificate_is_sound_for_dominant_edge_games():
    rng = np.random.default_rng(8)
    for _ in range(40):
        inst, X, dom = dominant_edge_game(rng, int(rng.integers(2, 5)), int(rng.integers(1, 5)), 2)
        pol = SignalingPolicy.deterministic(dom, len(X))
        for norm in ("l1", "linf"):
            cert = certified_radius(inst, X, pol, norm)
            assert not cert.vacuous and cert.radius > 0
            cons = robust_radius(inst, X, pol, norm, Mode.CONSERVATIVE)
            assert cert.radius <= cons + 1e-12
            assert cons <= robust_radius(inst, X, pol, norm, Mode.EXACT) + 1e-6
            assert is_robust_obedient(inst, X, pol, cert.radius, norm, Mode.CONSERVATIVE)[0]


def test_sandwich_bounds_random_trials():
    rng = np.random.default_rng(1)
    for _ in range(500):
        E, S = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        inst, X = random_game(rng, E, S, int(rng.integers(1, 5)), zero_slope_prob=0.1)
        pol = SignalingPolicy(rng.dirichlet(np.ones(len(X)), S))
        r, a = rng.choice(E, 2, replace=False)
        norm = rng.choice(["l1", "l2", "linf"])
        assert lemma1_check(inst, X, pol, (r, a), norm)


def test_sandwich_bounds_examples():
    inst = two_route_counterexample()
    assert lemma1_check(inst, both_nash_profiles(), NASH, PAIR12)
    with pytest.raises(EmptySupport):
        lemma1_check(inst, only_route_one(), always_first(), (1, 0))
    one = GameInstance([1.0], [[1.0], [0.5]], [[0.0], [0.2]])
    Xo = RecommendationSet([[0.3, 0.7]])
    assert lemma1_check(one, Xo, SignalingPolicy([[1.0]]), (0, 1))
    c = certified_radius(one, Xo, SignalingPolicy([[1.0]]))
    assert all(p.sigma_lo == p.sigma_hi for p in c.pairs)


def test_pattern_lp_examples():
    inst, X = two_route_counterexample(), both_nash_profiles()
    route_pos = X.profiles.T > 0
    nash_pattern = SupportPattern(np.eye(2, dtype=bool), route_pos)
    value, pol = pattern_lp(inst, X, nash_pattern, "l1")
    assert value >= 1 / 3 - 1e-9
    np.testing.assert_allclose(pol.weights, NASH.weights)
    forced = SupportPattern(np.array([[True, False], [True, False]]), route_pos)
    assert pattern_lp(inst, X, forced)[0] < 0


def test_pattern_lp_single_cell():
    inst = GameInstance([1.0], [[1.0], [0.5]], [[0.0], [0.4]])
    X = RecommendationSet([[0.2, 0.8]])
    pat = support_pattern_of(X, SignalingPolicy([[1.0]]))
    value, _ = pattern_lp(inst, X, pat, "l1")
    assert value == pytest.approx(certified_radius(inst, X, SignalingPolicy([[1.0]])).radius, abs=1e-12) \
        or value < 0


def test_pattern_search_examples():
    inst = two_route_counterexample()
    res = certified_radius_star(inst, both_nash_profiles(), "l1")
    assert res.complete and res.n_patterns == 9 == pattern_count(2, 2)
    assert res.value >= 1 / 3 - 1e-9
    single = certified_radius_star(inst, only_route_one(), "l1")
    assert single.value == 0.0 and single.raw_value < 0


def test_pattern_search_budget_is_a_lower_bound():
    rng = np.random.default_rng(6)
    for _ in range(15):
        inst, X, _ = dominant_edge_game(rng, 2, 2, 1)
        full = certified_radius_star(inst, X, "l1")
        cheap = certified_radius_star(inst, X, "l1", budget=1)
        assert not cheap.complete
        assert cheap.value <= full.value + 1e-9


def test_population_examples(counter):
    inst = two_route_counterexample()
    Xn = both_nash_profiles()
    assert population_check(inst, Xn, NASH, 0.5, "l1", n_agents=2000) == 1.0
    frac = population_check(*counter, 0.2, "l1", n_agents=2000)
    assert 0.0 < frac < 1.0
    assert population_check(*counter, 0.0, "l1", n_agents=100) == 1.0


def test_sampled_beliefs_stay_in_the_ball():
    rng = np.random.default_rng(0)
    prior = np.array([0.2, 0.5, 0.3])
    for norm in ("l1", "l2", "linf"):
        B = sample_beliefs(prior, 0.1, norm, 300, rng)
        assert np.all(B >= 0) and np.allclose(B.sum(axis=1), 1.0)
        assert np.all(np.linalg.norm(B - prior, ord=NormChoice.parse(norm).p, axis=1) <= 0.1 + 1e-9)


def test_projection_onto_simplex():
    v = np.array([0.5, 0.9, -0.3])
    p = project_to_simplex(v)
    assert p.sum() == pytest.approx(1.0) and p.min() >= 0
    np.testing.assert_allclose(project_to_simplex(np.array([0.2, 0.8])), [0.2, 0.8])


def test_norm_choice():
    assert NormChoice.parse("l1").q == math.inf
    assert NormChoice.parse("linf").q == 1.0
    assert NormChoice.parse(2).q == 2.0
    assert NormChoice.parse("l1").kappa(5) == pytest.approx(1.0)
    assert NormChoice.parse("linf").kappa(5) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        NormChoice.parse("l3")


def test_worst_case_slacks_cover_every_pair(counter):
    s = worst_case_slacks(*counter, 0.2, "l1", Mode.EXACT)
    np.testing.assert_allclose(s, [-0.3, 0.0], atol=1e-12)
