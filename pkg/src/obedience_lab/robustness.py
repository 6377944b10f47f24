"""Worst-case beliefs, robust radii, certified radii and support-pattern search.

Two readings of the belief neighbourhood are supported:

* ``Mode.CONSERVATIVE`` uses the full norm ball around the prior, so the
  worst-case slack has the closed form ``A - eps * ||D||_q``.
* ``Mode.EXACT`` intersects the ball with the probability simplex.  For the
  polyhedral norms (l1, linf) the inner minimisation is solved exactly by a
  greedy mass transfer; ``worst_case_belief_lp`` solves the same problem as
  an LP and is kept as an independent check.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupport, UnsupportedNorm
from .lp import LinearProgram, solve_lp
from .model import (
    SUPPORT_TOL,
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    SupportPattern,
    _pair_index,
    _weights,
    check_belief,
    deviation_matrix,
    deviation_pairs,
    gap_table,
    recommendation_masses,
    support_pattern_of,
)

FEAS_TOL = 1e-9
RADIUS_TOL = 1e-6
DEFAULT_BUDGET = 10**5


class Mode(str, enum.Enum):
    CONSERVATIVE = "conservative"
    EXACT = "exact"


@dataclass(frozen=True)
class NormChoice:
    """Belief-space l_p norm with its dual exponent q (1/p + 1/q = 1)."""

    p: float = 1.0

    def __post_init__(self):
        if self.p not in (1.0, 2.0, math.inf):
            raise ValueError(f"unsupported norm exponent {self.p}")

    @classmethod
    def parse(cls, text) -> "NormChoice":
        if isinstance(text, NormChoice):
            return text
        key = str(text).lower().lstrip("l")
        table = {"1": 1.0, "2": 2.0, "inf": math.inf, "infty": math.inf}
        if key not in table:
            raise ValueError(f"unknown norm {text!r}; use l1, l2 or linf")
        return cls(table[key])

    @property
    def q(self) -> float:
        if self.p == 1.0:
            return math.inf
        if self.p == math.inf:
            return 1.0
        return 2.0

    @property
    def label(self) -> str:
        return "linf" if self.p == math.inf else f"l{int(self.p)}"

    def norm(self, z) -> float:
        return float(np.linalg.norm(np.asarray(z, dtype=float), ord=self.p))

    def dual_norm(self, z) -> float:
        return float(np.linalg.norm(np.asarray(z, dtype=float), ord=self.q))

    def state_factor(self, n_states: int) -> float:
        """``|Omega|^(1/q)``."""
        return 1.0 if self.q == math.inf else n_states ** (1.0 / self.q)

    def kappa(self, n_states: int) -> float:
        """``sup ||z||_q / ||z||_inf``."""
        return self.state_factor(n_states)

    @property
    def simplex_cap(self) -> float:
        """Radius beyond which the ball contains the whole simplex."""
        return {1.0: 2.0, 2.0: math.sqrt(2.0), math.inf: 1.0}[self.p]


L1 = NormChoice(1.0)


def _as_norm(norm) -> NormChoice:
    return L1 if norm is None else NormChoice.parse(norm)


# --- inner minimisation over beliefs ---------------------------------------

def _greedy_l1(D: np.ndarray, mu0: np.ndarray, eps: float) -> np.ndarray:
    """Move up to eps/2 mass from the costliest states onto the cheapest one."""
    mu = mu0.copy()
    j = int(np.argmin(D))
    budget = min(eps / 2.0, 1.0 - mu0[j])
    for i in np.argsort(-D, kind="stable"):
        if budget <= 0 or D[i] <= D[j]:
            break
        take = min(mu[i], budget)
        mu[i] -= take
        mu[j] += take
        budget -= take
    return mu


def _greedy_linf(D: np.ndarray, mu0: np.ndarray, eps: float) -> np.ndarray:
    """Start every state at its lower bound and fill cheapest-first."""
    lo = np.maximum(mu0 - eps, 0.0)
    hi = np.minimum(mu0 + eps, 1.0)
    mu = lo.copy()
    rest = 1.0 - lo.sum()
    for i in np.argsort(D, kind="stable"):
        if rest <= 0:
            break
        add = min(hi[i] - lo[i], rest)
        mu[i] += add
        rest -= add
    return mu


def _conservative_direction(D: np.ndarray, eps: float, norm: NormChoice) -> np.ndarray:
    """Point of the eps-ball (around 0) minimising <., D>."""
    if not np.any(D):
        return np.zeros_like(D)
    if norm.p == 1.0:
        v = np.zeros_like(D)
        j = int(np.argmax(np.abs(D)))
        v[j] = -eps * np.sign(D[j])
        return v
    if norm.p == math.inf:
        return -eps * np.sign(D)
    return -eps * D / np.linalg.norm(D)


def _worst_case(D: np.ndarray, mu0: np.ndarray, eps: float, norm: NormChoice, mode: Mode):
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return float(mu0 @ D), mu0.copy()
    if mode is Mode.CONSERVATIVE:
        return float(mu0 @ D - eps * norm.dual_norm(D)), mu0 + _conservative_direction(D, eps, norm)
    if norm.p == 2.0:
        raise UnsupportedNorm("exact simplex worst case is only polyhedral for l1 and linf")
    mu = _greedy_l1(D, mu0, eps) if norm.p == 1.0 else _greedy_linf(D, mu0, eps)
    return float(mu @ D), mu


def worst_case_belief_lp(D, mu0, eps: float, norm) -> tuple[float, np.ndarray]:
    """Exact ``min <mu, D>`` over the simplex-intersected ball, as an LP."""
    norm = _as_norm(norm)
    D = np.asarray(D, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    n = D.size
    if norm.p == 2.0:
        raise UnsupportedNorm("l2 ball is not polyhedral")
    if norm.p == math.inf:
        lp = LinearProgram(D, np.ones((1, n)), ["="], [1.0],
                           lower=np.maximum(mu0 - eps, 0.0), upper=np.minimum(mu0 + eps, 1.0))
        sol = solve_lp(lp)
        return sol.objective, sol.x
    # variables (mu, t): t >= |mu - mu0|, sum t <= eps
    I = np.eye(n)
    A = np.vstack([
        np.hstack([np.ones((1, n)), np.zeros((1, n))]),
        np.hstack([-I, I]),
        np.hstack([I, I]),
        np.hstack([np.zeros((1, n)), np.ones((1, n))]),
    ])
    b = np.concatenate([[1.0], -mu0, mu0, [eps]])
    senses = ["="] + [">="] * (2 * n) + ["<="]
    sol = solve_lp(LinearProgram(np.concatenate([D, np.zeros(n)]), A, senses, b))
    return sol.objective, sol.x[:n]


def worst_case_slack(inst: GameInstance, X: RecommendationSet, policy, pair, eps: float,
                     norm=None, mode: Mode = Mode.CONSERVATIVE) -> tuple[float, np.ndarray]:
    """Smallest obedience slack of ``pair`` over the eps-neighbourhood of the prior.

    Returns the value and the minimising belief.  In conservative mode the
    belief may leave the simplex.
    """
    norm = _as_norm(norm)
    D = deviation_matrix(inst, X, policy)[_pair_index(inst.edge_count, pair)]
    return _worst_case(D, inst.prior, eps, norm, Mode(mode))


def worst_case_slacks(inst, X, policy, eps: float, norm=None, mode: Mode = Mode.CONSERVATIVE) -> np.ndarray:
    """Worst-case slack of every pair, in ``deviation_pairs`` order."""
    norm = _as_norm(norm)
    mode = Mode(mode)
    Dm = deviation_matrix(inst, X, policy)
    return np.array([_worst_case(D, inst.prior, eps, norm, mode)[0] for D in Dm])


def is_obedient(inst, X, policy, mu=None, tol: float = FEAS_TOL) -> bool:
    mu = inst.prior if mu is None else check_belief(mu, inst.state_count)
    return bool(np.all(deviation_matrix(inst, X, policy) @ mu >= -tol))


def is_robust_obedient(inst, X, policy, eps: float, norm=None, mode: Mode = Mode.CONSERVATIVE,
                       tol: float = FEAS_TOL) -> tuple[bool, list[tuple[DeviationPair, float]]]:
    """Robust obedience check; violated pairs come back sorted by slack."""
    slacks = worst_case_slacks(inst, X, policy, eps, norm, mode)
    pairs = deviation_pairs(inst.edge_count)
    bad = sorted(((pairs[i], float(s)) for i, s in enumerate(slacks) if s < -tol), key=lambda t: t[1])
    return not bad, bad


def robust_radius(inst, X, policy, norm=None, mode: Mode = Mode.CONSERVATIVE) -> float:
    """Largest eps at which the policy stays robustly obedient (may be inf).

    Conservative mode uses the closed form ``min A / ||D||_q`` over pairs with
    a nonzero deviation vector (inf only when all of them vanish); the set
    leaves the simplex, so even a nonnegative D eventually fails.  Exact mode
    bisects on eps with the greedy oracle and returns the largest verified
    radius.
    """
    norm = _as_norm(norm)
    mode = Mode(mode)
    if not is_obedient(inst, X, policy):
        return 0.0
    Dm = deviation_matrix(inst, X, policy)
    if mode is Mode.CONSERVATIVE:
        best = math.inf
        for D in Dm:
            dn = norm.dual_norm(D)
            if dn > 0:
                best = min(best, max(float(inst.prior @ D), 0.0) / dn)
        return best
    if norm.p == 2.0:
        raise UnsupportedNorm("exact radius needs l1 or linf")

    def robust(eps):
        return all(_worst_case(D, inst.prior, eps, norm, mode)[0] >= -FEAS_TOL for D in Dm)

    hi = norm.simplex_cap
    if robust(hi):
        return math.inf
    lo = 0.0
    while hi - lo > RADIUS_TOL:
        mid = 0.5 * (lo + hi)
        if robust(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --- support-restricted certificate ----------------------------------------

@dataclass(frozen=True)
class PairCertificate:
    pair: DeviationPair
    sigma_lo: float
    sigma_hi: float
    M: float
    mass: float
    term: float


@dataclass
class CertificateReport:
    radius: float
    vacuous: bool
    pairs: list[PairCertificate] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [
            {"pair_r": c.pair.r, "pair_a": c.pair.a, "sigma_lo": c.sigma_lo, "sigma_hi": c.sigma_hi,
             "M": c.M, "mass": c.mass, "rho_hat_term": c.term}
            for c in self.pairs
        ]


def _sigma_bounds(gaps: np.ndarray, mask: np.ndarray) -> tuple[float, float, float]:
    vals = gaps[mask]
    lo, hi = float(vals.min()), float(vals.max())
    return lo, hi, max(abs(lo), abs(hi))


def _term(sigma_lo: float, mass: float, factor: float, M: float) -> float:
    return sigma_lo * mass / (factor * M) if M > 0 else 0.0


def certified_radius(inst, X, policy, norm=None, prior=None) -> CertificateReport:
    """Support-restricted lower bound on the robust radius.

    Pairs whose route carries no prior-weighted mass are skipped.  When some
    contributing pair has a nonpositive lower gap bound the certificate says
    nothing and the radius is reported as 0 with ``vacuous`` set.
    """
    norm = _as_norm(norm)
    prior = inst.prior if prior is None else check_belief(prior, inst.state_count)
    w = _weights(policy)
    _, mbar = recommendation_masses(X, w, prior)
    pattern = support_pattern_of(X, w)
    gaps = gap_table(inst, X)
    factor = norm.state_factor(inst.state_count)
    rows, vacuous, radius = [], False, math.inf
    for p, pair in enumerate(deviation_pairs(inst.edge_count)):
        mask = pattern.route_mask(pair.r)
        if not mask.any():
            continue
        lo, hi, M = _sigma_bounds(gaps[p], mask)
        term = _term(lo, mbar[pair.r], factor, M)
        rows.append(PairCertificate(pair, lo, hi, M, float(mbar[pair.r]), term))
        if mbar[pair.r] > 0:
            if lo <= 0:
                vacuous = True
            radius = min(radius, term)
    if vacuous:
        radius = 0.0
    return CertificateReport(max(radius, 0.0), vacuous, rows)


def lemma1_check(inst, X, policy, pair, norm=None, tol: float = 1e-10) -> bool:
    """Verify the support-restricted sandwich bounds for one pair."""
    norm = _as_norm(norm)
    w = _weights(policy)
    pair = DeviationPair(*pair)
    p = _pair_index(inst.edge_count, pair)
    mask = support_pattern_of(X, w).route_mask(pair.r)
    if not mask.any():
        raise EmptySupport(f"route {pair.r} has no support")
    lo, hi, M = _sigma_bounds(gap_table(inst, X)[p], mask)
    m, mbar = recommendation_masses(X, w, inst.prior)
    D = deviation_matrix(inst, X, w)[p]
    A = float(inst.prior @ D)
    mr = m[pair.r]
    ok = np.all(lo * mr <= D + tol) and np.all(D <= hi * mr + tol)
    ok &= lo * mbar[pair.r] <= A + tol and A <= hi * mbar[pair.r] + tol
    ok &= norm.dual_norm(D) <= norm.state_factor(inst.state_count) * M + tol
    return bool(ok)


def pattern_lp(inst, X, pattern: SupportPattern, norm=None) -> tuple[float, SignalingPolicy]:
    """Maximise the certificate radius over policies supported inside ``pattern``.

    Once the pattern is fixed the gap bounds are constants, so the problem is
    an LP in (policy, rho).  The optimum may be negative and is returned as-is.
    A pair whose gaps on its route support are all zero contributes the row
    ``rho <= 0`` (its certificate term is degenerate).
    """
    norm = _as_norm(norm)
    S, K = inst.state_count, len(X)
    cells = [(w, k) for w in range(S) for k in range(K) if pattern.gamma[w, k]]
    n = len(cells) + 1  # last variable is rho
    gaps = gap_table(inst, X)
    factor = norm.state_factor(S)
    rows, senses, rhs = [], [], []
    for p, pair in enumerate(deviation_pairs(inst.edge_count)):
        mask = pattern.route_mask(pair.r)
        if not mask.any():
            continue
        lo, _, M = _sigma_bounds(gaps[p], mask)
        row = np.zeros(n)
        if M > 0:
            for j, (w, k) in enumerate(cells):
                row[j] = lo * inst.prior[w] * X.profiles[k, pair.r]
            row[-1] = -factor * M
            rows.append(row)
            senses.append(">=")
        else:
            row[-1] = 1.0
            rows.append(row)
            senses.append("<=")
        rhs.append(0.0)
    for w in range(S):
        row = np.zeros(n)
        for j, (ww, _) in enumerate(cells):
            if ww == w:
                row[j] = 1.0
        rows.append(row)
        senses.append("=")
        rhs.append(1.0)
    c = np.zeros(n)
    c[-1] = -1.0
    lower = np.zeros(n)
    lower[-1] = -np.inf
    sol = solve_lp(LinearProgram(c, np.array(rows), senses, rhs, lower=lower))
    if not sol.optimal:
        raise AssertionError(f"pattern LP unexpectedly {sol.status.value}")
    weights = np.zeros((S, K))
    for j, (w, k) in enumerate(cells):
        weights[w, k] = sol.x[j]
    return float(sol.x[-1]), SignalingPolicy.from_unnormalized(weights)


@dataclass
class PatternSearchResult:
    value: float  # clamped at 0
    raw_value: float
    pattern: SupportPattern
    policy: SignalingPolicy
    complete: bool
    n_patterns: int


def pattern_count(n_states: int, n_profiles: int) -> int:
    return (2**n_profiles - 1) ** n_states


def _candidate_patterns(S: int, K: int, complete: bool):
    if complete:
        for masks in itertools.product(range(1, 2**K), repeat=S):
            yield np.array([[(m >> k) & 1 for k in range(K)] for m in masks], dtype=bool)
    else:
        for choice in itertools.product(range(K), repeat=S):
            gamma = np.zeros((S, K), dtype=bool)
            gamma[np.arange(S), choice] = True
            yield gamma
        yield np.ones((S, K), dtype=bool)


def certified_radius_star(inst, X, norm=None, budget: int = DEFAULT_BUDGET) -> PatternSearchResult:
    """Best certificate radius over support patterns.

    All ``(2^K - 1)^|Omega|`` patterns are tried when that count fits in
    ``budget``; otherwise only the singleton-per-state patterns and the full
    pattern are tried and ``complete`` is False.  Either way the value is
    attained by an actual policy, so it is a valid lower bound.
    """
    norm = _as_norm(norm)
    S, K = inst.state_count, len(X)
    complete = pattern_count(S, K) <= budget
    route_pos = X.profiles.T > 0
    best = None
    n = 0
    for gamma in _candidate_patterns(S, K, complete):
        pattern = SupportPattern(gamma, route_pos)
        value, pol = pattern_lp(inst, X, pattern, norm)
        n += 1
        if best is None or value > best[0]:
            best = (value, pattern, pol)
    value, pattern, pol = best
    return PatternSearchResult(max(value, 0.0), value, pattern, pol, complete, n)


# --- heterogeneous population ----------------------------------------------

def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    cond = u - (css - 1.0) / k > 0
    rho = k[cond][-1]
    theta = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def sample_beliefs(prior: np.ndarray, eps: float, norm, n: int, rng: np.random.Generator,
                   max_tries: int = 1000) -> np.ndarray:
    """Draw beliefs from the simplex-intersected eps-ball around ``prior``."""
    norm = _as_norm(norm)
    out = np.empty((n, prior.size))
    for i in range(n):
        for _ in range(max_tries):
            g = rng.standard_normal(prior.size)
            scale = np.linalg.norm(g, ord=norm.p)
            step = g / scale * eps * rng.uniform() if scale > 0 else 0.0
            mu = project_to_simplex(prior + step)
            if np.linalg.norm(mu - prior, ord=norm.p) <= eps * (1 + 1e-12) + 1e-15:
                break
        else:
            mu = prior.copy()
        out[i] = mu
    return out


def population_check(inst, X, policy, eps: float, norm=None, n_agents: int = 10_000, seed: int = 0) -> float:
    """Fraction of sampled agents (beliefs in the eps-neighbourhood) who obey."""
    rng = np.random.default_rng(seed)
    beliefs = sample_beliefs(inst.prior, eps, norm, n_agents, rng)
    slacks = beliefs @ deviation_matrix(inst, X, policy).T  # (n, P)
    return float(np.mean(np.all(slacks >= -FEAS_TOL, axis=1)))
