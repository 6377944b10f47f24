"""Nominal and robust information design as linear programs.

Decision variables are the policy entries ``pi[w, k]`` flattened row-major,
followed by any auxiliary variables a formulation needs.  Pairs whose
integrand ``x_r * Delta`` vanishes on every (state, profile) cell impose no
constraint and are left out of the LP.

Formulations for eps > 0:

* conservative, l1 beliefs (dual linf): ``A - eps*d_w >= 0`` and
  ``A + eps*d_w >= 0`` for every state w;
* conservative, linf beliefs (dual l1): ``u_w >= |d_w|``, ``A - eps*sum(u) >= 0``;
* exact (simplex-intersected ball): the inner minimisation over beliefs is
  replaced by its LP dual, giving extra free/nonnegative variables per pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedNorm
from .lp import LinearProgram, Status, solve_lp
from .model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    deviation_pairs,
    profile_cost_table,
    weighted_gap_table,
)
from .robustness import L1, Mode, NormChoice, worst_case_slacks

TOL_ACTIVE = 1e-7
VERIFY_TOL = 1e-8


@dataclass
class RobustSolveReport:
    epsilon: float
    status: Status
    norm: NormChoice
    mode: Mode
    pairs: list[DeviationPair]
    constrained: np.ndarray  # bool per pair: pair appears in the LP
    policy: SignalingPolicy | None = None
    value: float = math.nan
    multipliers: np.ndarray | None = None
    slacks: np.ndarray | None = None
    active: list[DeviationPair] = field(default_factory=list)
    max_violation: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def to_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "status": self.status.value,
            "norm": self.norm.label,
            "mode": self.mode.value,
            "value": None if math.isnan(self.value) else self.value,
        }
        if self.optimal:
            out.update(
                policy=self.policy.weights.tolist(),
                multipliers={f"{p.r},{p.a}": float(l) for p, l in zip(self.pairs, self.multipliers)},
                slacks={f"{p.r},{p.a}": float(s) for p, s in zip(self.pairs, self.slacks)},
                active=[list(p) for p in self.active],
                max_violation=self.max_violation,
            )
        return out


class _Builder:
    """Accumulates LP rows; each pair's rows are tagged for multiplier sums."""

    def __init__(self, n_policy: int):
        self.n = n_policy
        self.rows: list[tuple[dict, str, float]] = []
        self.tags: list[int | None] = []
        self.lower = [0.0] * n_policy

    def new_var(self, lower: float = 0.0) -> int:
        self.lower.append(lower)
        self.n += 1
        return self.n - 1

    def add(self, coefs: dict, sense: str, rhs: float, tag: int | None = None) -> None:
        self.rows.append((coefs, sense, rhs))
        self.tags.append(tag)

    def build(self, c_policy: np.ndarray) -> LinearProgram:
        A = np.zeros((len(self.rows), self.n))
        for i, (coefs, _, _) in enumerate(self.rows):
            for j, v in coefs.items():
                A[i, j] += v
        c = np.zeros(self.n)
        c[: c_policy.size] = c_policy
        return LinearProgram(c, A, [s for _, s, _ in self.rows], [r for _, _, r in self.rows],
                             lower=np.array(self.lower))


def _dense(vec: np.ndarray) -> dict:
    return {int(j): float(v) for j, v in enumerate(vec) if v != 0.0}


def _add(*parts: tuple[float, dict]) -> dict:
    out: dict = {}
    for scale, d in parts:
        for j, v in d.items():
            out[j] = out.get(j, 0.0) + scale * v
    return out


def robust_design(inst: GameInstance, X: RecommendationSet, eps: float, norm=None,
                  mode: Mode = Mode.CONSERVATIVE) -> RobustSolveReport:
    """Minimise expected cost over the eps-robust obedience region."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    norm = L1 if norm is None else NormChoice.parse(norm)
    mode = Mode(mode)
    if norm.p == 2.0 and eps > 0:
        raise UnsupportedNorm("l2 beliefs give a second-order cone program; not supported in design")
    S, K = inst.state_count, len(X)
    mu0 = inst.prior
    g = weighted_gap_table(inst, X)  # (P, S, K)
    pairs = deviation_pairs(inst.edge_count)
    constrained = np.array([bool(np.any(gp != 0.0)) for gp in g])

    B = _Builder(S * K)
    for w in range(S):
        B.add({w * K + k: 1.0 for k in range(K)}, "=", 1.0)
    for p in np.flatnonzero(constrained):
        A_vec = _dense((mu0[:, None] * g[p]).reshape(-1))
        d_vecs = []
        for w in range(S):
            dv = np.zeros(S * K)
            dv[w * K:(w + 1) * K] = g[p, w]
            d_vecs.append(_dense(dv))
        if eps == 0:
            B.add(A_vec, ">=", 0.0, tag=p)
        elif mode is Mode.CONSERVATIVE and norm.p == 1.0:
            for dv in d_vecs:
                B.add(_add((1.0, A_vec), (-eps, dv)), ">=", 0.0, tag=p)
                B.add(_add((1.0, A_vec), (eps, dv)), ">=", 0.0, tag=p)
        elif mode is Mode.CONSERVATIVE:
            u = [B.new_var() for _ in range(S)]
            for w, dv in enumerate(d_vecs):
                B.add(_add((1.0, {u[w]: 1.0}), (-1.0, dv)), ">=", 0.0)
                B.add(_add((1.0, {u[w]: 1.0}), (1.0, dv)), ">=", 0.0)
            B.add(_add((1.0, A_vec), (-eps, {j: 1.0 for j in u})), ">=", 0.0, tag=p)
        elif norm.p == 1.0:
            alpha = B.new_var(-np.inf)
            nu = [B.new_var(-np.inf) for _ in range(S)]
            tau = B.new_var()
            for w, dv in enumerate(d_vecs):
                B.add(_add((1.0, dv), (-1.0, {alpha: 1.0, nu[w]: 1.0})), ">=", 0.0)
                B.add({tau: 1.0, nu[w]: -1.0}, ">=", 0.0)
                B.add({tau: 1.0, nu[w]: 1.0}, ">=", 0.0)
            main = {alpha: 1.0, tau: -eps}
            main.update({nu[w]: float(mu0[w]) for w in range(S)})
            B.add(main, ">=", 0.0, tag=p)
        else:
            lo = np.maximum(mu0 - eps, 0.0)
            hi = np.minimum(mu0 + eps, 1.0)
            alpha = B.new_var(-np.inf)
            beta = [B.new_var() for _ in range(S)]
            gamma = [B.new_var() for _ in range(S)]
            for w, dv in enumerate(d_vecs):
                B.add(_add((1.0, dv), (-1.0, {alpha: 1.0, beta[w]: 1.0}), (1.0, {gamma[w]: 1.0})), ">=", 0.0)
            main = {alpha: 1.0}
            main.update({beta[w]: float(lo[w]) for w in range(S)})
            main.update({gamma[w]: -float(hi[w]) for w in range(S)})
            B.add(main, ">=", 0.0, tag=p)

    costs = (mu0[:, None] * profile_cost_table(inst, X)).reshape(-1)
    lp = B.build(costs)
    sol = solve_lp(lp)
    report = RobustSolveReport(eps, sol.status, norm, mode, pairs, constrained)
    if not sol.optimal:
        return report

    policy = SignalingPolicy.from_unnormalized(sol.x[: S * K].reshape(S, K))
    lam = np.zeros(len(pairs))
    for dual, tag in zip(sol.duals, B.tags):
        if tag is not None:
            lam[tag] += dual
    slacks = worst_case_slacks(inst, X, policy, eps, norm, mode)
    report.policy = policy
    report.value = float(sol.objective)
    report.multipliers = lam
    report.slacks = slacks
    report.active = [pairs[i] for i in np.flatnonzero(constrained & (np.abs(slacks) <= TOL_ACTIVE))]
    report.max_violation = float(max(0.0, -slacks[constrained].min(initial=0.0)))
    return report


def nominal_design(inst: GameInstance, X: RecommendationSet) -> RobustSolveReport:
    return robust_design(inst, X, 0.0)
