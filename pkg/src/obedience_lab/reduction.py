"""Finite-support reduction of signaling policies.

Within each state the policy is a distribution over profiles, and every
quantity that matters (expected cost and every weighted gap) is linear in it.
Any atom set larger than ``1 + |pairs| + 1`` therefore has a mass direction
that leaves all those moments and the total mass unchanged; sliding along it
until an atom hits zero shrinks the support without changing anything the
planner or the users can see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .model import (
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    _check_dims,
    _weights,
    deviation_matrix,
    expected_cost,
    moment_table,
)

KERNEL_TOL = 1e-12


def kernel_vector(M: np.ndarray, tol: float = KERNEL_TOL) -> np.ndarray:
    """A nonzero null vector of a wide matrix via Gaussian elimination.

    Rows are reduced with partial pivoting; the first non-pivot column is set
    to one and the pivot variables are back-solved.
    """
    R = np.array(M, dtype=float)
    m, n = R.shape
    scale = max(np.abs(R).max(initial=0.0), 1.0)
    pivots: list[int] = []
    row = 0
    for col in range(n):
        if row == m:
            break
        i = row + int(np.argmax(np.abs(R[row:, col])))
        if abs(R[i, col]) <= tol * scale:
            continue
        R[[row, i]] = R[[i, row]]
        R[row] /= R[row, col]
        others = np.arange(m) != row
        R[others] -= np.outer(R[others, col], R[row])
        pivots.append(col)
        row += 1
    free = [c for c in range(n) if c not in pivots]
    if not free:
        raise NumericalFailure("matrix has full column rank; no kernel vector")
    f = free[0]
    z = np.zeros(n)
    z[f] = 1.0
    for r, c in enumerate(pivots):
        z[c] = -R[r, f]
    if np.abs(np.asarray(M) @ z).max(initial=0.0) > 1e-9 * scale * max(1.0, np.abs(z).max()):
        raise NumericalFailure("kernel vector fails the residual check; consider rescaling latencies")
    return z


def reduce_weights(moments: np.ndarray, w: np.ndarray, limit: int | None = None) -> np.ndarray:
    """Shrink the support of ``w`` while keeping ``moments @ w`` and ``sum(w)``.

    ``moments`` has one column per atom.  The loop stops once the support has
    at most ``limit`` atoms (default: number of moment rows plus one).
    """
    w = np.array(w, dtype=float)
    Gamma = np.vstack([np.asarray(moments, dtype=float), np.ones((1, w.size))])
    limit = Gamma.shape[0] if limit is None else limit
    total = w.sum()
    while True:
        supp = np.flatnonzero(w > 0)
        if supp.size <= limit:
            return w
        z = kernel_vector(Gamma[:, supp])
        if not np.any(z > 0):
            z = -z
        pos = np.flatnonzero(z > 0)
        ratios = w[supp[pos]] / z[pos]
        j = int(np.argmin(ratios))  # first index on ties
        t = ratios[j]
        w[supp] -= t * z
        w[supp[pos[j]]] = 0.0
        w[w < 1e-15 * max(total, 1.0)] = 0.0
        if abs(w.sum() - total) > 1e-12:
            raise NumericalFailure("mass drifted during reduction")


def caratheodory_reduce(inst: GameInstance, X: RecommendationSet, policy) -> tuple[SignalingPolicy, RecommendationSet]:
    """Per-state support at most ``|pairs| + 2``; cost and every slack preserved.

    The returned profile set is the union of surviving atoms, in the original
    order, and the policy is re-indexed onto it.
    """
    W = _weights(policy)
    _check_dims(inst, X, W)
    mom = moment_table(inst, X)  # (S, 1+P, K)
    limit = mom.shape[1] + 1
    reduced = np.array([reduce_weights(mom[w], W[w], limit) for w in range(inst.state_count)])
    touched = np.any(reduced != W, axis=1)
    reduced[touched] /= reduced[touched].sum(axis=1, keepdims=True)  # untouched rows stay bit-exact
    keep = np.flatnonzero(reduced.any(axis=0))
    Xr = RecommendationSet(X.profiles[keep])
    return SignalingPolicy(reduced[:, keep]), Xr


@dataclass
class ReductionCheck:
    max_support: int
    support_limit: int
    cost_error: float
    slack_error: float  # worst over pairs and sampled beliefs

    @property
    def ok(self) -> bool:
        return self.max_support <= self.support_limit and max(self.cost_error, self.slack_error) <= 1e-9

    def to_dict(self) -> dict:
        return {"max_support": self.max_support, "support_limit": self.support_limit,
                "cost_error": self.cost_error, "slack_error": self.slack_error, "ok": self.ok}


def verify_reduction(inst, X, policy, Xr, policy_r, n_beliefs: int = 100, seed: int = 0) -> ReductionCheck:
    """Compare cost and obedience slacks before and after at random beliefs."""
    rng = np.random.default_rng(seed)
    beliefs = np.vstack([inst.prior, rng.dirichlet(np.ones(inst.state_count), n_beliefs)])
    D0 = deviation_matrix(inst, X, policy)
    D1 = deviation_matrix(inst, Xr, policy_r)
    slack_err = float(np.abs(beliefs @ (D0 - D1).T).max(initial=0.0))
    cost_err = abs(expected_cost(inst, X, policy) - expected_cost(inst, Xr, policy_r))
    support = int((_weights(policy_r) > 0).sum(axis=1).max())
    P = inst.edge_count * (inst.edge_count - 1)
    return ReductionCheck(support, P + 2, cost_err, slack_err)
