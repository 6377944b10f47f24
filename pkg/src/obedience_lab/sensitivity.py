"""Value-function sweeps and first-order sensitivity of the robust value.

The robust constraint of a pair is ``h(pi, eps) = A(pi) - eps * ||D(pi)||_q``
(conservative reading).  Its gradient in ``pi`` is projected onto the tangent
space ``T`` of the product of simplices (per-state zero-sum vectors) and the
slope of ``V*`` is bounded through the smallest singular value of the
stacked active gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import TOL_ACTIVE, RobustSolveReport, robust_design
from .errors import NondifferentiablePoint, NotOptimal, NumericalFailure, RankDeficientActiveSet
from .model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    _pair_index,
    _weights,
    deviation_matrix,
    profile_cost_table,
    weighted_gap_table,
)
from .robustness import Mode, NormChoice, _as_norm

KINK_TOL = 1e-10
RANK_TOL = 1e-10
JACOBI_TOL = 1e-12
FD_STEP = 1e-4


@dataclass
class SweepResult:
    grid: np.ndarray
    reports: list[RobustSolveReport]

    @property
    def statuses(self) -> list[str]:
        return [r.status.value for r in self.reports]

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.reports])

    @property
    def feasible(self) -> np.ndarray:
        return np.array([r.optimal for r in self.reports], dtype=bool)

    @property
    def frontier(self) -> float | None:
        """Largest feasible grid value, or None if nothing is feasible."""
        ok = np.flatnonzero(self.feasible)
        return float(self.grid[ok[-1]]) if ok.size else None

    def prefix_feasible(self) -> bool:
        f = self.feasible
        n = int(np.argmin(f)) if not f.all() else f.size
        return not f[n:].any()

    @property
    def active_sets(self) -> list[list[DeviationPair] | None]:
        return [r.active if r.optimal else None for r in self.reports]


def value_sweep(inst: GameInstance, X: RecommendationSet, grid, norm=None,
                mode: Mode = Mode.CONSERVATIVE) -> SweepResult:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    return SweepResult(grid, [robust_design(inst, X, float(e), norm, mode) for e in grid])


def active_set(report: RobustSolveReport, tol: float = TOL_ACTIVE) -> list[DeviationPair]:
    if not report.optimal:
        raise NotOptimal(f"report at eps={report.epsilon} is {report.status.value}")
    keep = report.constrained & (np.abs(report.slacks) <= tol)
    return [report.pairs[i] for i in np.flatnonzero(keep)]


# --- projected Jacobian ----------------------------------------------------

def _project_tangent(v: np.ndarray) -> np.ndarray:
    """Remove the per-state mean from an (S, K) block array."""
    return v - v.mean(axis=-1, keepdims=True)


def _project_face(v: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Per-state mean removal over supported cells only; zero elsewhere."""
    out = np.zeros_like(v)
    for w in range(v.shape[0]):
        idx = support[w]
        if idx.any():
            out[w, idx] = v[w, idx] - v[w, idx].mean()
    return out


def _dual_norm_gradient(g: np.ndarray, D: np.ndarray, norm: NormChoice) -> np.ndarray:
    """Gradient of ``||D(pi)||_q`` in ``pi`` where ``D_w = sum_k pi[w,k] g[w,k]``."""
    live = np.any(g != 0.0, axis=1)  # states where D_w actually depends on pi
    if norm.q == math.inf:
        mags = np.abs(D)
        w = int(np.argmax(mags))
        if mags[w] < KINK_TOL:
            raise NondifferentiablePoint("deviation vector is numerically zero")
        if np.sum(mags >= mags[w] - KINK_TOL) > 1:
            raise NondifferentiablePoint("tied maximum in the sup-norm of D")
        out = np.zeros_like(g)
        out[w] = np.sign(D[w]) * g[w]
        return out
    if norm.q == 1.0:
        if np.any(live & (np.abs(D) < KINK_TOL)):
            raise NondifferentiablePoint("a component of D is numerically zero")
        return np.sign(D)[:, None] * g
    n = np.linalg.norm(D)
    if n < KINK_TOL:
        raise NondifferentiablePoint("deviation vector is numerically zero")
    return (D / n)[:, None] * g


def projected_jacobian(inst: GameInstance, X: RecommendationSet, policy, eps: float,
                       active, norm=None, support: np.ndarray | None = None) -> np.ndarray:
    """Rows ``P_T grad h`` for each active pair, flattened to length S*K.

    With ``support`` given the projection is onto the face of the policy
    (zero-sum over supported cells, zero on the rest) instead of all of T.
    """
    norm = _as_norm(norm)
    active = list(active)
    if not active:
        raise ValueError("active set is empty")
    w = _weights(policy)
    g = weighted_gap_table(inst, X)
    Dm = deviation_matrix(inst, X, w)
    rows = []
    for pair in active:
        p = _pair_index(inst.edge_count, pair)
        grad = inst.prior[:, None] * g[p]
        if eps > 0:
            grad = grad - eps * _dual_norm_gradient(g[p], Dm[p], norm)
        proj = _project_tangent(grad) if support is None else _project_face(grad, support)
        rows.append(proj.reshape(-1))
    return np.array(rows)


def jacobi_eigenvalues(S: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations (ascending)."""
    A = np.array(S, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("matrix must be square and symmetric")
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            return np.sort(np.diag(A))
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(A[i, j]) <= 1e-300:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * A[i, j])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[i, i] = R[j, j] = c
                R[i, j], R[j, i] = s, -s
                A = R.T @ A @ R
    raise NumericalFailure("Jacobi iteration did not converge")


def smallest_singular_value(G: np.ndarray) -> float:
    lam = jacobi_eigenvalues(G @ G.T)
    return math.sqrt(max(lam[0], 0.0))


# --- slope bound -------------------------------------------------------------

@dataclass
class SlopeBoundReport:
    epsilon: float
    delta_max: float
    kappa: float
    n_active: int
    grad_cost_norm: float
    sigma_min: float
    bound: float
    fd_slope: float
    differentiable: bool
    envelope: float
    face_bound: float = math.nan
    notes: list[str] = field(default_factory=list)

    @property
    def checkable(self) -> bool:
        """Hypotheses hold well enough to assert ``fd_slope <= bound``."""
        return self.differentiable and (self.n_active == 0 or self.sigma_min >= 1e-8)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epsilon", "delta_max", "kappa", "n_active", "grad_cost_norm", "sigma_min",
            "bound", "fd_slope", "differentiable", "envelope", "face_bound", "notes")}


def _fd_slope(inst, X, eps, norm, mode, delta, v0) -> tuple[float, bool, list]:
    """Central-difference slope; returns (slope, both sides feasible, side reports)."""
    lo = robust_design(inst, X, eps - delta, norm, mode)
    hi = robust_design(inst, X, eps + delta, norm, mode)
    if not (lo.optimal and hi.optimal):
        return math.nan, False, [lo, hi]
    left = (v0 - lo.value) / delta
    right = (hi.value - v0) / delta
    central = 0.5 * (left + right)
    if abs(right - left) > 0.1 * max(abs(left), abs(right), 1e-12):
        half = delta / 2
        lo2 = robust_design(inst, X, eps - half, norm, mode)
        hi2 = robust_design(inst, X, eps + half, norm, mode)
        if lo2.optimal and hi2.optimal:
            central = (4.0 * (hi2.value - lo2.value) / (2 * half) - central) / 3.0
    return central, True, [lo, hi]


def slope_bound(inst: GameInstance, X: RecommendationSet, report: RobustSolveReport, norm=None,
                delta: float = FD_STEP, strict: bool = True) -> SlopeBoundReport:
    """First-order bound on ``dV*/d eps`` at an optimal conservative solve.

    ``bound = kappa * Delta_max * sqrt(|B|) * ||P_T grad C|| / sigma_min``.
    Differentiability is detected: the point is flagged when eps - delta < 0,
    when either neighbour is infeasible, when the active sets at eps +/- delta
    differ, or when the dual-norm term has a kink.  The second-order
    sufficient condition is never checked.
    """
    if not report.optimal:
        raise NotOptimal("slope bound needs an optimal report")
    if report.mode is not Mode.CONSERVATIVE:
        raise ValueError("slope bound is stated for the conservative constraint")
    norm = report.norm if norm is None else _as_norm(norm)
    eps = report.epsilon
    S = inst.state_count
    B = active_set(report)
    notes = ["second-order condition not checked"]
    g = weighted_gap_table(inst, X)
    delta_max = float(np.abs(g).max(initial=0.0))
    kappa = norm.kappa(S)
    grad_c = _project_tangent(inst.prior[:, None] * profile_cost_table(inst, X))
    grad_norm = float(np.linalg.norm(grad_c))

    differentiable = True
    sigma = math.inf
    if B:
        try:
            G = projected_jacobian(inst, X, report.policy, eps, B, norm)
            sigma = smallest_singular_value(G)
        except NondifferentiablePoint as exc:
            differentiable = False
            notes.append(f"kink: {exc}")
            sigma = math.nan
    if B and not math.isnan(sigma) and sigma < RANK_TOL:
        if strict:
            raise RankDeficientActiveSet(sigma)
        notes.append("active gradients rank deficient")
    if not B:
        bound = 0.0
    elif math.isnan(sigma) or sigma < RANK_TOL:
        bound = math.inf
    else:
        bound = kappa * delta_max * math.sqrt(len(B)) * grad_norm / sigma

    fd = math.nan
    if eps - delta < 0:
        differentiable = False
        notes.append("left neighbour outside the domain")
    else:
        fd, both, sides = _fd_slope(inst, X, eps, norm, report.mode, delta, report.value)
        if not both:
            differentiable = False
            notes.append("neighbour infeasible")
        elif not (set(active_set(sides[0])) == set(B) == set(active_set(sides[1]))):
            differentiable = False
            notes.append("active set changes within +/- delta")

    # Same bound with T replaced by the tangent space of the policy's face.
    # Stationarity then holds without the multipliers of pi >= 0, which the
    # full-T bound silently drops at vertex optima.
    face = 0.0
    if B:
        face = math.inf
        support = report.policy.weights > 1e-12
        try:
            Gf = projected_jacobian(inst, X, report.policy, eps, B, norm, support)
            sf = smallest_singular_value(Gf)
            if sf >= RANK_TOL:
                gf = np.linalg.norm(_project_face(inst.prior[:, None] * profile_cost_table(inst, X), support))
                face = kappa * delta_max * math.sqrt(len(B)) * gf / sf
        except NondifferentiablePoint:
            pass

    Dm = deviation_matrix(inst, X, report.policy)
    env = 0.0
    for pair in B:
        p = _pair_index(inst.edge_count, pair)
        env += float(report.multipliers[p]) * norm.dual_norm(Dm[p])
    return SlopeBoundReport(eps, delta_max, kappa, len(B), grad_norm, float(sigma), bound,
                            float(fd), differentiable, env, face, notes)


def sweep_slope_bounds(inst, X, sweep: SweepResult, norm=None, delta: float = FD_STEP) -> list[SlopeBoundReport | None]:
    """Non-strict slope bound at every feasible conservative grid point."""
    out = []
    for rep in sweep.reports:
        if rep.optimal and rep.mode is Mode.CONSERVATIVE:
            out.append(slope_bound(inst, X, rep, norm, delta, strict=False))
        else:
            out.append(None)
    return out
