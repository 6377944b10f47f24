"""Dense two-phase simplex with dual extraction.

Problems here are small (a few hundred rows and columns), so a full tableau
is fine.  The solver maps the user problem to standard form
``min c's  s.t.  A_s s (<=|=) b_s, s >= 0``, runs phase 1 on artificials only
where a slack cannot start in the basis, then phase 2.  Pivoting uses the
most-negative reduced cost and falls back to Bland's rule after a run of
degenerate pivots, which keeps it deterministic and cycle-free.  Design LPs
have hundreds of rows with zero right-hand side, so the slack-basic rows are
relaxed by tiny fixed pseudo-random amounts while pivoting; the true rhs is
then restored and a few dual simplex pivots recover primal feasibility.  The
tableau is rebuilt from the basis every few dozen pivots.

At the optimum the basis is re-solved against the original standard-form
matrix to clean up accumulated round-off in both primal and dual values.

Dual sign convention (``LpSolution.duals``): one multiplier per row,
nonnegative for inequality rows in either direction, free for equality
rows.  With ``y`` the signed prices (``-duals`` on ``<=`` rows) the reduced
costs are ``c - A'y``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalFailure

FEAS_TOL = 1e-8
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
TINY_PIVOT = 1e-11
BLAND_AFTER = 30  # consecutive degenerate pivots before switching rules
REINVERT_EVERY = 50
PERTURB = 1e-7


def _perturbation(m: int) -> np.ndarray:
    return np.random.default_rng(20240601).uniform(0.5, 1.0, m)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


_SENSES = {"<=": "<=", "≤": "<=", "le": "<=", "=": "=", "==": "=", "eq": "=", ">=": ">=", "≥": ">=", "ge": ">="}


@dataclass
class LinearProgram:
    """``min c'x`` subject to ``A x (sense) b`` and ``lower <= x <= upper``.

    ``lower`` defaults to 0 and ``upper`` to +inf; use ``-np.inf`` for a
    free variable.
    """

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.b), 0))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = [_SENSES[s] for s in self.senses]
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m:
            raise ValueError("row count mismatch between A, b and senses")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must match the number of variables")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    senses: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def signed_prices(self) -> np.ndarray:
        sign = np.array([-1.0 if s == "<=" else 1.0 for s in self.senses])
        return sign * self.duals

    def dual_objective(self, lp: LinearProgram, tol: float = 1e-9) -> float:
        """Lagrangian dual value ``b'y + sum_j (z_j^+ l_j + z_j^- u_j)``."""
        y = self.signed_prices()
        z = self.reduced_costs
        total = float(lp.b @ y)
        for zj, lo, up in zip(z, lp.lower, lp.upper):
            if zj > tol:
                total += zj * lo if np.isfinite(lo) else -np.inf
            elif zj < -tol:
                total += zj * up if np.isfinite(up) else -np.inf
            else:
                total += zj * (lo if np.isfinite(lo) else (up if np.isfinite(up) else 0.0))
        return total


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0


class _Tableau:
    """Standard-form tableau: ``T[:m]`` holds ``[A | b]``, ``T[m]`` reduced costs.

    The starting rows are kept so the tableau can be rebuilt from the current
    basis every ``REINVERT_EVERY`` pivots and before optimality is declared;
    long degenerate runs otherwise let round-off swamp the small coefficients.
    """

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.orig = T[:-1].copy()
        self.cost = np.zeros(T.shape[1] - 1)
        self.iterations = 0
        self.since_reinvert = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def keep_rows(self, tab_rows: list[int], orig_rows: np.ndarray) -> None:
        self.T = np.vstack([self.T[tab_rows], self.T[-1:]])
        self.basis = [self.basis[i] for i in tab_rows]
        self.orig = self.orig[orig_rows]

    def set_objective(self, cost: np.ndarray) -> None:
        self.cost = cost
        cb = cost[self.basis]
        self.T[-1, :-1] = cost - cb @ self.T[:-1, :-1]
        self.T[-1, -1] = -(cb @ self.T[:-1, -1])

    def reinvert(self) -> None:
        B = self.orig[:, self.basis]
        try:
            self.T[:-1] = np.linalg.solve(B, self.orig)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during reinversion") from exc
        self.set_objective(self.cost)
        self.since_reinvert = 0

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        degenerate_run = 0
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"simplex exceeded {max_iter} iterations")
            if self.since_reinvert >= REINVERT_EVERY:
                self.reinvert()
            T = self.T
            rc = np.where(allowed, T[-1, :-1], 0.0)
            bland = degenerate_run >= BLAND_AFTER
            if bland:
                cand = np.flatnonzero(rc < -OPT_TOL)
                col = int(cand[0]) if cand.size else -1
            else:
                col = int(np.argmin(rc))
                if rc[col] >= -OPT_TOL:
                    col = -1
            if col < 0:
                if self.since_reinvert == 0:
                    return Status.OPTIMAL
                self.reinvert()
                continue
            colv = T[:-1, col]
            rows = np.flatnonzero(colv > PIVOT_TOL)
            if rows.size == 0:
                if self.since_reinvert == 0:
                    return Status.UNBOUNDED
                self.reinvert()
                continue
            rhs = np.maximum(T[rows, -1], 0.0)
            ratios = rhs / colv[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if bland or ties.size == 1:
                row = int(min(ties, key=lambda i: self.basis[i]))
            else:
                row = int(ties[np.argmax(colv[ties])])
            if abs(T[row, col]) < TINY_PIVOT:
                raise NumericalFailure("pivot magnitude below threshold")
            degenerate_run = degenerate_run + 1 if T[row, -1] <= FEAS_TOL else 0
            self._step(row, col)

    def dual_run(self, allowed: np.ndarray, max_iter: int) -> Status:
        """Dual simplex from a dual-feasible basis; restores primal feasibility."""
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"simplex exceeded {max_iter} iterations")
            if self.since_reinvert >= REINVERT_EVERY:
                self.reinvert()
            T = self.T
            rhs = T[:-1, -1]
            row = int(np.argmin(rhs)) if rhs.size else 0
            if rhs.size == 0 or rhs[row] >= -FEAS_TOL:
                if self.since_reinvert == 0:
                    return Status.OPTIMAL
                self.reinvert()
                continue
            r = T[row, :-1]
            cand = np.flatnonzero(allowed & (r < -PIVOT_TOL))
            if cand.size == 0:
                if self.since_reinvert == 0:
                    return Status.INFEASIBLE
                self.reinvert()
                continue
            ratios = np.maximum(T[-1, cand], 0.0) / -r[cand]
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12 * max(1.0, best)]
            col = int(ties[np.argmax(-r[ties])])
            self._step(row, col)

    def _step(self, row: int, col: int) -> None:
        _pivot(self.T, row, col)
        self.basis[row] = col
        self.iterations += 1
        self.since_reinvert += 1


def _standardize(lp: LinearProgram):
    """Map bounded variables onto ``s >= 0``: ``x = shift + M s``."""
    n = lp.c.size
    cols, shift, bound_rows = [], np.zeros(n), []
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(up):
                bound_rows.append((len(cols) - 1, up - lo))
        elif np.isfinite(up):
            shift[j] = up
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for s, (j, sign) in enumerate(cols):
        M[j, s] = sign
    return M, shift, bound_rows


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp``; duals and reduced costs are filled in only when optimal."""
    if np.any(lp.lower > lp.upper):
        return LpSolution(Status.INFEASIBLE, senses=list(lp.senses))
    M, shift, bound_rows = _standardize(lp)
    ns = M.shape[1]
    A = lp.A @ M
    b = lp.b - lp.A @ shift
    senses = list(lp.senses)
    n_user_rows = A.shape[0]
    if bound_rows:
        extra = np.zeros((len(bound_rows), ns))
        for i, (s, ub) in enumerate(bound_rows):
            extra[i, s] = 1.0
        A = np.vstack([A, extra])
        b = np.concatenate([b, [ub for _, ub in bound_rows]])
        senses += ["<="] * len(bound_rows)
    m = A.shape[0]
    cost = lp.c @ M

    # orient every row as "<=" or "=", then make rhs nonnegative
    sign = np.ones(m)
    kind = []
    for i, s in enumerate(senses):
        if s == ">=":
            sign[i] = -1.0
        k = "eq" if s == "=" else "le"
        if b[i] * sign[i] < 0:
            sign[i] = -sign[i]
            k = "eq" if k == "eq" else "ge"
        kind.append(k)
    As = A * sign[:, None]
    bs = b * sign

    n_slack = sum(k != "eq" for k in kind)
    art_rows = [i for i, k in enumerate(kind) if k != "le"]
    N = ns + n_slack + len(art_rows)
    T = np.zeros((m + 1, N + 1))
    T[:m, :ns] = As
    # relax the slack-basic rows by tiny distinct amounts to break ratio ties;
    # the true rhs is restored before the final cleanup
    pert = np.zeros(m)
    le = np.array([k == "le" for k in kind])
    pert[le] = PERTURB * max(1.0, np.abs(bs).max(initial=0.0)) * _perturbation(m)[le]
    T[:m, -1] = bs + pert
    basis = [-1] * m
    s_col = ns
    for i, k in enumerate(kind):
        if k == "le":
            T[i, s_col] = 1.0
            basis[i] = s_col
        elif k == "ge":
            T[i, s_col] = -1.0
        if k != "eq":
            s_col += 1
    art_start = ns + n_slack
    for j, i in enumerate(art_rows):
        T[i, art_start + j] = 1.0
        basis[i] = art_start + j

    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    tab = _Tableau(T, basis)
    allowed = np.ones(N, dtype=bool)
    rows_kept = np.arange(m)

    if art_rows:
        phase1 = np.zeros(N)
        phase1[art_start:] = 1.0
        tab.set_objective(phase1)
        tab.run(allowed, max_iter)
        infeas = -tab.T[-1, -1]
        if infeas > FEAS_TOL * max(1.0, np.abs(bs).max(initial=0.0)):
            return LpSolution(Status.INFEASIBLE, iterations=tab.iterations, senses=list(lp.senses))
        # drive basic artificials out, dropping rows that turn out redundant
        drop = []
        for i in range(m):
            if tab.basis[i] >= art_start:
                row = tab.T[i, :art_start]
                j = int(np.argmax(np.abs(row)))
                if abs(row[j]) > PIVOT_TOL:
                    _pivot(tab.T, i, j)
                    tab.basis[i] = j
                else:
                    drop.append(i)
        if drop:
            # a basic artificial sits in a redundant tableau row; the original
            # row it belongs to is the one to discard
            gone = {art_rows[tab.basis[i] - art_start] for i in drop}
            keep = [i for i in range(m) if i not in drop]
            rows_kept = np.array([i for i in range(m) if i not in gone])
            tab.keep_rows(keep, rows_kept)
        allowed[art_start:] = False

    full_cost = np.zeros(N)
    full_cost[:ns] = cost
    tab.set_objective(full_cost)
    status = tab.run(allowed, max_iter)
    if status is Status.OPTIMAL and np.any(pert):
        tab.orig[:, -1] = bs[rows_kept]
        tab.reinvert()
        status = tab.dual_run(allowed, max_iter)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=tab.iterations, senses=list(lp.senses))

    # refine against the original standard-form columns
    std = np.zeros((m, art_start))
    std[:, :ns] = As
    s_col = ns
    for i, k in enumerate(kind):
        if k != "eq":
            std[i, s_col] = 1.0 if k == "le" else -1.0
            s_col += 1
    B = std[rows_kept][:, tab.basis]
    xb_tab = tab.T[:-1, -1].copy()
    try:
        xb = np.linalg.solve(B, bs[rows_kept])
        yk = np.linalg.solve(B.T, full_cost[tab.basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular final basis") from exc
    if np.abs(xb - xb_tab).max(initial=0.0) > 1e-6 or xb.min(initial=0.0) < -1e-7:
        raise NumericalFailure("basis refinement disagrees with tableau")
    s_all = np.zeros(art_start)
    s_all[tab.basis] = np.clip(xb, 0.0, None)
    x = shift + M @ s_all[:ns]

    y_std = np.zeros(m)
    y_std[rows_kept] = yk
    y = (y_std * sign)[:n_user_rows]  # signed prices for original rows
    z = lp.c - lp.A.T @ y
    duals = np.array([-yi if s == "<=" else yi for yi, s in zip(y, lp.senses)])
    return LpSolution(
        Status.OPTIMAL,
        x=x,
        objective=float(lp.c @ x),
        duals=duals,
        reduced_costs=z,
        iterations=tab.iterations,
        senses=list(lp.senses),
    )
