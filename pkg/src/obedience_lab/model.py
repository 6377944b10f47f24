"""Game primitives and evaluation formulas for parallel-network congestion games.

Indices are 0-based throughout: edges ``e in range(E)``, states
``w in range(S)``, recommendation profiles ``k in range(K)``.  Latencies are
affine, ``l_e^w(f) = slope[e, w] * f + intercept[e, w]``.

The vectorised tables (``latency_table``, ``gap_table``, ``moment_table``)
are what the optimisation modules consume; the scalar functions mirror them
one formula at a time and are used for checking and reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

SUM_TOL = 1e-12
SUPPORT_TOL = 1e-12


def _check_simplex(v: np.ndarray, what: str, tol: float = SUM_TOL) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(v < 0):
        raise ValueError(f"{what} has negative entries")
    if abs(v.sum() - 1.0) > tol:
        raise ValueError(f"{what} sums to {v.sum():.16g}, expected 1")


@dataclass(frozen=True)
class GameInstance:
    """Affine latency coefficients per (edge, state) and a prior over states."""

    prior: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray

    def __post_init__(self):
        prior = np.array(self.prior, dtype=float).reshape(-1)
        slope = np.array(self.slope, dtype=float)
        intercept = np.array(self.intercept, dtype=float)
        if slope.ndim != 2 or slope.shape != intercept.shape:
            raise ValueError("slope and intercept must be matching |E| x |Omega| matrices")
        if slope.shape[1] != prior.size:
            raise ValueError("coefficient matrices need one column per state")
        if slope.shape[0] < 1 or prior.size < 1:
            raise ValueError("need at least one edge and one state")
        _check_simplex(prior, "prior")
        if not (np.all(np.isfinite(slope)) and np.all(np.isfinite(intercept))):
            raise ValueError("latency coefficients must be finite")
        # slope 0 (constant latency) is admitted on purpose
        if np.any(slope < 0) or np.any(intercept < 0):
            raise ValueError("latency coefficients must be nonnegative")
        for name, arr in (("prior", prior), ("slope", slope), ("intercept", intercept)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def edge_count(self) -> int:
        return self.slope.shape[0]

    @property
    def state_count(self) -> int:
        return self.slope.shape[1]

    def to_dict(self) -> dict:
        return {
            "edges": self.edge_count,
            "states": self.state_count,
            "prior": self.prior.tolist(),
            "slope": self.slope.tolist(),
            "intercept": self.intercept.tolist(),
        }


@dataclass(frozen=True)
class RecommendationSet:
    """Finite list of flow profiles on the edge simplex, one per row."""

    profiles: np.ndarray

    def __post_init__(self):
        profiles = np.array(self.profiles, dtype=float)
        if profiles.ndim != 2 or profiles.shape[0] < 1:
            raise ValueError("profiles must be a nonempty K x |E| matrix")
        for k, x in enumerate(profiles):
            _check_simplex(x, f"profile {k}")
        if len({row.tobytes() for row in profiles}) != len(profiles):
            raise ValueError("duplicate recommendation profiles")
        profiles.setflags(write=False)
        object.__setattr__(self, "profiles", profiles)

    def __len__(self) -> int:
        return self.profiles.shape[0]

    @property
    def edge_count(self) -> int:
        return self.profiles.shape[1]

    def index_of(self, flow: np.ndarray, tol: float) -> int | None:
        """Index of the first profile within ``tol`` of ``flow`` in sup-norm."""
        dist = np.abs(self.profiles - np.asarray(flow, dtype=float)).max(axis=1)
        hits = np.flatnonzero(dist <= tol)
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class SignalingPolicy:
    """``weights[w, k]`` is the probability of recommending profile k in state w."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 2:
            raise ValueError("policy weights must be a |Omega| x K matrix")
        for w, row in enumerate(weights):
            _check_simplex(row, f"policy row {w}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def deterministic(cls, choice: Sequence[int], n_profiles: int) -> "SignalingPolicy":
        weights = np.zeros((len(choice), n_profiles))
        weights[np.arange(len(choice)), list(choice)] = 1.0
        return cls(weights)

    @classmethod
    def from_unnormalized(cls, weights) -> "SignalingPolicy":
        """Clip tiny negatives and renormalise rows (for LP outputs)."""
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        w = w / w.sum(axis=1, keepdims=True)
        return cls(w)


class DeviationPair(NamedTuple):
    r: int  # recommended edge
    a: int  # deviation edge


def deviation_pairs(n_edges: int) -> list[DeviationPair]:
    """Ordered pairs (r, a), r != a, in row-major order."""
    return [DeviationPair(r, a) for r in range(n_edges) for a in range(n_edges) if r != a]


def check_belief(mu, n_states: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size != n_states:
        raise ValueError(f"belief has {mu.size} entries, expected {n_states}")
    _check_simplex(mu, "belief")
    return mu


def _weights(policy) -> np.ndarray:
    return policy.weights if isinstance(policy, SignalingPolicy) else np.asarray(policy, dtype=float)


def _pair_index(n_edges: int, pair) -> int:
    r, a = pair
    if r == a:
        raise ValueError("deviation pair needs r != a")
    if not (0 <= r < n_edges and 0 <= a < n_edges):
        raise IndexError(f"pair {pair} out of range for {n_edges} edges")
    return r * (n_edges - 1) + (a if a < r else a - 1)


def _check_dims(inst: GameInstance, X: RecommendationSet, weights: np.ndarray | None = None):
    if X.edge_count != inst.edge_count:
        raise ValueError("recommendation profiles and instance disagree on |E|")
    if weights is not None and weights.shape != (inst.state_count, len(X)):
        raise ValueError(f"policy shape {weights.shape} != ({inst.state_count}, {len(X)})")


# --- scalar formulas -------------------------------------------------------

def latency(inst: GameInstance, state: int, edge: int, flow: float) -> float:
    if not (0 <= state < inst.state_count and 0 <= edge < inst.edge_count):
        raise IndexError(f"(state={state}, edge={edge}) out of range")
    return float(inst.slope[edge, state] * flow + inst.intercept[edge, state])


def social_cost_profile(inst: GameInstance, state: int, x) -> float:
    x = np.asarray(x, dtype=float)
    if not 0 <= state < inst.state_count:
        raise IndexError(f"state {state} out of range")
    lat = inst.slope[:, state] * x + inst.intercept[:, state]
    return float(x @ lat)


def delta(inst: GameInstance, r: int, a: int, state: int, x) -> float:
    """Realised cost difference l_a(x_a) - l_r(x_r) of deviating from r to a."""
    if r == a:
        raise ValueError("delta needs r != a")
    return latency(inst, state, a, x[a]) - latency(inst, state, r, x[r])


# --- vectorised tables -----------------------------------------------------

def latency_table(inst: GameInstance, X: RecommendationSet) -> np.ndarray:
    """``L[e, w, k] = l_e^w(x^(k)_e)``."""
    _check_dims(inst, X)
    P = X.profiles.T[:, None, :]  # (E, 1, K)
    return inst.slope[:, :, None] * P + inst.intercept[:, :, None]


def profile_cost_table(inst: GameInstance, X: RecommendationSet) -> np.ndarray:
    """``c[w, k]``: social cost of profile k in state w."""
    L = latency_table(inst, X)
    return np.einsum("ek,ewk->wk", X.profiles.T, L)


def gap_table(inst: GameInstance, X: RecommendationSet) -> np.ndarray:
    """``Delta[p, w, k]`` for pairs in ``deviation_pairs`` order."""
    L = latency_table(inst, X)
    pairs = deviation_pairs(inst.edge_count)
    r = np.array([p.r for p in pairs], dtype=int)
    a = np.array([p.a for p in pairs], dtype=int)
    return L[a] - L[r]


def weighted_gap_table(inst: GameInstance, X: RecommendationSet) -> np.ndarray:
    """``g[p, w, k] = x^(k)_r * Delta_{r,a}(w, x^(k))``: integrand of the slack."""
    pairs = deviation_pairs(inst.edge_count)
    r = np.array([p.r for p in pairs], dtype=int)
    xr = X.profiles.T[r]  # (P, K)
    return xr[:, None, :] * gap_table(inst, X)


def moment_table(inst: GameInstance, X: RecommendationSet) -> np.ndarray:
    """Per-state moment vectors (cost, then every weighted gap): shape (S, 1+P, K)."""
    c = profile_cost_table(inst, X)
    g = weighted_gap_table(inst, X)
    return np.concatenate([c[:, None, :], np.transpose(g, (1, 0, 2))], axis=1)


def deviation_matrix(inst: GameInstance, X: RecommendationSet, policy) -> np.ndarray:
    """Row p is the deviation vector D of pair p: shape (P, S)."""
    w = _weights(policy)
    _check_dims(inst, X, w)
    return np.einsum("pwk,wk->pw", weighted_gap_table(inst, X), w)


# --- policy-level quantities ----------------------------------------------

def deviation_vector(inst: GameInstance, X: RecommendationSet, policy, pair) -> np.ndarray:
    p = _pair_index(inst.edge_count, pair)
    return deviation_matrix(inst, X, policy)[p]


def obedience_slack(inst: GameInstance, X: RecommendationSet, policy, mu, pair) -> float:
    """Expected cost of deviating from r to a minus obeying, under belief ``mu``."""
    w = _weights(policy)
    _check_dims(inst, X, w)
    mu = check_belief(mu, inst.state_count)
    p = _pair_index(inst.edge_count, pair)
    g = weighted_gap_table(inst, X)[p]
    return float(np.sum(mu[:, None] * w * g))


def expected_cost(inst: GameInstance, X: RecommendationSet, policy) -> float:
    w = _weights(policy)
    _check_dims(inst, X, w)
    return float(inst.prior @ np.sum(w * profile_cost_table(inst, X), axis=1))


def recommendation_masses(X: RecommendationSet, policy, prior) -> tuple[np.ndarray, np.ndarray]:
    """Per-state route masses ``m[r, w]`` and their prior average ``mbar[r]``."""
    w = _weights(policy)
    m = X.profiles.T @ w.T  # (E, S)
    return m, m @ np.asarray(prior, dtype=float)


@dataclass(frozen=True)
class SupportPattern:
    """Set ``gamma`` of supported (state, profile) cells; route supports are derived.

    ``route_positive[r, k]`` records ``x^(k)_r > 0`` so that ``per_route`` can
    be computed without keeping a separate copy of it.
    """

    gamma: np.ndarray
    route_positive: np.ndarray = field(repr=False)

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=bool)
        if not gamma.any(axis=1).all():
            raise ValueError("support pattern must cover every state")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        pos = np.array(self.route_positive, dtype=bool)
        pos.setflags(write=False)
        object.__setattr__(self, "route_positive", pos)

    @classmethod
    def from_cells(cls, cells, X: RecommendationSet, n_states: int) -> "SupportPattern":
        gamma = np.zeros((n_states, len(X)), dtype=bool)
        for w, k in cells:
            gamma[w, k] = True
        return cls(gamma, X.profiles.T > 0)

    def route_mask(self, r: int) -> np.ndarray:
        """Boolean (S, K) mask of S_r."""
        return self.gamma & self.route_positive[r][None, :]

    def per_route(self, r: int) -> set[tuple[int, int]]:
        return {(int(w), int(k)) for w, k in zip(*np.nonzero(self.route_mask(r)))}

    @property
    def cells(self) -> set[tuple[int, int]]:
        return {(int(w), int(k)) for w, k in zip(*np.nonzero(self.gamma))}

    def encoding(self) -> tuple[int, ...]:
        return tuple(int(b) for b in self.gamma.reshape(-1))


def support_pattern_of(X: RecommendationSet, policy, tol: float = SUPPORT_TOL) -> SupportPattern:
    w = _weights(policy)
    return SupportPattern(w > tol, X.profiles.T > 0)
