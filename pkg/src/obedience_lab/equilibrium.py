"""Statewise Wardrop flows on parallel affine networks."""

from __future__ import annotations

import numpy as np

from .errors import MissingNashProfile
from .model import GameInstance, RecommendationSet, SignalingPolicy

NASH_MATCH_TOL = 1e-9


def nash_flow(inst: GameInstance, state: int) -> np.ndarray:
    """Water-filling equilibrium flow for one state.

    Edges are activated in order of free-flow time.  For each candidate active
    set the common latency level is solved in closed form; a constant-latency
    edge caps the level at its intercept and absorbs the remaining demand
    (lowest index wins among tied constant edges).
    """
    a = inst.slope[:, state]
    b = inst.intercept[:, state]
    n = a.size
    order = sorted(range(n), key=lambda e: (b[e], e))
    flow = np.zeros(n)
    inv_sum = 0.0  # sum of 1/a over active sloped edges
    ratio_sum = 0.0  # sum of b/a over active sloped edges
    active: list[int] = []
    for pos, e in enumerate(order):
        if a[e] == 0.0:
            level = b[e]
            for i in active:
                flow[i] = (level - b[i]) / a[i]
            flow[e] = 1.0 - flow.sum()
            return flow
        active.append(e)
        inv_sum += 1.0 / a[e]
        ratio_sum += b[e] / a[e]
        level = (1.0 + ratio_sum) / inv_sum
        nxt = order[pos + 1] if pos + 1 < n else None
        if nxt is None or level <= b[nxt]:
            for i in active:
                flow[i] = (level - b[i]) / a[i]
            return flow
    raise AssertionError("unreachable: demand always placed")


def verify_nash(inst: GameInstance, state: int, flow, tol: float = 1e-9) -> tuple[bool, float]:
    """Check the equilibrium condition; returns (ok, worst violation)."""
    f = np.asarray(flow, dtype=float)
    lat = inst.slope[:, state] * f + inst.intercept[:, state]
    used = f > tol
    if not used.any():
        return False, float("inf")
    worst = float(max(lat[used].max() - lat.min(), 0.0))
    return worst <= tol, worst


def beckmann_potential(inst: GameInstance, state: int, flow) -> float:
    f = np.asarray(flow, dtype=float)
    return float(np.sum(inst.slope[:, state] * f**2 / 2 + inst.intercept[:, state] * f))


def nash_policy(inst: GameInstance, X: RecommendationSet, tol: float = NASH_MATCH_TOL) -> SignalingPolicy:
    """Recommend each state's equilibrium flow with probability one."""
    choice = []
    for w in range(inst.state_count):
        k = X.index_of(nash_flow(inst, w), tol)
        if k is None:
            raise MissingNashProfile(w)
        choice.append(k)
    return SignalingPolicy.deterministic(choice, len(X))
