"""Desk-scale experiments: the two-state geometric example and the Monte Carlo study.

Geometric example
    Three parallel edges, two equally likely states, two recommendation
    profiles.  A policy is the pair ``p = (pi(x1|w1), pi(x1|w2))`` in the unit
    square, every deviation vector is affine in ``p``, and so every robust
    obedience region is a polygon.  Regions are cut out of the square by
    half-planes ``<mu_v, D(p)> >= 0``, one per vertex ``mu_v`` of the belief
    set (Sutherland-Hodgman clipping).

Monte Carlo study
    Five edges and five states, state ``w_e`` favouring edge ``e``.  Each
    instance draws its coefficients from a counter-based Philox stream keyed
    by ``(seed, instance index)``: for every state and then every edge, one
    uniform for the slope and one for the intercept.  Instances infeasible
    at ``eps = 0`` are dropped; the rest are swept over the grid until the
    first infeasible point.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .design import RobustSolveReport, robust_design
from .equilibrium import nash_flow
from .errors import UnsupportedNorm
from .model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    deviation_matrix,
    deviation_pairs,
)
from .robustness import (
    CertificateReport,
    Mode,
    NormChoice,
    certified_radius,
    is_robust_obedient,
    robust_radius,
)

GEOMETRIC_EPS = (0.0, 0.01, 0.02, 0.03, 0.05, 0.07)
GRID_N = 201
MEMBER_TOL = 1e-9


def build_geometric_instance() -> tuple[GameInstance, RecommendationSet]:
    slope = [[0.28, 0.74], [0.72, 0.27], [0.46, 0.44]]
    intercept = [[0.50, 1.26], [1.28, 0.52], [0.94, 0.96]]
    inst = GameInstance([0.5, 0.5], slope, intercept)
    X = RecommendationSet([[0.55, 0.25, 0.20], [0.25, 0.55, 0.20]])
    return inst, X


def policy_from_p(p) -> SignalingPolicy:
    p1, p2 = float(p[0]), float(p[1])
    return SignalingPolicy([[p1, 1.0 - p1], [p2, 1.0 - p2]])


# --- polygon helpers ---------------------------------------------------------

def _affine_coefs(f) -> np.ndarray:
    """Coefficients (c0, c1, c2) of an affine function of p, read off at three points."""
    f00 = np.asarray(f((0.0, 0.0)), dtype=float)
    f10 = np.asarray(f((1.0, 0.0)), dtype=float)
    f01 = np.asarray(f((0.0, 1.0)), dtype=float)
    return np.stack([f00, f10 - f00, f01 - f00], axis=-1)


def clip_polygon(poly: np.ndarray, coefs) -> np.ndarray:
    """Keep the part of a convex polygon where ``c0 + c1*p1 + c2*p2 >= 0``."""
    c0, c1, c2 = coefs
    if len(poly) == 0:
        return poly
    val = c0 + poly @ np.array([c1, c2])
    out = []
    n = len(poly)
    for i in range(n):
        P, Q = poly[i], poly[(i + 1) % n]
        vp, vq = val[i], val[(i + 1) % n]
        if vp >= -MEMBER_TOL:
            out.append(P)
        if (vp >= -MEMBER_TOL) != (vq >= -MEMBER_TOL):
            t = vp / (vp - vq)
            out.append(P + t * (Q - P))
    if not out:
        return np.zeros((0, 2))
    out = np.array(out)
    keep = [0] + [i for i in range(1, len(out)) if np.abs(out[i] - out[i - 1]).max() > 1e-12]
    out = out[keep]
    if len(out) > 1 and np.abs(out[0] - out[-1]).max() <= 1e-12:
        out = out[:-1]
    return out


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def belief_vertices(mu0: np.ndarray, eps: float, norm: NormChoice, mode: Mode) -> np.ndarray:
    """Vertices of the belief set whose worst case defines robust obedience."""
    S = mu0.size
    if eps == 0:
        return mu0[None, :]
    if norm.p == 2.0:
        raise UnsupportedNorm("the l2 ball has no finite vertex set")
    if mode is Mode.CONSERVATIVE:
        if norm.p == 1.0:
            return np.vstack([mu0 + s * eps * np.eye(S)[w] for w in range(S) for s in (1.0, -1.0)])
        return np.array([mu0 + eps * np.array(s) for s in itertools.product((1.0, -1.0), repeat=S)])
    if S != 2:
        raise UnsupportedNorm("exact-mode polygons are implemented for two states")
    t = eps / 2.0 if norm.p == 1.0 else eps
    d = np.array([1.0, -1.0])
    lo = -min(t, mu0[0], 1 - mu0[1])
    hi = min(t, 1 - mu0[0], mu0[1])
    return np.array([mu0 + lo * d, mu0 + hi * d])


@dataclass
class Boundary:
    pair: DeviationPair
    coefs: tuple[float, float, float]  # A(p) = c0 + c1*p1 + c2*p2


@dataclass
class GeometricReport:
    eps_list: list[float]
    norm: str
    mode: str
    boundaries: list[Boundary]
    nominal_polygon: np.ndarray
    regions: dict[float, np.ndarray]
    p_star: dict[float, tuple[float, float] | None]
    values: dict[float, float]
    eps2: float
    certificate: CertificateReport
    exact_radius: float
    eps3: float | None
    p0_feasible_to_eps2: bool
    p0_infeasible_at_eps3: bool
    nested: bool
    nested_violations: int
    files: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "eps_list": self.eps_list,
            "norm": self.norm,
            "mode": self.mode,
            "boundaries": [{"pair": list(b.pair), "coefs": list(b.coefs)} for b in self.boundaries],
            "nominal_polygon": self.nominal_polygon.tolist(),
            "regions": {str(e): v.tolist() for e, v in self.regions.items()},
            "p_star": {str(e): (list(v) if v is not None else None) for e, v in self.p_star.items()},
            "values": {str(e): v for e, v in self.values.items()},
            "eps2": self.eps2,
            "certificate_vacuous": self.certificate.vacuous,
            "certificate": self.certificate.rows(),
            "exact_radius": self.exact_radius,
            "eps3": self.eps3,
            "p0_feasible_to_eps2": self.p0_feasible_to_eps2,
            "p0_infeasible_at_eps3": self.p0_infeasible_at_eps3,
            "nested": self.nested,
            "nested_violations": self.nested_violations,
            "files": self.files,
        }


def _region_masks(d_coefs: np.ndarray, mu0, eps_list, norm: NormChoice, mode: Mode, n: int = GRID_N):
    """Membership of an n x n grid of p in every robust region (closed forms)."""
    g = np.linspace(0.0, 1.0, n)
    P1, P2 = np.meshgrid(g, g, indexing="ij")
    # D[p, w, i, j]
    D = d_coefs[..., 0, None, None] + d_coefs[..., 1, None, None] * P1 + d_coefs[..., 2, None, None] * P2
    A = np.einsum("w,pwij->pij", mu0, D)
    masks = []
    for eps in eps_list:
        if eps == 0:
            h = A
        elif mode is Mode.CONSERVATIVE:
            h = A - eps * np.linalg.norm(D, ord=norm.q, axis=1)
        else:
            V = belief_vertices(mu0, eps, norm, mode)
            h = np.einsum("vw,pwij->vpij", V, D).min(axis=0)
        masks.append(np.all(h >= -MEMBER_TOL, axis=0))
    return masks


def geometric_experiment(eps_list=GEOMETRIC_EPS, norm="l1", mode: Mode = Mode.CONSERVATIVE,
                         out_dir=None) -> GeometricReport:
    """Obedience polygons of the geometric example and how they shrink with eps."""
    eps_list = [float(e) for e in eps_list]
    if eps_list != sorted(eps_list) or eps_list[0] != 0.0:
        raise ValueError("eps_list must be ascending and start at 0")
    norm = NormChoice.parse(norm)
    mode = Mode(mode)
    inst, X = build_geometric_instance()
    pairs = deviation_pairs(inst.edge_count)
    d_coefs = _affine_coefs(lambda p: deviation_matrix(inst, X, policy_from_p(p)))  # (P, S, 3)
    a_coefs = np.einsum("w,pwc->pc", inst.prior, d_coefs)
    boundaries = [Boundary(pr, tuple(float(c) for c in a_coefs[i])) for i, pr in enumerate(pairs)]

    regions, p_star, values = {}, {}, {}
    reports: dict[float, RobustSolveReport] = {}
    for eps in eps_list:
        poly = UNIT_SQUARE.copy()
        for mu in belief_vertices(inst.prior, eps, norm, mode):
            for c in np.einsum("w,pwc->pc", mu, d_coefs):
                poly = clip_polygon(poly, c)
        regions[eps] = poly
        rep = robust_design(inst, X, eps, norm, mode)
        reports[eps] = rep
        p_star[eps] = (float(rep.policy.weights[0, 0]), float(rep.policy.weights[1, 0])) if rep.optimal else None
        values[eps] = rep.value
    nominal = regions[0.0]
    if p_star[0.0] is None:
        raise RuntimeError("nominal design of the geometric example is infeasible")

    pol0 = policy_from_p(p_star[0.0])
    cert = certified_radius(inst, X, pol0, norm)
    eps2 = cert.radius
    radius = robust_radius(inst, X, pol0, norm, mode)
    ok2, _ = is_robust_obedient(inst, X, pol0, eps2, norm, mode)
    eps3 = next((e for e in eps_list if e > radius and reports[e].optimal), None)
    bad3 = eps3 is not None and not is_robust_obedient(inst, X, pol0, eps3, norm, mode)[0]

    masks = _region_masks(d_coefs, inst.prior, eps_list, norm, mode)
    violations = sum(int(np.sum(masks[i + 1] & ~masks[i])) for i in range(len(masks) - 1))

    report = GeometricReport(eps_list, norm.label, mode.value, boundaries, nominal, regions, p_star,
                             values, eps2, cert, radius, eps3, ok2, bad3, violations == 0, violations)
    if out_dir is not None:
        _write_geometric(report, Path(out_dir))
    return report


def _write_geometric(report: GeometricReport, out: Path) -> None:
    from .plotting import plot_geometric

    rows = []
    for b in report.boundaries:
        rows.append({"record": "boundary", "pair_r": b.pair.r, "pair_a": b.pair.a,
                     "c0": b.coefs[0], "c1": b.coefs[1], "c2": b.coefs[2]})
    for eps, poly in report.regions.items():
        for i, v in enumerate(poly):
            rows.append({"record": "vertex", "epsilon": eps, "index": i, "p1": v[0], "p2": v[1]})
    for eps, p in report.p_star.items():
        rows.append({"record": "optimizer", "epsilon": eps, "status": "optimal" if p else "infeasible",
                     "value": report.values[eps], "p1": p[0] if p else None, "p2": p[1] if p else None})
    cols = ["record", "epsilon", "pair_r", "pair_a", "c0", "c1", "c2", "index", "p1", "p2", "status", "value"]
    report.files["csv"] = str(io.write_csv(out / "geometric.csv", cols, rows))
    report.files["svg"] = str(plot_geometric(report, out / "geometric.svg"))
    report.files["json"] = str(out / "geometric.json")
    io.write_json(out / "geometric.json", report.to_dict())


# --- Monte Carlo -------------------------------------------------------------

def _default_grid() -> tuple[float, ...]:
    return tuple(round(0.02 * i, 10) for i in range(21))


@dataclass(frozen=True)
class MonteCarloConfig:
    n_instances: int = 100
    seed: int = 0
    eps_grid: tuple[float, ...] = field(default_factory=_default_grid)
    favored_slope: tuple[float, float] = (0.2, 0.5)
    favored_intercept: tuple[float, float] = (0.4, 0.8)
    other_slope: tuple[float, float] = (0.5, 1.0)
    other_intercept: tuple[float, float] = (0.8, 1.6)
    norm: str = "l1"
    mode: str = "conservative"
    workers: int = 1

    def __post_init__(self):
        for name in ("favored_slope", "favored_intercept", "other_slope", "other_intercept"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        grid = tuple(float(e) for e in self.eps_grid)
        if not grid or grid[0] != 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("eps_grid must be increasing and start at 0")
        object.__setattr__(self, "eps_grid", grid)
        if self.n_instances < 0 or self.seed < 0:
            raise ValueError("n_instances and seed must be nonnegative")
        NormChoice.parse(self.norm)
        Mode(self.mode)

    def to_dict(self) -> dict:
        return asdict(self)


N_EDGES = 5


def montecarlo_profiles() -> RecommendationSet:
    prof = np.full((N_EDGES + 1, N_EDGES), 0.1)
    prof[0] = 0.2
    prof[1:] += 0.5 * np.eye(N_EDGES)
    return RecommendationSet(prof)


def instance_stream(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for one instance."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def generate_instance(seed: int, config: MonteCarloConfig | None = None,
                      index: int = 0) -> tuple[GameInstance, RecommendationSet]:
    config = MonteCarloConfig() if config is None else config
    rng = instance_stream(seed, index)
    u = rng.random((N_EDGES, N_EDGES, 2))  # [state, edge, (slope, intercept)]
    slope = np.empty((N_EDGES, N_EDGES))
    intercept = np.empty((N_EDGES, N_EDGES))
    for w in range(N_EDGES):
        for e in range(N_EDGES):
            sa, sb = (config.favored_slope, config.favored_intercept) if e == w else \
                (config.other_slope, config.other_intercept)
            slope[e, w] = sa[0] + (sa[1] - sa[0]) * u[w, e, 0]
            intercept[e, w] = sb[0] + (sb[1] - sb[0]) * u[w, e, 1]
    inst = GameInstance(np.full(N_EDGES, 1.0 / N_EDGES), slope, intercept)
    return inst, montecarlo_profiles()


@dataclass
class Trajectory:
    instance_id: int
    eps: np.ndarray  # feasible prefix of the grid
    values: np.ndarray
    first_infeasible: float | None  # grid point where the trajectory stops

    @property
    def excess(self) -> np.ndarray:
        return (self.values - self.values[0]) * 1000.0


def _run_instance(args) -> Trajectory | None:
    index, config = args
    inst, X = generate_instance(config.seed, config, index)
    eps_ok, vals, stop = [], [], None
    for eps in config.eps_grid:
        rep = robust_design(inst, X, eps, config.norm, config.mode)
        if not rep.optimal:
            stop = eps
            break
        eps_ok.append(eps)
        vals.append(rep.value)
    if not eps_ok:
        return None
    return Trajectory(index, np.array(eps_ok), np.array(vals), stop)


@dataclass
class MonteCarloResult:
    config: MonteCarloConfig
    trajectories: list[Trajectory]
    rejected: list[int]
    summary: list[dict]
    files: dict[str, str] = field(default_factory=dict)

    @property
    def n_retained(self) -> int:
        return len(self.trajectories)

    def trajectory_rows(self) -> list[dict]:
        rows = []
        for t in self.trajectories:
            for e, v, x in zip(t.eps, t.values, t.excess):
                rows.append({"instance_id": t.instance_id, "epsilon": float(e), "status": "optimal",
                             "value": float(v), "excess_x1000": float(x)})
            if t.first_infeasible is not None:
                rows.append({"instance_id": t.instance_id, "epsilon": t.first_infeasible,
                             "status": "infeasible", "value": None, "excess_x1000": None})
        return rows


def summarize(trajectories: list[Trajectory], grid) -> list[dict]:
    out = []
    for k, eps in enumerate(grid):
        vals = np.array([t.excess[k] for t in trajectories if len(t.eps) > k])
        row = {"epsilon": float(eps), "n_feasible": int(vals.size)}
        if vals.size:
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            row.update(mean=float(vals.mean()), median=float(med), q1=float(q1), q3=float(q3))
        else:
            row.update(mean=math.nan, median=math.nan, q1=math.nan, q3=math.nan)
        out.append(row)
    return out


TRAJECTORY_COLUMNS = ["instance_id", "epsilon", "status", "value", "excess_x1000"]
SUMMARY_COLUMNS = ["epsilon", "n_feasible", "mean", "median", "q1", "q3"]


def montecarlo_experiment(config: MonteCarloConfig | None = None, out_dir=None) -> MonteCarloResult:
    """Excess robust cost across generated instances, feasible at eps = 0."""
    config = MonteCarloConfig() if config is None else config
    jobs = [(i, config) for i in range(config.n_instances)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_instance, jobs))  # map keeps index order
    else:
        results = [_run_instance(j) for j in jobs]
    kept = [r for r in results if r is not None]
    rejected = [i for i, r in enumerate(results) if r is None]
    res = MonteCarloResult(config, kept, rejected, summarize(kept, config.eps_grid))
    if out_dir is not None:
        _write_montecarlo(res, Path(out_dir))
    return res


def _write_montecarlo(res: MonteCarloResult, out: Path) -> None:
    from .plotting import plot_montecarlo

    res.files["trajectories"] = str(io.write_csv(out / "trajectories.csv", TRAJECTORY_COLUMNS,
                                                 res.trajectory_rows()))
    res.files["summary"] = str(io.write_csv(out / "summary.csv", SUMMARY_COLUMNS, res.summary))
    curves = {t.instance_id: (t.eps, t.excess) for t in res.trajectories}
    res.files["svg"] = str(plot_montecarlo(curves, res.summary, out / "montecarlo.svg"))
    res.files["json"] = str(out / "montecarlo.json")
    io.write_json(out / "montecarlo.json", {
        "config": res.config.to_dict(),
        "n_generated": res.config.n_instances,
        "n_retained": res.n_retained,
        "rejected_at_zero": res.rejected,
        "files": res.files,
    })


# --- generic random games ----------------------------------------------------

def random_game(rng: np.random.Generator, n_edges: int, n_states: int, n_profiles: int,
                include_nash: bool = False, zero_slope_prob: float = 0.0,
                slope_range=(0.1, 2.0), intercept_range=(0.0, 2.0)) -> tuple[GameInstance, RecommendationSet]:
    """Unstructured random instance; optionally adds every statewise Nash flow to X."""
    prior = rng.dirichlet(np.ones(n_states))
    slope = rng.uniform(*slope_range, (n_edges, n_states))
    if zero_slope_prob > 0:
        slope[rng.random(slope.shape) < zero_slope_prob] = 0.0
    intercept = rng.uniform(*intercept_range, (n_edges, n_states))
    inst = GameInstance(prior, slope, intercept)
    profiles = list(rng.dirichlet(np.ones(n_edges), n_profiles))
    if include_nash:
        for w in range(n_states):
            f = nash_flow(inst, w)
            if not any(np.abs(f - q).max() <= 1e-12 for q in profiles):
                profiles.append(f)
    return inst, RecommendationSet(np.array(profiles))
