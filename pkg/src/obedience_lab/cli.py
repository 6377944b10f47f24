"""Command-line interface: ``obedience-lab <subcommand> [options]``.

Exit codes: 0 success, 2 infeasible at the requested eps, 3 input error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .design import robust_design
from .equilibrium import nash_flow, nash_policy, verify_nash
from .errors import InputError, MissingNashProfile, ObedienceLabError, UnsupportedNorm
from .experiments import MonteCarloConfig, geometric_experiment, montecarlo_experiment
from .model import expected_cost
from .reduction import caratheodory_reduce, verify_reduction
from .robustness import Mode, certified_radius, certified_radius_star, robust_radius
from .sensitivity import sweep_slope_bounds, value_sweep

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 2, 3

CERT_COLUMNS = ["pair_r", "pair_a", "sigma_lo", "sigma_hi", "M", "mass", "rho_hat_term"]
SWEEP_COLUMNS = ["epsilon", "status", "value", "n_active", "bound", "fd_slope", "differentiable"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[float]:
    """``"0,0.01,0.05"`` or ``"start:stop:step"`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(n)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse eps grid {text!r}") from exc


def _common(p: argparse.ArgumentParser, instance: bool = True) -> None:
    if instance:
        p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--out-dir", default="out", help="directory for report files")
    p.add_argument("--norm", default="l1", choices=["l1", "l2", "linf"])
    p.add_argument("--mode", default="conservative", choices=[m.value for m in Mode])
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obedience-lab", description="Robust information design on parallel networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="robust (or nominal) design at one eps")
    _common(p)
    p.add_argument("--epsilon", type=float, default=0.0)

    p = sub.add_parser("radius", help="certified and exact radii of a policy")
    _common(p)
    p.add_argument("--policy", help="policy JSON (default: nominal optimizer)")

    p = sub.add_parser("certify", help="best certificate over support patterns")
    _common(p)
    p.add_argument("--budget", type=int, default=10**5)

    p = sub.add_parser("sweep", help="value function and slope bounds over an eps grid")
    _common(p)
    p.add_argument("--epsilon-grid", default="0:0.2:0.02")

    p = sub.add_parser("nash", help="statewise Wardrop flows and the Nash policy")
    _common(p)

    p = sub.add_parser("reduce", help="Caratheodory support reduction of a policy")
    _common(p)
    p.add_argument("--policy", required=True)

    p = sub.add_parser("experiment-geometric", help="two-state polygon example")
    _common(p, instance=False)
    p.add_argument("--epsilon-grid", default=None)

    p = sub.add_parser("experiment-montecarlo", help="excess robust cost study")
    _common(p, instance=False)
    p.add_argument("--epsilon-grid", default=None)
    p.add_argument("--n-instances", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _say(*parts) -> None:
    print(*parts, flush=True)


def cmd_solve(args, out: Path) -> int:
    inst, X = io.load_instance(args.instance)
    if args.epsilon < 0:
        raise InputError("--epsilon must be nonnegative")
    rep = robust_design(inst, X, args.epsilon, args.norm, args.mode)
    io.write_json(out / "report.json", rep.to_dict())
    if not rep.optimal:
        _say(f"eps={args.epsilon:g} status={rep.status.value}")
        return EXIT_INFEASIBLE
    rows = [{"pair_r": p.r, "pair_a": p.a, "slack": s, "multiplier": l, "active": p in rep.active}
            for p, s, l in zip(rep.pairs, rep.slacks, rep.multipliers)]
    io.write_csv(out / "slacks.csv", ["pair_r", "pair_a", "slack", "multiplier", "active"], rows)
    _say(f"eps={args.epsilon:g} status=optimal value={rep.value:.10g} active={len(rep.active)}")
    return EXIT_OK


def _policy_or_nominal(args, inst, X):
    if getattr(args, "policy", None):
        return io.load_policy(args.policy, X)
    rep = robust_design(inst, X, 0.0)
    return (rep.policy, X) if rep.optimal else (None, X)


def cmd_radius(args, out: Path) -> int:
    inst, X = io.load_instance(args.instance)
    policy, X = _policy_or_nominal(args, inst, X)
    if policy is None:
        _say("nominal design infeasible; no policy to certify")
        return EXIT_INFEASIBLE
    cert = certified_radius(inst, X, policy, args.norm)
    io.write_csv(out / "certificate.csv", CERT_COLUMNS, cert.rows())
    radii = {"certified": cert.radius, "vacuous": cert.vacuous,
             "conservative": robust_radius(inst, X, policy, args.norm, Mode.CONSERVATIVE)}
    if args.norm != "l2":
        radii["exact"] = robust_radius(inst, X, policy, args.norm, Mode.EXACT)
    io.write_json(out / "radius.json", {"policy": policy.weights, **radii})
    _say(" ".join(f"{k}={v}" for k, v in radii.items()))
    return EXIT_OK


def cmd_certify(args, out: Path) -> int:
    inst, X = io.load_instance(args.instance)
    res = certified_radius_star(inst, X, args.norm, args.budget)
    cert = certified_radius(inst, X, res.policy, args.norm)
    io.write_csv(out / "certificate.csv", CERT_COLUMNS, cert.rows())
    io.write_json(out / "certify.json", {
        "value": res.value, "raw_value": res.raw_value, "complete": res.complete,
        "patterns_tried": res.n_patterns, "pattern": res.pattern.gamma.astype(int),
        "policy": res.policy.weights,
    })
    _say(f"rho_hat_star={res.value:.10g} complete={res.complete} patterns={res.n_patterns}")
    return EXIT_OK


def cmd_sweep(args, out: Path) -> int:
    from .plotting import plot_sweep

    inst, X = io.load_instance(args.instance)
    grid = parse_grid(args.epsilon_grid)
    sw = value_sweep(inst, X, grid, args.norm, args.mode)
    bounds = sweep_slope_bounds(inst, X, sw) if Mode(args.mode) is Mode.CONSERVATIVE else [None] * len(grid)
    rows = []
    for eps, rep, b in zip(sw.grid, sw.reports, bounds):
        rows.append({"epsilon": float(eps), "status": rep.status.value, "value": rep.value,
                     "n_active": len(rep.active) if rep.optimal else None,
                     "bound": b.bound if b else None, "fd_slope": b.fd_slope if b else None,
                     "differentiable": b.differentiable if b else None})
    io.write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    plot_sweep(sw.grid, sw.values, out / "sweep.svg")
    io.write_json(out / "sweep.json", {"frontier": sw.frontier,
                                       "bounds": [b.to_dict() if b else None for b in bounds]})
    _say(f"points={len(grid)} feasible={int(sw.feasible.sum())} frontier={sw.frontier}")
    return EXIT_OK


def cmd_nash(args, out: Path) -> int:
    inst, X = io.load_instance(args.instance)
    flows, checks = [], []
    for w in range(inst.state_count):
        f = nash_flow(inst, w)
        flows.append(f)
        checks.append(verify_nash(inst, w, f)[1])
    data = {"flows": np.array(flows), "violation": checks, "policy": None}
    try:
        pol = nash_policy(inst, X)
        data["policy"] = pol.weights
        data["expected_cost"] = expected_cost(inst, X, pol)
    except MissingNashProfile as exc:
        data["missing_state"] = exc.state
    io.write_json(out / "nash.json", data)
    _say(f"states={inst.state_count} nash_policy={'yes' if data['policy'] is not None else 'missing'}")
    return EXIT_OK


def cmd_reduce(args, out: Path) -> int:
    inst, X = io.load_instance(args.instance)
    policy, X = io.load_policy(args.policy, X)
    pol_r, X_r = caratheodory_reduce(inst, X, policy)
    check = verify_reduction(inst, X, policy, X_r, pol_r, seed=args.seed)
    io.write_json(out / "reduced_policy.json", io.policy_to_dict(pol_r, X_r))
    io.write_json(out / "reduction.json", check.to_dict())
    _say(f"profiles {len(X)} -> {len(X_r)} max_support={check.max_support} ok={check.ok}")
    return EXIT_OK


def cmd_geometric(args, out: Path) -> int:
    kwargs = {} if args.epsilon_grid is None else {"eps_list": parse_grid(args.epsilon_grid)}
    rep = geometric_experiment(norm=args.norm, mode=args.mode, out_dir=out, **kwargs)
    _say(f"eps2={rep.eps2:g} exact_radius={rep.exact_radius:.6g} eps3={rep.eps3} nested={rep.nested}")
    return EXIT_OK


def cmd_montecarlo(args, out: Path) -> int:
    kw = dict(n_instances=args.n_instances, seed=args.seed, norm=args.norm, mode=args.mode,
              workers=args.workers)
    if args.epsilon_grid is not None:
        kw["eps_grid"] = tuple(parse_grid(args.epsilon_grid))
    res = montecarlo_experiment(MonteCarloConfig(**kw), out_dir=out)
    _say(f"generated={args.n_instances} retained={res.n_retained}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve, "radius": cmd_radius, "certify": cmd_certify, "sweep": cmd_sweep,
    "nash": cmd_nash, "reduce": cmd_reduce, "experiment-geometric": cmd_geometric,
    "experiment-montecarlo": cmd_montecarlo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out_dir)
    try:
        return COMMANDS[args.command](args, out)
    except (InputError, UnsupportedNorm, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ObedienceLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
