"""Command-line interface for resilient network design: solve, decompose, run experiments.

Exit codes: 0 success, 1 model or solver failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .benders import BendersOptions, run_benders
from .bundle import BundleError, generate_bundled_instances, instance_hash, load_instance
from .extensive import InfeasibleModel, solve_ef
from .lp import LpError, NumericFailure
from .model import InvalidProbability, ddu_k_max
from .recourse import InfeasibleDesign
from . import experiments as ex

log = logging.getLogger("resilient_flow")

EXPERIMENTS = ("vss", "vmc", "vmc-rho", "vmc-gamma", "vep", "frontier", "scaling")


class InputError(ValueError):
    pass


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-flow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse and validate a bundle")
    v.add_argument("bundle")

    def risk_flags(sp):
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--k", type=float, help="DDU magnitude multiplier")

    e = sub.add_parser("solve-ef", help="solve the extensive form")
    e.add_argument("bundle")
    e.add_argument("--no-ddu", action="store_true")
    e.add_argument("--no-risk", action="store_true")
    risk_flags(e)
    e.add_argument("--json", dest="json_out", help="write the solution summary as JSON")

    b = sub.add_parser("benders", help="run Benders decomposition")
    b.add_argument("bundle")
    b.add_argument("--group-cuts", action="store_true")
    b.add_argument("--group-cut-mode", choices=("safe", "heuristic"), default="safe")
    b.add_argument("--epsilon", type=float)
    b.add_argument("--max-iter", type=int)
    b.add_argument("--prune-slack", type=int, metavar="AGE", help="drop optimality cuts slack for AGE iterations")
    b.add_argument("--trace-out", help="write the LB/UB trace as tab-separated values")
    risk_flags(b)

    x = sub.add_parser("experiment", help="run one experiment")
    x.add_argument("name", choices=EXPERIMENTS)
    x.add_argument("bundle")
    x.add_argument("--ks", type=_floats, help="VEP multipliers (default 0,1,k_max)")
    x.add_argument("--rhos", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    x.add_argument("--gammas", type=_floats, default=[1.0, 2.0, 5.0, 10.0, 15.0])
    x.add_argument("--lambdas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    x.add_argument("--alphas", type=_floats, default=[0.9, 0.95, 0.99])
    x.add_argument("--sizes", type=_ints, help="scenario counts (default 1x, 3x, 9x the library)")
    x.add_argument("--out", help="directory for <name>.tsv and <name>.json")
    x.add_argument("--plot-data", action="store_true", help="also write x/y series files")

    g = sub.add_parser("gen-instances", help="write the bundled instances")
    g.add_argument("dir")
    return p


def _load(args):
    inst = load_instance(args.bundle)
    lam = getattr(args, "lam", None)
    alpha = getattr(args, "alpha", None)
    if lam is not None or alpha is not None:
        inst = inst.with_risk(lam, alpha)
    k = getattr(args, "k", None)
    if k is not None:
        if k < 0 or k > ddu_k_max(inst):
            raise InputError(f"k = {k} lies outside the validity region [0, {ddu_k_max(inst):.6g}]")
        inst = inst.with_k(k)
    return inst


def _print_solution(sol, out=sys.stdout):
    d = sol.design
    print(f"objective          {sol.objective:.6f}", file=out)
    print(f"activation cost    {sol.fixed_cost:.6f}", file=out)
    print(f"holding cost       {sol.holding_cost:.6f}", file=out)
    print(f"expected recourse  {sol.expected_recourse:.6f}", file=out)
    print(f"CVaR / VaR         {sol.cvar:.6f} / {sol.var_threshold:.6f}", file=out)
    print(f"arcs activated     {d.n_active}", file=out)
    print(f"inventory          {d.total_inventory():.6f}", file=out)


def _summary(inst, sol) -> dict:
    return {
        "instance_hash": instance_hash(inst),
        "objective": sol.objective,
        "fixed_cost": sol.fixed_cost,
        "holding_cost": sol.holding_cost,
        "expected_recourse": sol.expected_recourse,
        "cvar": sol.cvar,
        "var": sol.var_threshold,
        "active_arcs": [a.id for a, y in zip(inst.arcs, sol.design.y) if y > 0.5],
        "inventory": sol.design.W.tolist(),
        "probabilities": list(map(float, sol.ddu_probs)),
        "per_scenario": list(map(float, sol.per_scenario)),
    }


def cmd_validate(args) -> int:
    inst = load_instance(args.bundle)
    print(
        f"{inst.name}: {inst.n_nodes} nodes, {inst.n_arcs} arcs, {inst.n_commodities} commodities, "
        f"{inst.n_scenarios} scenarios; k_max {ddu_k_max(inst):.6g}; hash {instance_hash(inst)}"
    )
    return 0


def cmd_solve_ef(args) -> int:
    inst = _load(args)
    sol = solve_ef(inst, ddu_on=not args.no_ddu, risk_on=not args.no_risk)
    _print_solution(sol)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(_summary(inst, sol), indent=2))
    return 0


def cmd_benders(args) -> int:
    inst = _load(args)
    st = inst.settings
    opts = BendersOptions(
        epsilon=args.epsilon if args.epsilon is not None else st.epsilon,
        max_iter=args.max_iter if args.max_iter is not None else st.max_iter,
        group_cuts=args.group_cuts,
        group_cut_mode=args.group_cut_mode,
        cut_retention=("prune_slack", args.prune_slack) if args.prune_slack else "keep_all",
    )
    res = run_benders(inst, opts)
    state = res.state
    if args.trace_out:
        cols = ["iteration", "lower_bound", "upper_bound", "abs_gap", "pct_gap", "cuts_added", "wall_time"]
        lines = ["\t".join(cols)] + ["\t".join(repr(float(t[c])) if c not in ("iteration", "cuts_added") else str(t[c])
                                              for c in cols) for t in state.trace]
        Path(args.trace_out).write_text("\n".join(lines) + "\n")
    if res.solution is None:
        print(f"benders: no feasible design found ({state.flagged or 'master infeasible'})", file=sys.stderr)
        return 1
    _print_solution(res.solution)
    print(f"iterations         {state.iteration} ({'converged' if state.converged else state.flagged})")
    print(f"bounds             {state.lower_bound:.6f} .. {state.upper_bound:.6f}")
    return 0 if state.converged else 1


def cmd_experiment(args) -> int:
    inst = _load(args)
    name = args.name
    if name == "vss":
        rep = ex.run_vss(inst)
    elif name == "vmc":
        rep = ex.run_vmc(inst)
    elif name == "vmc-rho":
        rep = ex.run_vmc_rho_sweep(inst, args.rhos)
    elif name == "vmc-gamma":
        rep = ex.run_vmc_gamma_sweep(inst, args.gammas)
    elif name == "vep":
        kmax = ddu_k_max(inst)
        ks = args.ks if args.ks is not None else [0.0, 1.0, kmax]
        bad = [k for k in ks if k < 0 or k > kmax * (1 + 1e-12)]
        if bad:
            raise InputError(f"k = {bad[0]} lies outside the validity region [0, {kmax:.6g}]")
        rep = ex.run_vep_sweep(inst, ks)
    elif name == "frontier":
        rep = ex.run_frontier(inst, args.lambdas, args.alphas)
    else:
        S = inst.n_scenarios
        sizes = args.sizes if args.sizes is not None else [S, 3 * S, 9 * S]
        if any(n % S for n in sizes):
            raise InputError(f"scenario sizes must be multiples of {S}")
        rep = ex.run_scenario_scaling(inst, sizes)
    sys.stdout.write(rep.to_tsv())
    for key, val in rep.scalars.items():
        if isinstance(val, (int, float, bool, str)):
            print(f"# {key} = {val}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = name.replace("-", "_")
        (out / f"{stem}.tsv").write_text(rep.to_tsv())
        (out / f"{stem}.json").write_text(rep.to_json())
        if args.plot_data and rep.rows:
            x = rep.columns[0]
            numeric = [c for c in rep.columns[1:] if isinstance(rep.rows[0].get(c), (int, float)) and
                       not isinstance(rep.rows[0].get(c), bool)]
            for y, (xs, ys) in rep.plot_series(x, numeric).items():
                (out / f"{stem}_{y}.dat").write_text("".join(f"{a!r}\t{b!r}\n" for a, b in zip(xs, ys)))
    return 0


def cmd_gen(args) -> int:
    for p in generate_bundled_instances(args.dir):
        print(p)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "solve-ef": cmd_solve_ef,
    "benders": cmd_benders,
    "experiment": cmd_experiment,
    "gen-instances": cmd_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InfeasibleModel, InfeasibleDesign, NumericFailure, LpError) as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return 1
    except (BundleError, InputError, InvalidProbability, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
