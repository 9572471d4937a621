"""Command-line interface: ``id-milp <command> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import bench
from .diagram import (
    DiagramError,
    StrategySpaceOverflow,
    load_diagram,
    observation_set,
    save_diagram,
    strategy_space_size,
    validate_diagram,
)
from .formulations import ChanceConstraintSpec
from .instances import FAMILIES, discretize_turbine, generate
from .lpformat import write_lp
from .paths import compute_statistics
from .solve import FORMULATIONS, build_model, solve


def _load_valid(path):
    d = load_diagram(path)
    d.require_valid()
    return d


def _state_index(d, node, token: str) -> int:
    states = d.node(node).states
    if token in states:
        return states.index(token)
    try:
        k = int(token)
    except ValueError:
        raise ValueError(f"node {node!r} has no state {token!r}") from None
    if not 0 <= k < len(states):
        raise ValueError(f"state index {k} out of range for {node!r}")
    return k


def parse_chance(d, text: str) -> ChanceConstraintSpec:
    """``NODES:STATES:THRESHOLD``; nodes comma separated, joint states ``|`` separated.

    Example: ``D,O:yes,dry:0`` bounds P(D=yes, O=dry) by 0.
    """
    try:
        nodes_s, states_s, thr_s = text.rsplit(":", 2)
    except ValueError:
        raise ValueError(f"bad chance constraint {text!r}; expected NODES:STATES:THRESHOLD") from None
    nodes = [n.strip() for n in nodes_s.split(",") if n.strip()]
    for n in nodes:
        if n not in d:
            raise ValueError(f"unknown node {n!r} in chance constraint")
    states = []
    for joint in filter(None, (s.strip() for s in states_s.split("|"))):
        toks = [t.strip() for t in joint.split(",")]
        if len(toks) != len(nodes):
            raise ValueError(f"joint state {joint!r} does not match nodes {nodes}")
        states.append(tuple(_state_index(d, n, t) for n, t in zip(nodes, toks)))
    return ChanceConstraintSpec(nodes, states, float(thr_s))


# -- commands ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    d = load_diagram(args.file)
    report = validate_diagram(d)
    for f in report.findings:
        print(f)
    for f in report.notes:
        print(f"note: {f}")
    return 0 if report.ok else 1


def cmd_info(args) -> int:
    d = _load_valid(args.file)
    stats = compute_statistics(d, levels=True, quantum=args.quantum, workers=args.workers)
    try:
        strategies = strategy_space_size(d)
    except StrategySpaceOverflow as e:
        strategies = f"exceeds representable count (log2 ~ {e.log2_size:.1f})"
    out = {
        "paths": stats.n_paths,
        "positive_paths": stats.n_positive,
        "observable_segments": stats.n_segments,
        "utility_levels": int(len(stats.levels)),
        "strategies": strategies,
        "observation_set": observation_set(d),
    }
    print(json.dumps(out))
    return 0


def cmd_generate(args) -> int:
    d = generate(args.family, args.size, args.seed)
    save_diagram(d, args.out)
    return 0


def _sidecar(out: Path) -> Path:
    return out.with_name(out.stem + ".map.json")


def cmd_build(args) -> int:
    d = _load_valid(args.file)
    specs = [parse_chance(d, c) for c in args.chance]
    model, vm = build_model(
        d, args.formulation, alpha=args.alpha, with_cuts=not args.no_cuts,
        equality_cuts=args.equality_cuts, filter_zero=args.filter_zero,
        chance_specs=specs, quantum=args.quantum, workers=args.workers,
    )
    out = Path(args.out)
    write_lp(model, out)
    vm.dump(model, _sidecar(out))
    print(json.dumps({"variables": model.n_vars, "constraints": model.n_constraints, "lp": str(out),
                      "map": str(_sidecar(out))}))
    return 0


def cmd_solve(args) -> int:
    d = _load_valid(args.file)
    specs = [parse_chance(d, c) for c in args.chance]
    opts = {}
    if args.solver not in ("enum", "bnb"):
        opts = dict(with_cuts=not args.no_cuts, equality_cuts=args.equality_cuts, filter_zero=args.filter_zero)
    res = solve(
        d, args.formulation, args.solver, alpha=args.alpha, chance_specs=specs,
        time_limit=args.time_limit, cap=args.cap, quantum=args.quantum,
        decompose=args.decompose, workers=args.workers, **opts,
    )
    print(json.dumps(res.to_json(d), default=_json_default))
    return 0


def cmd_discretize(args) -> int:
    bp = args.breakpoints
    spec = [float(x) for x in bp.split(",")] if "," in bp or "." in bp else int(bp)
    d, notes = discretize_turbine(args.samples, spec, args.seed, te_mean=args.te_mean, workers=args.workers)
    save_diagram(d, args.out)
    for node, cat, msg in notes:
        print(f"note: {node}: {cat}: {msg}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    records = bench.run_bench(
        args.family, args.sizes, args.instances, args.formulations, args.solver,
        args.time_limit, args.seed0, alpha=args.alpha, workers=args.workers,
    )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)
    table = bench.format_aggregate(bench.aggregate(records))
    print(table, file=sys.stderr if not args.out else sys.stdout, end="")
    return 0


def _json_default(o):
    if isinstance(o, float) and math.isnan(o):
        return None
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "__dict__"):
        return vars(o)
    return str(o)


def _csv_ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _csv_strs(s: str) -> list[str]:
    return [x for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="id-milp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def model_flags(p, solve_cmd=False):
        p.add_argument("--formulation", choices=FORMULATIONS, default="dpr")
        p.add_argument("--alpha", type=float, default=None, help="CVaR probability level")
        p.add_argument("--no-cuts", action="store_true", help="omit the observation cuts")
        p.add_argument("--equality-cuts", action="store_true", help="observation cuts as equalities")
        p.add_argument("--filter-zero", action="store_true", help="drop segments with zero coefficient")
        p.add_argument("--quantum", type=float, default=None, help="round utilities to this grid first")
        p.add_argument("--chance", action="append", default=[], metavar="NODES:STATES:B",
                       help="chance constraint, e.g. D,O:yes,dry:0 (repeatable)")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="check a diagram file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("info", help="structural counts as JSON")
    p.add_argument("file")
    p.add_argument("--quantum", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("generate", help="write a random benchmark instance")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build", help="write the LP export and variable map")
    p.add_argument("file")
    model_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", help="solve and print a JSON result")
    p.add_argument("file")
    model_flags(p)
    p.add_argument("--solver", default="highs",
                   help="enum, bnb, highs, backend (uses $ID_MILP_BACKEND) or backend:<command>")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--cap", type=int, default=10**6, help="enumeration strategy cap")
    p.add_argument("--decompose", action="store_true",
                   help="enumeration: optimize the largest decision rule by rule")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("discretize", help="sample and discretize a continuous turbine instance")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--breakpoints", default="2", help="count in 2..6 or a comma list of values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--te-mean", choices=("SS", "TS"), default="SS")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("bench", help="benchmark sweep; CSV records plus aggregate table")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--sizes", type=_csv_ints, required=True)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--formulations", type=_csv_strs, default=["dp", "dpr"])
    p.add_argument("--solver", default="enum")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--seed0", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DiagramError, ValueError, OSError, RuntimeError, KeyError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
