"""Reference backend for the file contract: ``python -m id_milp.highs_backend model.lp out.sol``."""

from __future__ import annotations

import argparse
import sys

from .backend import solve_in_process, write_solution
from .lpformat import read_lp


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="id_milp.highs_backend")
    ap.add_argument("lp")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args(argv)
    model = read_lp(args.lp)
    write_solution(solve_in_process(model, args.time_limit), args.solution)
    return 0


if __name__ == "__main__":
    sys.exit(main())
