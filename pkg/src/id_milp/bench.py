"""Benchmark harness: generate instances, solve them, tabulate timings."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from .instances import FAMILIES, generate
from .results import CAP_EXCEEDED, FEASIBLE, OPTIMAL, TIMEOUT
from .solve import FORMULATIONS, solve


@dataclass
class BenchRecord:
    family: str
    size: int
    seed: int
    formulation: str
    solver: str
    status: str
    objective: float | None
    tau_p: float
    tau_s: float
    tau_t: float


CSV_FIELDS = [f.name for f in fields(BenchRecord)]


def _run_one(family, size, seed, formulation, solver, time_limit, alpha, opts):
    d = generate(family, size, seed)
    if time_limit is not None and time_limit <= 0:
        return BenchRecord(family, size, seed, formulation, solver, TIMEOUT, None, 0.0, 0.0, 0.0)
    try:
        res = solve(d, formulation, solver, alpha=alpha, time_limit=time_limit, **opts)
    except Exception as e:  # one broken run must not abort the sweep
        return BenchRecord(family, size, seed, formulation, solver, f"error:{type(e).__name__}", None, 0.0, 0.0, 0.0)
    status = res.status
    if time_limit is not None and res.tau_t > time_limit and status in (OPTIMAL, FEASIBLE):
        status = TIMEOUT
    return BenchRecord(
        family, size, seed, formulation, solver, status, res.objective, res.tau_p, res.tau_s, res.tau_p + res.tau_s
    )


def run_bench(
    family: str,
    sizes: Sequence[int],
    instance_count: int,
    formulations: Sequence[str],
    solver: str = "enum",
    time_limit: float | None = None,
    seed0: int = 0,
    *,
    alpha: float | None = None,
    workers: int = 1,
    **opts,
) -> list[BenchRecord]:
    """One record per (size, instance, formulation), seeds ``seed0 + i``."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    for f in formulations:
        if f not in FORMULATIONS:
            raise ValueError(f"unknown formulation {f!r}")
    jobs = [
        (family, size, seed0 + i, f, solver, time_limit, alpha, opts)
        for size in sizes
        for i in range(instance_count)
        for f in formulations
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda j: _run_one(*j), jobs))
    else:
        records = [_run_one(*j) for j in jobs]
    records.sort(key=lambda r: (r.family, r.size, r.seed, r.formulation))
    return records


def write_csv(records: Iterable[BenchRecord], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        row = asdict(r)
        row["objective"] = "" if r.objective is None else repr(r.objective)
        w.writerow(row)


def read_csv(fh) -> list[BenchRecord]:
    out = []
    for row in csv.DictReader(fh):
        out.append(
            BenchRecord(
                row["family"], int(row["size"]), int(row["seed"]), row["formulation"], row["solver"],
                row["status"], float(row["objective"]) if row["objective"] else None,
                float(row["tau_p"]), float(row["tau_s"]), float(row["tau_t"]),
            )
        )
    return out


@dataclass
class AggregateRow:
    family: str
    size: int
    formulation: str
    solver: str
    instances: int
    opt: int
    feas: int
    mean_tau_t: float
    mean_tau_s: float


def aggregate(records: Sequence[BenchRecord]) -> list[AggregateRow]:
    """Per (family, size, formulation, solver): Opt/Feas counts and mean times of optimal runs.

    ``feas`` counts runs that produced a solution (optimal runs, feasible
    runs and timeouts that still carry an objective).
    """
    cells: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        cells.setdefault((r.family, r.size, r.formulation, r.solver), []).append(r)
    out = []
    for key in sorted(cells):
        rs = cells[key]
        opt = [r for r in rs if r.status == OPTIMAL]
        feas = [r for r in rs if r.objective is not None and r.status != CAP_EXCEEDED]
        mean = lambda xs: sum(xs) / len(xs) if xs else math.nan  # noqa: E731
        out.append(
            AggregateRow(*key, len(rs), len(opt), len(feas),
                         mean([r.tau_t for r in opt]), mean([r.tau_s for r in opt]))
        )
    return out


def format_aggregate(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    buf.write(f"{'family':<8} {'size':>4} {'form':<10} {'solver':<8} {'tau_t':>10} {'tau_s':>10} {'opt':>7} {'feas':>7}\n")
    for a in rows:
        buf.write(
            f"{a.family:<8} {a.size:>4} {a.formulation:<10} {a.solver[:8]:<8} "
            f"{a.mean_tau_t:>10.4f} {a.mean_tau_s:>10.4f} "
            f"{f'{a.opt}/{a.instances}':>7} {f'{a.feas}/{a.instances}':>7}\n"
        )
    return buf.getvalue()
