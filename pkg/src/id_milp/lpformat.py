"""CPLEX LP file format: writer and a reader for the subset the writer emits.

Coefficients are printed with 17 significant digits, which round-trips every
double exactly. Every column gets an explicit line in ``Bounds`` so that the
reader can restore the original column order.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .model import BINARY, CONTINUOUS, INTEGER, MilpModel

TERMS_PER_LINE = 8

_TOKEN = re.compile(
    r"""
    (?P<label>[A-Za-z_][^\s:+\-<>=*]*)\s*:(?!=) |
    (?P<sense><=|>=|=<|=>|<|>|=) |
    (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[iI]nf(?:inity)?) |
    (?P<sign>[+-]) |
    (?P<name>[A-Za-z_][^\s:+\-<>=*]*)
    """,
    re.VERBOSE,
)

_SECTIONS = {
    "maximize": "max", "maximise": "max", "max": "max",
    "minimize": "min", "minimise": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "gen": "gen",
    "end": "end",
}


def _num(x: float) -> str:
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _terms(names, index, coef) -> list[str]:
    out = []
    for i, c in zip(index.tolist(), coef.tolist()):
        sign = "-" if c < 0 or (c == 0 and math.copysign(1.0, c) < 0) else "+"
        out.append(f"{sign} {_num(abs(c))} {names[i]}")
    return out


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(terms), 1), TERMS_PER_LINE):
        chunk = " ".join(terms[k : k + TERMS_PER_LINE])
        lines.append((f" {head} " if k == 0 else "   ") + chunk)
    if tail:
        lines[-1] += f" {tail}"
    return lines


def export_lp(model: MilpModel) -> str:
    names = model.var_names
    out = [f"\\ formulation: {model.metadata.get('formulation', 'unknown')}"]
    out.append("Maximize" if model.sense == "max" else "Minimize")
    obj = sorted(model.objective.items())
    idx = np.array([i for i, _ in obj], dtype=np.int64)
    val = np.array([c for _, c in obj], dtype=float)
    out += _wrap("obj:", _terms(names, idx, val))
    out.append("Subject To")
    for con in model.constraints:
        terms = _terms(names, con.index, con.coef)
        if not terms and names:
            terms = [f"+ 0 {names[0]}"]
        out += _wrap(f"{con.name}:", terms, f"{con.sense} {_num(con.rhs)}")
    out.append("Bounds")
    for name, lo, hi in zip(names, model.lb, model.ub):
        if math.isinf(lo) and lo < 0 and math.isinf(hi):
            out.append(f" {name} free")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    for label, kind in (("Binary", BINARY), ("General", INTEGER)):
        cols = [n for n, t in zip(names, model.vtype) if t == kind]
        if cols:
            out.append(label)
            out += [f" {n}" for n in cols]
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: MilpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_lp(model))


# -- reader ---------------------------------------------------------------------


class LPParseError(ValueError):
    pass


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise LPParseError(f"cannot tokenize near {text[pos:pos + 30]!r}")
        kind = m.lastgroup
        val = m.group(kind)
        toks.append((kind, val))
        pos = m.end()
    return toks


def _number(tok: str) -> float:
    return float(tok.replace("infinity", "inf").replace("Infinity", "inf").replace("Inf", "inf"))


def _split_sections(text: str) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        key = line.strip().lower()
        if key in _SECTIONS:
            current = _SECTIONS[key]
            sections.setdefault(current, [])
            if current == "end":
                break
            continue
        if current is None:
            if line.strip():
                raise LPParseError(f"content before the objective section: {line!r}")
            continue
        sections[current].append(line)
    return {k: "\n".join(v) for k, v in sections.items()}


def _linear(toks, i, stop_at_sense=True):
    """Parse ``[+|-] [coef] name ...`` starting at ``toks[i]``; returns (terms, i)."""
    terms = []
    sign, coef = 1.0, None
    while i < len(toks):
        kind, val = toks[i]
        if kind == "sense" and stop_at_sense:
            break
        if kind == "label":
            break
        if kind == "sign":
            sign = -1.0 if val == "-" else 1.0
        elif kind == "number":
            coef = _number(val)
        elif kind == "name":
            c = 1.0 if coef is None else coef
            terms.append((val, c if sign > 0 else -c))
            sign, coef = 1.0, None
        i += 1
    return terms, i


def parse_lp(text: str) -> MilpModel:
    """Read an LP file produced by :func:`export_lp` (and similar simple files)."""
    sec = _split_sections(text)
    sense = "max" if "max" in sec else "min"
    if sense not in sec:
        raise LPParseError("missing objective section")

    toks = _tokenize(sec[sense])
    if toks and toks[0][0] == "label":
        toks = toks[1:]
    obj_terms, _ = _linear(toks, 0)

    rows = []
    toks = _tokenize(sec.get("st", ""))
    i, n_unnamed = 0, 0
    while i < len(toks):
        name = None
        if toks[i][0] == "label":
            name = toks[i][1]
            i += 1
        else:
            name = f"r{n_unnamed}"
            n_unnamed += 1
        terms, i = _linear(toks, i)
        if i >= len(toks) or toks[i][0] != "sense":
            raise LPParseError(f"row {name}: missing sense")
        op = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(toks[i][1], toks[i][1])
        i += 1
        sgn = 1.0
        if i < len(toks) and toks[i][0] == "sign":
            sgn = -1.0 if toks[i][1] == "-" else 1.0
            i += 1
        if i >= len(toks) or toks[i][0] != "number":
            raise LPParseError(f"row {name}: missing right-hand side")
        rows.append((name, terms, op, sgn * _number(toks[i][1])))
        i += 1

    bounds: dict[str, list[float]] = {}
    order: list[str] = []
    for line in sec.get("bounds", "").splitlines():
        if not line.strip():
            continue
        name, lo, hi = _parse_bound(line)
        if name not in bounds:
            order.append(name)
            bounds[name] = [0.0, math.inf]
        if lo is not None:
            bounds[name][0] = lo
        if hi is not None:
            bounds[name][1] = hi

    binaries = set(sec.get("bin", "").split())
    generals = set(sec.get("gen", "").split())

    seen = set(order)
    for n, _ in obj_terms:
        if n not in seen:
            seen.add(n)
            order.append(n)
    for _, terms, _, _ in rows:
        for n, _ in terms:
            if n not in seen:
                seen.add(n)
                order.append(n)
    for n in sorted(binaries | generals):
        if n not in seen:
            seen.add(n)
            order.append(n)

    model = MilpModel(sense=sense)
    for n in order:
        lo, hi = bounds.get(n, [0.0, math.inf])
        vtype = BINARY if n in binaries else INTEGER if n in generals else CONTINUOUS
        if vtype == BINARY:
            model.add_var(n, vtype=BINARY)
        else:
            model.add_var(n, lo, hi, vtype)
    col = model.column
    for n, c in obj_terms:
        model.objective[col(n)] = model.objective.get(col(n), 0.0) + c
    for name, terms, op, rhs in rows:
        model.add_constraint(name, [col(n) for n, _ in terms], [c for _, c in terms], op, rhs)
    return model


def _parse_bound(line: str):
    toks = _tokenize(line)
    kinds = [k for k, _ in toks]
    vals = [v for _, v in toks]
    if len(toks) == 2 and kinds[0] == "name" and vals[1].lower() == "free":
        return vals[0], -math.inf, math.inf

    def signed_numbers(ts):
        out, sign = [], 1.0
        for k, v in ts:
            if k == "sign":
                sign = -1.0 if v == "-" else 1.0
            elif k in ("number",):
                out.append(sign * _number(v))
                sign = 1.0
            else:
                out.append((k, v))
        return out

    items = signed_numbers(toks)
    # forms: lo <= x <= hi | x <= hi | x >= lo | lo <= x | x = v
    if len(items) == 5 and items[1] == ("sense", "<=") and items[3] == ("sense", "<="):
        return items[2][1], items[0], items[4]
    if len(items) == 3:
        a, (_, op), b = items
        if isinstance(a, tuple):
            name, val = a[1], b
            if op in ("<=", "=<", "<"):
                return name, None, val
            if op in (">=", "=>", ">"):
                return name, val, None
            return name, val, val
        name, val = b[1], a
        if op in ("<=", "=<", "<"):
            return name, val, None
        if op in (">=", "=>", ">"):
            return name, None, val
        return name, val, val
    raise LPParseError(f"cannot parse bound line {line!r}")


def read_lp(path) -> MilpModel:
    with open(path) as fh:
        return parse_lp(fh.read())
