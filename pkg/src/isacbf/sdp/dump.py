"""Line-oriented text dump of a :class:`ConicProblem`.

Every line is one JSON object with a ``kind`` field; see
``docs/problem_format.md`` for the grammar. Complex matrices are written as
nested lists of ``[re, im]`` pairs, real matrices as nested lists of numbers.
"""

from __future__ import annotations

import json
from typing import IO

import numpy as np

from .problem import Block, ConicProblem, LinearConstraint, LMIConstraint, ProblemError, Scalar

FORMAT = "isacbf-conic/1"


def _mat_out(A: np.ndarray, complex_field: bool):
    A = np.asarray(A)
    if complex_field:
        A = A.astype(complex)
        return [[[float(v.real), float(v.imag)] for v in row] for row in A]
    return np.real(A).astype(float).tolist()


def _mat_in(data, complex_field: bool) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if complex_field:
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ProblemError("complex matrix must be nested [re, im] pairs")
        return arr[..., 0] + 1j * arr[..., 1]
    return arr


def _terms_out(problem: ConicProblem, terms):
    bm = problem.block_map
    out = []
    for name, coef in terms.items():
        if name in bm:
            out.append({"var": name, "matrix": _mat_out(coef, bm[name].field == "complex")})
        else:
            out.append({"var": name, "coef": float(np.real(coef))})
    return out


def dump_problem(problem: ConicProblem, fh: IO[str]) -> None:
    def emit(obj):
        fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    emit({"kind": "format", "version": FORMAT})
    for b in problem.blocks:
        emit({"kind": "block", "name": b.name, "dim": b.dim, "field": b.field})
    for s in problem.scalars:
        emit({"kind": "scalar", "name": s.name, "lower": s.lower})
    emit({"kind": "objective", "terms": _terms_out(problem, problem.objective)})
    for c in problem.constraints:
        emit({"kind": "constraint", "label": c.label, "sense": c.sense, "rhs": float(c.rhs),
              "terms": _terms_out(problem, c.terms)})
    bm = problem.block_map
    for l in problem.lmis:
        cf = bm[l.block].field == "complex"
        emit({"kind": "lmi", "label": l.label, "scalar": l.scalar, "block": l.block,
              "M": _mat_out(l.M, cf)})


def load_problem(fh: IO[str]) -> ConicProblem:
    blocks, scalars, cons, lmis = [], [], [], []
    objective = {}
    lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ProblemError("empty problem dump")
    head = json.loads(lines[0])
    if head.get("kind") != "format" or head.get("version") != FORMAT:
        raise ProblemError(f"not an {FORMAT} dump")
    fields = {}

    def terms_in(items):
        out = {}
        for t in items:
            if "matrix" in t:
                out[t["var"]] = _mat_in(t["matrix"], fields[t["var"]] == "complex")
            else:
                out[t["var"]] = float(t["coef"])
        return out

    for ln in lines[1:]:
        obj = json.loads(ln)
        kind = obj.get("kind")
        if kind == "block":
            blocks.append(Block(obj["name"], int(obj["dim"]), obj["field"]))
            fields[obj["name"]] = obj["field"]
        elif kind == "scalar":
            scalars.append(Scalar(obj["name"], obj["lower"]))
        elif kind == "objective":
            objective = terms_in(obj["terms"])
        elif kind == "constraint":
            cons.append(LinearConstraint(terms_in(obj["terms"]), obj["sense"], float(obj["rhs"]),
                                         obj.get("label", "")))
        elif kind == "lmi":
            lmis.append(LMIConstraint(obj["scalar"], obj["block"],
                                      _mat_in(obj["M"], fields[obj["block"]] == "complex"),
                                      obj.get("label", "")))
        else:
            raise ProblemError(f"unknown line kind {kind!r}")
    return ConicProblem(blocks, scalars, objective, cons, lmis)
