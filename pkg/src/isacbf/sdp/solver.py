"""Backend dispatch: ``solve(problem, options) -> (solution, report)``."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .ipm import interior_point
from .lowering import StandardForm, to_standard_form
from .problem import (
    ConicProblem,
    ConicSolution,
    ProblemError,
    SolverOptions,
    SolverReport,
    unembed,
)

# Clarabel reports "inaccurate" on the badly scaled beamforming rows; CVXOPT does not.
_CVXPY_SOLVER = "CVXOPT"
_BACKENDS: dict[str, Callable] = {}


def register_backend(name: str):
    def deco(fn):
        _BACKENDS[name] = fn
        return fn
    return deco


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def solve(problem: ConicProblem, options: SolverOptions | None = None) -> tuple[ConicSolution, SolverReport]:
    """Solve ``problem``; the solution is meaningful only if ``report.status == 'optimal'``."""
    options = options or SolverOptions()
    try:
        backend = _BACKENDS[options.backend]
    except KeyError:
        raise ProblemError(f"unknown backend {options.backend!r}; have {available_backends()}") from None
    return backend(problem, options)


def _recover(problem: ConicProblem, sf: StandardForm, Xs, x, y, Zs) -> ConicSolution:
    blocks, duals_blk = {}, {}
    index = {n: i for i, n in enumerate(sf.block_names)}
    for blk in problem.blocks:
        X = Xs[index[blk.name]]
        Zd = Zs[index[blk.name]]
        if blk.name in sf.complex_blocks:
            blocks[blk.name] = unembed(X)
            duals_blk[blk.name] = 2.0 * unembed(Zd)
        else:
            blocks[blk.name] = X.copy()
            duals_blk[blk.name] = Zd.copy()
    scalars = {}
    for name, (kind, i0, extra) in sf.scalar_cols.items():
        scalars[name] = float(x[i0] - x[extra]) if kind == "split" else float(extra + x[i0])
    duals = [None if r is None else float(y[r] / sf.row_scale[r]) for r in sf.constraint_rows]
    lmi_duals = []
    for name in sf.lmi_blocks:
        Zd = Zs[index[name]]
        if name in sf.complex_blocks:
            lmi_duals.append(2.0 * unembed(Zd))
        else:
            lmi_duals.append(Zd.copy())
    objective = problem.objective_value({**blocks, **scalars})
    return ConicSolution(blocks, scalars, objective, None, duals, lmi_duals, duals_blk)


@register_backend("ipm")
def _solve_ipm(problem: ConicProblem, options: SolverOptions):
    t0 = time.perf_counter()
    sf = to_standard_form(problem)
    if sf.infeasible_rows:
        empty = ConicSolution({b.name: np.zeros((b.dim, b.dim)) for b in problem.blocks},
                              {s.name: 0.0 for s in problem.scalars}, float("nan"))
        return empty, SolverReport("infeasible", 0, float("nan"), float("inf"), float("nan"),
                                   time.perf_counter() - t0,
                                   f"constraint rows {sf.infeasible_rows} read 0 = nonzero")
    res = interior_point(sf, options.gap_tol, options.feas_tol, options.max_iterations, options.verbose)
    sol = _recover(problem, sf, res.X, res.x, res.y, res.Z)
    sol = ConicSolution(sol.blocks, sol.scalars, sol.objective, res.dobj, sol.duals, sol.lmi_duals,
                        sol.block_duals)
    report = SolverReport(res.status, res.iterations, res.relgap, res.pinf, res.dinf,
                          time.perf_counter() - t0, res.message)
    return sol, report


@register_backend("cvxpy")
def _solve_cvxpy(problem: ConicProblem, options: SolverOptions):
    """Cross-check backend through cvxpy and CVXOPT (optional dependency)."""
    try:
        import cvxpy as cp
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ProblemError("the 'cvxpy' backend needs cvxpy installed") from exc
    t0 = time.perf_counter()
    # Work in units of a typical solution magnitude ``unit`` (largest
    # |b_i| / ||a_i|| over rows) with unit-norm rows; the problem is
    # homogeneous in the variables, so values are rescaled on output.
    norms = [np.sqrt(sum(np.sum(np.abs(np.asarray(c)) ** 2) for c in con.terms.values()))
             for con in problem.constraints]
    ratios = [abs(con.rhs) / n for con, n in zip(problem.constraints, norms) if n > 0]
    unit = max([1.0] + ratios) if ratios else 1.0
    vars_ = {}
    cons = []
    for blk in problem.blocks:
        if blk.field == "complex":
            V = cp.Variable((blk.dim, blk.dim), hermitian=True)
        else:
            V = cp.Variable((blk.dim, blk.dim), symmetric=True)
        vars_[blk.name] = V
        cons.append(V >> 0)
    for s in problem.scalars:
        v = cp.Variable()
        vars_[s.name] = v
        if s.lower is not None:
            cons.append(v >= s.lower / unit)
    sm = problem.scalar_map

    def expr(terms):
        parts = []
        for name, coef in terms.items():
            if name in sm:
                parts.append(float(np.real(coef)) * vars_[name])
            else:
                parts.append(cp.real(cp.trace(np.asarray(coef).conj().T @ vars_[name])))
        return cp.sum(cp.hstack(parts)) if parts else cp.Constant(0.0)

    for con, nrm in zip(problem.constraints, norms):
        nrm = nrm if nrm > 0 else 1.0
        e = expr({k: np.asarray(v) / nrm for k, v in con.terms.items()})
        rhs = con.rhs / (nrm * unit)
        cons.append({"<=": e <= rhs, ">=": e >= rhs, "==": e == rhs}[con.sense])
    for lmi in problem.lmis:
        M = np.asarray(lmi.M)
        m = M.shape[1]
        Q = M.conj().T @ vars_[lmi.block] @ M
        S = vars_[lmi.scalar] * np.eye(m) - (Q + Q.H) / 2 if np.iscomplexobj(M) or \
            problem.block_map[lmi.block].field == "complex" else vars_[lmi.scalar] * np.eye(m) - (Q + Q.T) / 2
        cons.append(S >> 0)
    prob = cp.Problem(cp.Minimize(expr(problem.objective)), cons)
    try:
        prob.solve(solver=_CVXPY_SOLVER)
    except cp.error.SolverError as exc:
        return (ConicSolution({}, {}, float("nan")),
                SolverReport("numerical_failure", 0, float("nan"), float("nan"), float("nan"),
                             time.perf_counter() - t0, str(exc)))
    status = {
        "optimal": "optimal", "optimal_inaccurate": "numerical_failure",
        "infeasible": "infeasible", "infeasible_inaccurate": "infeasible",
        "unbounded": "unbounded", "unbounded_inaccurate": "unbounded",
    }.get(prob.status, "numerical_failure")
    blocks = {b.name: (unit * np.asarray(vars_[b.name].value) if vars_[b.name].value is not None
                       else np.zeros((b.dim, b.dim))) for b in problem.blocks}
    scalars = {s.name: unit * float(vars_[s.name].value) if vars_[s.name].value is not None else 0.0
               for s in problem.scalars}
    obj = problem.objective_value({**blocks, **scalars}) if status == "optimal" else float("nan")
    iters = int(prob.solver_stats.num_iters or 0) if prob.solver_stats else 0
    return (ConicSolution(blocks, scalars, obj),
            SolverReport(status, iters, float("nan"), float("nan"), float("nan"),
                         time.perf_counter() - t0, f"cvxpy status {prob.status}"))
