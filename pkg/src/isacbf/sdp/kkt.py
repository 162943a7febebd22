"""Independent verification of a candidate solution against a problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ConicProblem, ConicSolution, ProblemError, inner


@dataclass(frozen=True)
class KKTReport:
    """Absolute residuals; nothing here depends on how the solution was found.

    ``constraint_residuals[i]`` is the violation of linear constraint i
    (0 when satisfied), ``lmi_min_eigenvalues`` the smallest eigenvalue of
    each LMI expression, ``block_min_eigenvalues`` the smallest eigenvalue of
    each block and ``complementarity`` the sum of ``<X_b, S_b>`` over blocks
    plus multiplier-times-slack terms (None when no duals are attached).
    """

    constraint_residuals: tuple[float, ...]
    lmi_min_eigenvalues: tuple[float, ...]
    block_min_eigenvalues: dict
    scalar_bound_violations: dict
    complementarity: float | None

    @property
    def max_primal_residual(self) -> float:
        vals = list(self.constraint_residuals)
        vals += [max(0.0, -e) for e in self.lmi_min_eigenvalues]
        vals += [max(0.0, -e) for e in self.block_min_eigenvalues.values()]
        vals += list(self.scalar_bound_violations.values())
        return max(vals) if vals else 0.0


def _violation(lhs: float, sense: str, rhs: float) -> float:
    if sense == "==":
        return abs(lhs - rhs)
    if sense == ">=":
        return max(0.0, rhs - lhs)
    return max(0.0, lhs - rhs)


def check_kkt(problem: ConicProblem, solution: ConicSolution) -> KKTReport:
    bm = problem.block_map
    for name, blk in bm.items():
        X = solution.blocks.get(name)
        if X is None or np.shape(X) != (blk.dim, blk.dim):
            raise ProblemError(f"solution block {name!r} missing or has wrong shape")
    for s in problem.scalars:
        if s.name not in solution.scalars:
            raise ProblemError(f"solution scalar {s.name!r} missing")

    values = solution.values()
    res, slacks = [], []
    for con in problem.constraints:
        lhs = problem.evaluate(con.terms, values)
        res.append(_violation(lhs, con.sense, con.rhs))
        slacks.append(lhs - con.rhs)

    lmi_eigs = []
    for lmi in problem.lmis:
        M = np.asarray(lmi.M)
        Q = M.conj().T @ np.asarray(values[lmi.block]) @ M
        S = float(values[lmi.scalar]) * np.eye(M.shape[1]) - 0.5 * (Q + Q.conj().T)
        lmi_eigs.append(float(np.linalg.eigvalsh(S)[0]))

    blk_eigs = {}
    for name in bm:
        X = np.asarray(values[name])
        blk_eigs[name] = float(np.linalg.eigvalsh(0.5 * (X + X.conj().T))[0])

    bounds = {}
    for s in problem.scalars:
        if s.lower is not None:
            bounds[s.name] = max(0.0, s.lower - float(values[s.name]))

    comp = None
    if solution.block_duals is not None:
        comp = 0.0
        for name in bm:
            comp += abs(inner(np.asarray(solution.block_duals[name]), np.asarray(values[name])))
        if solution.duals is not None:
            for y, con, sl in zip(solution.duals, problem.constraints, slacks):
                if y is not None and con.sense != "==":
                    comp += abs(y * sl)
        if solution.lmi_duals is not None:
            for lmi, Zd in zip(problem.lmis, solution.lmi_duals):
                M = np.asarray(lmi.M)
                Q = M.conj().T @ np.asarray(values[lmi.block]) @ M
                S = float(values[lmi.scalar]) * np.eye(M.shape[1]) - 0.5 * (Q + Q.conj().T)
                comp += abs(inner(np.asarray(Zd), S))

    return KKTReport(tuple(res), tuple(lmi_eigs), blk_eigs, bounds, comp)
