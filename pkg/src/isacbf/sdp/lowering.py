"""Lowering of a :class:`ConicProblem` to the canonical real standard form

    minimize   sum_b <C_b, X_b> + c^T x
    subject to sum_b <A_ib, X_b> + a_i^T x = b_i,   X_b PSD,  x >= 0

consumed by the interior-point backend.

Steps: LMIs become auxiliary PSD blocks linked by equalities (in the
original field, so Hermitian LMIs need only m^2 links), complex blocks are
embedded into real symmetric ones, scalars are shifted or split into
nonnegative parts, inequalities get nonnegative slacks, and every row is
normalized to unit Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import (
    Block,
    ConicProblem,
    LinearConstraint,
    embed,
    real_embedding,
)


def hermitian_basis(m: int, complex_field: bool) -> list[np.ndarray]:
    """Spanning set of the m x m Hermitian (or real symmetric) matrices."""
    basis = []
    dtype = complex if complex_field else float
    for i in range(m):
        E = np.zeros((m, m), dtype=dtype)
        E[i, i] = 1.0
        basis.append(E)
    for i in range(m):
        for j in range(i + 1, m):
            E = np.zeros((m, m), dtype=dtype)
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
            if complex_field:
                F = np.zeros((m, m), dtype=complex)
                F[i, j], F[j, i] = 1j, -1j
                basis.append(F)
    return basis


def lower_lmis(problem: ConicProblem) -> tuple[ConicProblem, list[str]]:
    """Replace each LMI ``x I - M^H X M >= 0`` by a PSD block Z and the
    equalities ``<E, Z> + <M E M^H, X> - tr(E) x = 0`` over a Hermitian basis E."""
    if not problem.lmis:
        return problem, []
    bm = problem.block_map
    taken = {b.name for b in problem.blocks} | {s.name for s in problem.scalars}
    blocks = list(problem.blocks)
    cons = list(problem.constraints)
    aux_names = []
    for k, lmi in enumerate(problem.lmis):
        X = bm[lmi.block]
        M = np.asarray(lmi.M)
        m = M.shape[1]
        cplx = X.field == "complex"
        name = f"__lmi{k}"
        while name in taken:
            name = "_" + name
        taken.add(name)
        aux_names.append(name)
        blocks.append(Block(name, m, X.field))
        label = lmi.label or f"lmi{k}"
        for E in hermitian_basis(m, cplx):
            G = M @ E @ M.conj().T
            G = 0.5 * (G + G.conj().T)
            if not cplx:
                G = G.real
            cons.append(LinearConstraint(
                {name: E, lmi.block: G, lmi.scalar: -float(np.trace(E).real)},
                "==", 0.0, f"{label}/link",
            ))
    return ConicProblem(blocks, problem.scalars, problem.objective, cons, ()), aux_names


@dataclass
class StandardForm:
    """Real standard-form data plus the bookkeeping needed to map back."""

    sdp_dims: list[int]
    sdp_rows: list[np.ndarray]
    sdp_A: list[np.ndarray]
    sdp_C: list[np.ndarray]
    lp_A: np.ndarray
    lp_c: np.ndarray
    b: np.ndarray
    offset: float
    row_scale: np.ndarray
    # recovery
    block_names: list[str]
    complex_blocks: set[str]
    scalar_cols: dict[str, tuple]
    constraint_rows: list[int | None]
    lmi_blocks: list[str]
    infeasible_rows: list[int] = field(default_factory=list)

    @property
    def num_rows(self) -> int:
        return self.b.size

    @property
    def lp_dim(self) -> int:
        return self.lp_c.size

    def primal_residual(self, Xs, x) -> np.ndarray:
        r = self.b.copy()
        for rows, A, X in zip(self.sdp_rows, self.sdp_A, Xs):
            r[rows] -= A.reshape(len(rows), -1) @ X.ravel()
        if self.lp_dim:
            r -= self.lp_A @ x
        return r


def to_standard_form(problem: ConicProblem) -> StandardForm:
    lowered, aux = lower_lmis(problem)
    complex_blocks = {b.name for b in lowered.blocks if b.field == "complex"}
    rp = real_embedding(lowered)
    names = [b.name for b in rp.blocks]
    index = {n: i for i, n in enumerate(names)}
    dims = [b.dim for b in rp.blocks]

    # LP columns: scalars first, then inequality slacks
    lp_cols = 0
    scalar_cols: dict[str, tuple] = {}
    for s in rp.scalars:
        if s.lower is None:
            scalar_cols[s.name] = ("split", lp_cols, lp_cols + 1)
            lp_cols += 2
        else:
            scalar_cols[s.name] = ("shift", lp_cols, float(s.lower))
            lp_cols += 1
    n_slack = sum(1 for c in rp.constraints if c.sense != "==")
    p = lp_cols + n_slack
    m = len(rp.constraints)

    per_block_rows: list[list[int]] = [[] for _ in names]
    per_block_mats: list[list[np.ndarray]] = [[] for _ in names]
    lp_A = np.zeros((m, p))
    b = np.zeros(m)

    def scalar_coeffs(terms, row_vec):
        shift = 0.0
        for name, coef in terms.items():
            if name in scalar_cols:
                kind, i0, extra = scalar_cols[name]
                c = float(coef)
                if kind == "split":
                    row_vec[i0] += c
                    row_vec[extra] -= c
                else:
                    row_vec[i0] += c
                    shift += c * extra
        return shift

    slack = lp_cols
    for i, con in enumerate(rp.constraints):
        for name, coef in con.terms.items():
            if name in index:
                j = index[name]
                per_block_rows[j].append(i)
                per_block_mats[j].append(np.asarray(coef, dtype=float))
        shift = scalar_coeffs(con.terms, lp_A[i])
        b[i] = con.rhs - shift
        if con.sense == ">=":
            lp_A[i, slack] = -1.0
            slack += 1
        elif con.sense == "<=":
            lp_A[i, slack] = 1.0
            slack += 1

    # objective
    C = [np.zeros((n, n)) for n in dims]
    lp_c = np.zeros(p)
    offset = 0.0
    for name, coef in rp.objective.items():
        if name in index:
            C[index[name]] = C[index[name]] + np.asarray(coef, dtype=float)
        else:
            kind, i0, extra = scalar_cols[name]
            c = float(coef)
            if kind == "split":
                lp_c[i0] += c
                lp_c[extra] -= c
            else:
                lp_c[i0] += c
                offset += c * extra

    # row norms; a block may appear twice in one row only via duplicate keys, which dicts forbid
    sq = (lp_A ** 2).sum(axis=1)
    for j in range(len(names)):
        for r, A in zip(per_block_rows[j], per_block_mats[j]):
            sq[r] += float(np.sum(A * A))
    norms = np.sqrt(sq)

    keep = norms > 0
    infeasible_rows = [int(i) for i in np.flatnonzero(~keep) if abs(b[i]) > 0]
    new_index = -np.ones(m, dtype=int)
    new_index[keep] = np.arange(int(keep.sum()))
    scale = norms[keep]

    sdp_rows, sdp_A = [], []
    for j, n in enumerate(dims):
        rows = [new_index[r] for r in per_block_rows[j] if keep[r]]
        mats = [A / norms[r] for r, A in zip(per_block_rows[j], per_block_mats[j]) if keep[r]]
        sdp_rows.append(np.array(rows, dtype=int))
        sdp_A.append(np.array(mats).reshape(len(mats), n, n) if mats else np.zeros((0, n, n)))
    lp_A = lp_A[keep] / scale[:, None]
    b = b[keep] / scale

    constraint_rows = []
    n_orig = len(problem.constraints)
    for i in range(n_orig):
        constraint_rows.append(int(new_index[i]) if keep[i] else None)

    return StandardForm(
        sdp_dims=dims, sdp_rows=sdp_rows, sdp_A=sdp_A, sdp_C=C,
        lp_A=lp_A, lp_c=lp_c, b=b, offset=offset, row_scale=scale,
        block_names=names, complex_blocks=complex_blocks, scalar_cols=scalar_cols,
        constraint_rows=constraint_rows, lmi_blocks=aux,
        infeasible_rows=infeasible_rows,
    )


__all__ = ["StandardForm", "to_standard_form", "lower_lmis", "hermitian_basis", "embed"]
