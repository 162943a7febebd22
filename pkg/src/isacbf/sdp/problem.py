"""Solver-neutral conic problem over Hermitian (or real symmetric) PSD blocks.

A problem has matrix variables (blocks), scalar variables with optional
lower bounds, a linear objective and linear constraints using the real
trace inner product ``<A, X> = Re tr(A X)``, plus LMIs of the form
``x * I - M^H X M >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

Coefficient = Union[np.ndarray, float]

SENSES = ("<=", ">=", "==")


class ProblemError(ValueError):
    """Malformed conic problem (dimensions, names, senses)."""


@dataclass(frozen=True)
class Block:
    name: str
    dim: int
    field: str = "complex"  # "complex" (Hermitian) or "real" (symmetric)

    def __post_init__(self):
        if self.field not in ("complex", "real"):
            raise ProblemError(f"block {self.name}: field must be 'complex' or 'real'")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ProblemError(f"block {self.name}: dimension must be a positive integer")


@dataclass(frozen=True)
class Scalar:
    name: str
    lower: float | None = 0.0  # None means free


@dataclass(frozen=True)
class LinearConstraint:
    terms: Mapping[str, Coefficient]
    sense: str
    rhs: float
    label: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ProblemError(f"constraint {self.label!r}: bad sense {self.sense!r}")


@dataclass(frozen=True)
class LMIConstraint:
    """``scalar * I_m - M^H X_block M`` must be PSD; ``M`` is dim x m."""

    scalar: str
    block: str
    M: np.ndarray
    label: str = ""


@dataclass(frozen=True)
class ConicProblem:
    blocks: tuple[Block, ...]
    scalars: tuple[Scalar, ...] = ()
    objective: Mapping[str, Coefficient] = field(default_factory=dict)
    constraints: tuple[LinearConstraint, ...] = ()
    lmis: tuple[LMIConstraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "scalars", tuple(self.scalars))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "lmis", tuple(self.lmis))
        self.validate()

    # -- lookups -------------------------------------------------------------

    @property
    def block_map(self) -> dict[str, Block]:
        return {b.name: b for b in self.blocks}

    @property
    def scalar_map(self) -> dict[str, Scalar]:
        return {s.name: s for s in self.scalars}

    def validate(self) -> None:
        if not self.blocks and not self.scalars:
            raise ProblemError("problem has no variables")
        names = [b.name for b in self.blocks] + [s.name for s in self.scalars]
        if len(set(names)) != len(names):
            raise ProblemError("duplicate variable names")
        self._check_terms(self.objective, "objective")
        for i, c in enumerate(self.constraints):
            self._check_terms(c.terms, c.label or f"constraint {i}")
        bm, sm = self.block_map, self.scalar_map
        for lmi in self.lmis:
            if lmi.block not in bm or lmi.scalar not in sm:
                raise ProblemError(f"LMI {lmi.label!r} references unknown variables")
            M = np.asarray(lmi.M)
            if M.ndim != 2 or M.shape[0] != bm[lmi.block].dim:
                raise ProblemError(f"LMI {lmi.label!r}: M must be {bm[lmi.block].dim} x m")
            if bm[lmi.block].field == "real" and np.iscomplexobj(M) and np.any(M.imag):
                raise ProblemError(f"LMI {lmi.label!r}: complex M on a real block")

    def _check_terms(self, terms: Mapping[str, Coefficient], where: str) -> None:
        bm, sm = self.block_map, self.scalar_map
        for name, coef in terms.items():
            if name in bm:
                A = np.asarray(coef)
                n = bm[name].dim
                if A.shape != (n, n):
                    raise ProblemError(f"{where}: coefficient of {name} must be {n}x{n}")
                scale = max(1.0, float(np.max(np.abs(A))))
                if np.max(np.abs(A - A.conj().T)) > 1e-12 * scale:
                    raise ProblemError(f"{where}: coefficient of {name} is not Hermitian")
                if bm[name].field == "real" and np.iscomplexobj(A) and np.any(A.imag):
                    raise ProblemError(f"{where}: complex coefficient on real block {name}")
            elif name in sm:
                if not np.isscalar(coef) and np.asarray(coef).size != 1:
                    raise ProblemError(f"{where}: scalar coefficient of {name} must be a number")
            else:
                raise ProblemError(f"{where}: unknown variable {name!r}")

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, terms: Mapping[str, Coefficient], values: Mapping[str, Coefficient]) -> float:
        """Linear functional ``sum <A_b, X_b> + sum a_s x_s`` at ``values``."""
        total = 0.0
        sm = self.scalar_map
        for name, coef in terms.items():
            if name in sm:
                total += float(np.real(coef)) * float(values[name])
            else:
                total += inner(np.asarray(coef), np.asarray(values[name]))
        return total

    def objective_value(self, values: Mapping[str, Coefficient]) -> float:
        return self.evaluate(self.objective, values)


def inner(A: np.ndarray, X: np.ndarray) -> float:
    """Real trace inner product Re tr(A^H X)."""
    return float(np.real(np.vdot(A, X)))


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


# -- Hermitian <-> real symmetric embedding ---------------------------------

def embed(A: np.ndarray) -> np.ndarray:
    """[[Re A, -Im A], [Im A, Re A]]; works for rectangular A as well."""
    A = np.asarray(A)
    re, im = A.real, (A.imag if np.iscomplexobj(A) else np.zeros_like(A.real))
    return np.block([[re, -im], [im, re]])


def unembed(X: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed`, averaging the redundant copies."""
    n = X.shape[0] // 2
    if X.shape != (2 * n, 2 * n):
        raise ProblemError("embedded matrix must be square with even dimension")
    re = 0.5 * (X[:n, :n] + X[n:, n:])
    im = 0.5 * (X[n:, :n] - X[:n, n:])
    return re + 1j * im


def real_embedding(problem: ConicProblem) -> ConicProblem:
    """Equivalent problem over real symmetric blocks.

    Complex blocks of dimension n become real blocks of dimension 2n.
    Coefficients are mapped to ``embed(A) / 2`` so that every objective and
    constraint value is preserved, and LMI panels ``M`` map to ``embed(M)``.
    """
    bm = problem.block_map
    cplx = {b.name for b in problem.blocks if b.field == "complex"}

    def conv(terms):
        out = {}
        for name, coef in terms.items():
            if name in cplx:
                out[name] = 0.5 * embed(np.asarray(coef))
            elif name in bm:
                out[name] = np.real(np.asarray(coef)).astype(float)
            else:
                out[name] = float(np.real(coef))
        return out

    blocks = [Block(b.name, 2 * b.dim if b.name in cplx else b.dim, "real") for b in problem.blocks]
    cons = [LinearConstraint(conv(c.terms), c.sense, c.rhs, c.label) for c in problem.constraints]
    lmis = [
        LMIConstraint(l.scalar, l.block,
                      embed(l.M) if l.block in cplx else np.real(np.asarray(l.M)).astype(float),
                      l.label)
        for l in problem.lmis
    ]
    return ConicProblem(blocks, problem.scalars, conv(problem.objective), cons, lmis)


def embedded_values(problem: ConicProblem, values: Mapping[str, Coefficient]) -> dict:
    """Map variable values of ``problem`` into its real embedding."""
    out = {}
    bm = problem.block_map
    for name, v in values.items():
        if name in bm and bm[name].field == "complex":
            out[name] = embed(np.asarray(v))
        else:
            out[name] = v
    return out


def restore_values(problem: ConicProblem, values: Mapping[str, Coefficient]) -> dict:
    """Inverse of :func:`embedded_values` (averaging the duplicated parts)."""
    out = {}
    bm = problem.block_map
    for name, v in values.items():
        if name in bm and bm[name].field == "complex":
            out[name] = unembed(np.asarray(v))
        else:
            out[name] = v
    return out


# -- solver I/O types --------------------------------------------------------

STATUSES = ("optimal", "infeasible", "unbounded", "max_iterations", "numerical_failure")


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 200
    backend: str = "ipm"
    verbose: bool = False

    def __post_init__(self):
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise ProblemError("solver tolerances must be positive")
        if self.max_iterations < 1:
            raise ProblemError("max_iterations must be >= 1")


@dataclass(frozen=True)
class SolverReport:
    status: str
    iterations: int
    duality_gap: float
    primal_residual: float
    dual_residual: float
    wall_time: float
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status, "iterations": self.iterations,
            "duality_gap": self.duality_gap, "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual, "wall_time": self.wall_time,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d) -> "SolverReport":
        return cls(**d)


@dataclass(frozen=True)
class ConicSolution:
    """Primal values per variable, objective, and optional dual information.

    ``duals`` maps constraint labels (or indices) to multipliers, and
    ``block_duals`` holds the dual slack matrix of every block; both are used
    by :func:`isacbf.sdp.check_kkt` for the complementarity measure.
    """

    blocks: Mapping[str, np.ndarray]
    scalars: Mapping[str, float]
    objective: float
    dual_objective: float | None = None
    duals: Sequence[float] | None = None
    lmi_duals: Sequence[np.ndarray] | None = None
    block_duals: Mapping[str, np.ndarray] | None = None

    def values(self) -> dict:
        d = dict(self.blocks)
        d.update(self.scalars)
        return d
