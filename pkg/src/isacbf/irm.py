"""Iterative rank minimisation.

Starting from the relaxed optimum, repeatedly solve the rank-penalised
problem with eigenvector panels taken from the current iterate and a
geometrically growing weight on the relaxation scalar ``r``, until ``r`` is
negligible relative to the dominant eigenvalues. Rank-one beamformers are
then read off the dominant eigenpairs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .formulation import P3Spec, RELAX_SCALAR, build_p3, build_p4, extract_solution
from .metrics import BeamformerSet, format_number, total_power
from .scene import Scenario
from .sdp import SolverOptions, SolverReport, solve


class RankOneError(ValueError):
    """A covariance is not (numerically) rank one."""


@dataclass(frozen=True)
class IRMParams:
    """
    Parameters
    ----------
    initial_weight : float
        Weight on ``r`` in the first rank-penalised solve.
    step : float
        Factor applied to the weight after every iteration, > 1.
    rank_threshold : float
        Stop once ``(r / lambda1_max)**2`` (``stopping="relative"``) or
        ``r**2`` (``stopping="absolute"``) is at most this value.
    max_iterations : int
    rank_one_tol : float
        Bound on ``lambda2 / lambda1`` for a covariance to count as rank one.
    """

    initial_weight: float = 1.0
    step: float = 1.5
    rank_threshold: float = 1e-7
    max_iterations: int = 50
    rank_one_tol: float = 1e-6
    stopping: str = "relative"

    def __post_init__(self):
        if not self.step > 1:
            raise ValueError("step must exceed 1")
        if not (self.rank_threshold > 0 and self.initial_weight > 0 and self.rank_one_tol > 0):
            raise ValueError("weights and thresholds must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stopping not in ("relative", "absolute"):
            raise ValueError("stopping must be 'relative' or 'absolute'")


@dataclass
class IRMState:
    """Snapshot after iteration ``iteration`` solved with ``weight``; ``panels``
    are the eigenvector panels that iteration used."""

    iteration: int
    weight: float
    covariances: tuple
    radar_covariance: np.ndarray
    r: float
    panels: tuple
    power_history: list = field(default_factory=list)


@dataclass
class IRMResult:
    """Outcome of :func:`run_irm`.

    ``status`` is ``"converged"``, ``"max_iterations"``, ``"infeasible"``
    or a solver failure status. ``beamformers`` carries extracted vectors
    only when converged.
    """

    status: str
    beamformers: BeamformerSet | None
    sdr_beamformers: BeamformerSet | None
    iterations: int
    final_r: float
    sdr_power: float
    final_power: float
    reports: list
    trace: list  # rows (iter, phi, r, power_mW)
    rank_one_ratios: list
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# -- eigen-tools ---------------------------------------------------------------

def _eigh(W: np.ndarray):
    W = np.asarray(W, dtype=complex)
    return np.linalg.eigh(0.5 * (W + W.conj().T))


def null_eigvecs(W: np.ndarray) -> np.ndarray:
    """Orthonormal eigenvectors of the ``N - 1`` smallest eigenvalues, ascending."""
    _, vecs = _eigh(W)
    return vecs[:, :-1]


def rank_one_ratio(W: np.ndarray) -> float:
    """``lambda2 / lambda1`` of a PSD matrix (0 for exact rank one)."""
    vals, _ = _eigh(W)
    top = vals[-1]
    if not top > 0:
        raise RankOneError("rank-one ratio undefined for a zero (or negative) matrix")
    return float(min(1.0, max(0.0, vals[-2] / top)))


def extract_beamformers(covariances, rank_one_tol: float = 1e-6) -> list[np.ndarray]:
    """``w = sqrt(lambda1) v1`` with the largest-magnitude entry real and >= 0."""
    out = []
    for k, W in enumerate(covariances):
        ratio = rank_one_ratio(W)
        if ratio > rank_one_tol:
            raise RankOneError(f"W_{k + 1} has lambda2/lambda1 = {ratio:.3e} > {rank_one_tol:g}")
        vals, vecs = _eigh(W)
        v = vecs[:, -1]
        i = int(np.argmax(np.abs(v)))
        v = v * (abs(v[i]) / v[i])
        w = math.sqrt(vals[-1]) * v
        w[i] = w[i].real
        out.append(w)
    return out


# -- the iteration ---------------------------------------------------------------

def _stop_value(r: float, covariances, stopping: str) -> float:
    if stopping == "absolute":
        return r * r
    lam = max(float(_eigh(W)[0][-1]) for W in covariances)
    return (r / lam) ** 2 if lam > 0 else math.inf


def _ratios(covariances) -> list[float]:
    return [rank_one_ratio(W) for W in covariances]


def tail_residual(W: np.ndarray) -> float:
    """``||W - lambda1 v1 v1^H||_F / ||W||_F``, the best rank-one fit error."""
    vals, _ = _eigh(W)
    total = float(np.sqrt(np.sum(vals ** 2)))
    return float(np.sqrt(np.sum(vals[:-1] ** 2))) / total if total > 0 else 0.0


def _all_rank_one(covariances, tol: float) -> bool:
    return all(rank_one_ratio(W) <= tol and tail_residual(W) <= tol for W in covariances)


def run_irm(scenario: Scenario | P3Spec, params: IRMParams | None = None,
            options: SolverOptions | None = None, callback=None) -> IRMResult:
    """Relaxed solve followed by rank-penalised refinement.

    Stops when the normalised ``r`` meets ``rank_threshold`` and every
    covariance passes ``rank_one_tol`` both as ``lambda2 / lambda1`` and as
    the relative Frobenius error of its best rank-one fit. The latter guards
    against stopping on a small ``r`` whose panels came from a non-rank-one
    iterate.

    ``callback``, if given, receives an :class:`IRMState` after every
    rank-penalised solve.
    """
    params = params or IRMParams()
    spec = scenario if isinstance(scenario, P3Spec) else P3Spec.from_scenario(scenario)
    K = spec.num_users
    reports: list[SolverReport] = []

    sol, rep = solve(build_p3(spec), options)
    reports.append(rep)
    if rep.status != "optimal":
        return IRMResult(rep.status, None, None, 0, math.nan, math.nan, math.nan, reports, [], [],
                         f"relaxed problem: {rep.message or rep.status}")
    sdr = extract_solution(sol, K)
    sdr_power = total_power(sdr)
    current = sdr
    ratios = _ratios(current.covariances)
    r_needed = max(float(_eigh(W)[0][-2]) for W in current.covariances)
    trace = [(0, 0.0, r_needed, sdr_power)]

    if _all_rank_one(current.covariances, params.rank_one_tol):
        return _finish("converged", current, sdr, 0, 0.0, sdr_power, reports, trace, ratios, params)

    weight = params.initial_weight
    r = math.nan
    for j in range(1, params.max_iterations + 1):
        panels = [null_eigvecs(W) for W in current.covariances]
        sol, rep = solve(build_p4(spec, panels, weight), options)
        reports.append(rep)
        if rep.status != "optimal":
            return _finish(rep.status, current, sdr, j, r, sdr_power, reports, trace, ratios, params,
                           f"rank-penalised problem at iteration {j}: {rep.message or rep.status}")
        current = extract_solution(sol, K)
        r = float(sol.scalars[RELAX_SCALAR])
        trace.append((j, weight, r, total_power(current)))
        ratios = _ratios(current.covariances)
        if callback is not None:
            callback(IRMState(j, weight, current.covariances, current.radar_covariance, r,
                              tuple(panels), [row[3] for row in trace]))
        weight *= params.step
        if (_stop_value(r, current.covariances, params.stopping) <= params.rank_threshold
                and _all_rank_one(current.covariances, params.rank_one_tol)):
            return _finish("converged", current, sdr, j, r, sdr_power, reports, trace, ratios, params)
    return _finish("max_iterations", current, sdr, params.max_iterations, r, sdr_power, reports,
                   trace, ratios, params, "rank penalty did not vanish within max_iterations")


def _finish(status, current, sdr, iters, r, sdr_power, reports, trace, ratios, params, message=""):
    bf = current
    if status == "converged":
        vecs = extract_beamformers(current.covariances, params.rank_one_tol)
        bf = BeamformerSet(current.covariances, current.radar_covariance, tuple(vecs),
                           rank_one_tol=params.rank_one_tol)
    return IRMResult(status, bf, sdr, iters, r, sdr_power, total_power(current), reports, trace,
                     list(ratios), message)


def trace_csv(result: IRMResult) -> str:
    """Iteration trace as CSV ``iter,phi,r,power_mW`` (row 0 is the relaxed solve)."""
    buf = io.StringIO()
    buf.write("iter,phi,r,power_mW\n")
    for it, phi, r, p in result.trace:
        buf.write(f"{it},{format_number(phi)},{format_number(r)},{format_number(p)}\n")
    return buf.getvalue()
