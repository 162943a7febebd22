"""Semidefinite relaxation of the green beamforming problem and its
rank-penalised variant used by iterative rank minimisation.

Both builders produce a solver-neutral :class:`~isacbf.sdp.ConicProblem`
whose blocks are named ``W1..WK`` (communication covariances) and ``Rd``
(radar covariance). The rank-penalised problem adds a scalar ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import BeamformerSet
from .scene import Scenario, build_desired_pattern, channel_vector, steering_matrix
from .sdp import Block, ConicProblem, ConicSolution, LinearConstraint, LMIConstraint, Scalar

RADAR_BLOCK = "Rd"
RELAX_SCALAR = "r"


class FormulationError(ValueError):
    """Inconsistent inputs for a problem builder."""


def user_block(k: int) -> str:
    return f"W{k + 1}"


@dataclass(frozen=True)
class P3Spec:
    """Data of the relaxed problem.

    Attributes
    ----------
    user_grams : tuple of (N, N) arrays
        ``H_k = h_k h_k^H``.
    noise : tuple of float
        Noise powers in mW.
    sinr_threshold : float
        ``2**R_min - 1``.
    pattern_grams : tuple of (N, N) arrays
        ``a(theta_m) a(theta_m)^H`` (scaled by the target pathloss in
        channel-inclusive mode).
    lower, upper : ndarray
        Admissible band for each pattern sample.
    include_radar : bool
        Whether the radar covariance is a decision variable (else fixed to 0).
    """

    user_grams: tuple
    noise: tuple
    sinr_threshold: float
    pattern_grams: tuple
    lower: np.ndarray
    upper: np.ndarray
    angles: np.ndarray
    include_radar: bool = True

    def __post_init__(self):
        if not self.sinr_threshold > 0:
            raise FormulationError("SINR threshold must be positive")
        if len(self.pattern_grams) == 0:
            raise FormulationError("pattern has no samples")
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise FormulationError("pattern lower bound exceeds upper bound")

    @property
    def num_antennas(self) -> int:
        return self.user_grams[0].shape[0]

    @property
    def num_users(self) -> int:
        return len(self.user_grams)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "P3Spec":
        pattern = build_desired_pattern(scenario)
        hs = [channel_vector(scenario.array, u) for u in scenario.users]
        A = steering_matrix(scenario.array, pattern.angles)
        lvl, tol = pattern.levels, pattern.tolerances
        if scenario.pattern_metric == "channel":
            gains = np.array([s.pathloss for s in pattern.samples])
        else:
            gains = np.ones(len(pattern))
        grams = tuple(g * np.outer(A[:, m], A[:, m].conj()) for m, g in enumerate(gains))
        return cls(
            user_grams=tuple(np.outer(h, h.conj()) for h in hs),
            noise=tuple(u.noise_power for u in scenario.users),
            sinr_threshold=scenario.sinr_threshold,
            pattern_grams=grams,
            lower=gains * (lvl - tol),
            upper=gains * (lvl + tol),
            angles=pattern.angles,
            include_radar=scenario.include_radar_covariance,
        )


def _p3_parts(spec: P3Spec):
    n, K = spec.num_antennas, spec.num_users
    names = [user_block(k) for k in range(K)]
    if spec.include_radar:
        names.append(RADAR_BLOCK)
    blocks = [Block(nm, n) for nm in names]
    eye = np.eye(n)
    objective = {nm: eye for nm in names}
    rbar = spec.sinr_threshold
    cons = []
    for k, H in enumerate(spec.user_grams):
        terms = {}
        for nm in names:
            terms[nm] = H if nm == user_block(k) else -rbar * H
        cons.append(LinearConstraint(terms, ">=", rbar * spec.noise[k], f"sinr[{k + 1}]"))
    for m, G in enumerate(spec.pattern_grams):
        terms = {nm: G for nm in names}
        lo, hi = float(spec.lower[m]), float(spec.upper[m])
        cons.append(LinearConstraint(terms, ">=", lo, f"pattern_lo[{spec.angles[m]:g}]"))
        cons.append(LinearConstraint(terms, "<=", hi, f"pattern_hi[{spec.angles[m]:g}]"))
    return blocks, objective, cons


def build_p3(scenario_or_spec) -> ConicProblem:
    """Relaxed problem: minimise total power subject to SINR and pattern bands."""
    spec = _as_spec(scenario_or_spec)
    blocks, objective, cons = _p3_parts(spec)
    return ConicProblem(blocks, (), objective, cons)


def build_p4(scenario_or_spec, panels, weight: float) -> ConicProblem:
    """Rank-penalised problem for one IRM step.

    Adds ``r >= 0`` with cost ``weight * r`` and, for every user, the LMI
    ``r I - V_k^H W_k V_k >= 0`` where ``V_k`` spans all but the dominant
    eigenvector of the previous ``W_k``.
    """
    spec = _as_spec(scenario_or_spec)
    if not weight > 0:
        raise FormulationError("IRM weight must be positive")
    if len(panels) != spec.num_users:
        raise FormulationError("one eigenvector panel per user is required")
    n = spec.num_antennas
    blocks, objective, cons = _p3_parts(spec)
    objective = dict(objective)
    objective[RELAX_SCALAR] = float(weight)
    lmis = []
    for k, V in enumerate(panels):
        V = np.asarray(V)
        if V.ndim != 2 or V.shape != (n, n - 1):
            raise FormulationError(f"panel {k + 1} must be {n} x {n - 1}, got {V.shape}")
        lmis.append(LMIConstraint(RELAX_SCALAR, user_block(k), V, f"rank[{k + 1}]"))
    return ConicProblem(blocks, (Scalar(RELAX_SCALAR, 0.0),), objective, cons, lmis)


def _as_spec(obj) -> P3Spec:
    if isinstance(obj, P3Spec):
        return obj
    if isinstance(obj, Scenario):
        return P3Spec.from_scenario(obj)
    raise FormulationError(f"expected a Scenario or P3Spec, got {type(obj).__name__}")


def extract_solution(solution: ConicSolution, num_users: int) -> BeamformerSet:
    """Hermitian-symmetrised covariances from a solver solution.

    Raises
    ------
    BeamformerError
        A block has an eigenvalue below ``-1e-9 * lambda_max``.
    """
    Ws = []
    for k in range(num_users):
        W = np.asarray(solution.blocks[user_block(k)], dtype=complex)
        Ws.append(0.5 * (W + W.conj().T))
    R = solution.blocks.get(RADAR_BLOCK)
    if R is None:
        R = np.zeros_like(Ws[0])
    R = np.asarray(R, dtype=complex)
    return BeamformerSet(tuple(Ws), 0.5 * (R + R.conj().T))
