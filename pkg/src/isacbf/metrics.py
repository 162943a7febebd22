"""Evaluation of candidate beamformers: power, SINR, rate and beampatterns.

Every function here is a plain re-evaluation of the physical quantities
from the matrices; none of them depends on how a solution was obtained, so
they double as the independent verifier of solver output.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import ArrayGeometry, DesiredBeampattern, Scenario, channel_vector, steering_matrix

PSD_TOL = 1e-9
HERMITIAN_TOL = 1e-12


class BeamformerError(ValueError):
    """Matrices violate the Hermitian/PSD or rank-one consistency invariants."""


def _check_hermitian_psd(A: np.ndarray, what: str) -> None:
    scale = max(float(np.max(np.abs(A))), 1e-300)
    if np.max(np.abs(A - A.conj().T)) > HERMITIAN_TOL * scale * max(1, A.shape[0]):
        raise BeamformerError(f"{what} is not Hermitian")
    ev = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    if ev[0] < -PSD_TOL * max(ev[-1], 0.0):
        raise BeamformerError(f"{what} is not PSD (min eigenvalue {ev[0]:.3e}, max {ev[-1]:.3e})")


@dataclass(frozen=True)
class BeamformerSet:
    """Communication covariances ``W_k``, radar covariance ``R_d`` and
    optionally the rank-one vectors ``w_k`` extracted from them.

    Parameters
    ----------
    covariances : sequence of (N, N) complex arrays
    radar_covariance : (N, N) complex array
    vectors : sequence of (N,) complex arrays, optional
    rank_one_tol : float
        Relative Frobenius tolerance for ``W_k`` against ``w_k w_k^H``.
    """

    covariances: tuple[np.ndarray, ...]
    radar_covariance: np.ndarray
    vectors: tuple[np.ndarray, ...] | None = None
    rank_one_tol: float = 1e-6
    check: bool = True

    def __post_init__(self):
        W = tuple(np.asarray(w, dtype=complex) for w in self.covariances)
        R = np.asarray(self.radar_covariance, dtype=complex)
        object.__setattr__(self, "covariances", W)
        object.__setattr__(self, "radar_covariance", R)
        if self.vectors is not None:
            object.__setattr__(self, "vectors", tuple(np.asarray(v, dtype=complex) for v in self.vectors))
        if not W:
            raise BeamformerError("need at least one covariance")
        n = R.shape[0]
        for i, A in enumerate(W + (R,)):
            if A.shape != (n, n):
                raise BeamformerError("all matrices must be N x N with a common N")
        if not self.check:
            return
        for k, A in enumerate(W):
            _check_hermitian_psd(A, f"W_{k + 1}")
        _check_hermitian_psd(R, "R_d")
        if self.vectors is not None:
            if len(self.vectors) != len(W):
                raise BeamformerError("one vector per covariance is required")
            for k, (A, w) in enumerate(zip(W, self.vectors)):
                err = rank_one_residual(A, w)
                if err > self.rank_one_tol:
                    raise BeamformerError(f"W_{k + 1} differs from w w^H by {err:.2e} (relative)")

    @property
    def num_antennas(self) -> int:
        return self.radar_covariance.shape[0]

    @property
    def num_users(self) -> int:
        return len(self.covariances)

    def total_covariance(self) -> np.ndarray:
        return sum(self.covariances) + self.radar_covariance


def rank_one_residual(W: np.ndarray, w: np.ndarray) -> float:
    """``||W - w w^H||_F / ||W||_F`` (0 for the zero matrix and vector)."""
    nrm = np.linalg.norm(W)
    diff = np.linalg.norm(W - np.outer(w, w.conj()))
    if nrm == 0:
        return float(diff)
    return float(diff / nrm)


# -- power and patterns ------------------------------------------------------

def total_power(bf: BeamformerSet) -> float:
    """Sum of covariance traces, in mW."""
    return float(sum(np.trace(W).real for W in bf.covariances) + np.trace(bf.radar_covariance).real)


def _quad(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Column-wise ``a^H S a`` for the columns of ``A``."""
    return np.real(np.einsum("ij,ik,kj->j", A.conj(), S, A))


def transmit_beampattern(bf: BeamformerSet, array: ArrayGeometry, theta):
    """Transmit beampattern ``a^H (sum W_k + R_d) a``.

    Returns a float for scalar ``theta`` and an array otherwise.
    """
    scalar = np.ndim(theta) == 0
    A = steering_matrix(array, np.atleast_1d(theta))
    out = _quad(A, bf.total_covariance())
    return float(out[0]) if scalar else out


def channel_beam_gain(bf: BeamformerSet, h: np.ndarray) -> float:
    """Beam gain through a channel, ``h^H (sum W_k + R_d) h``."""
    h = np.asarray(h, dtype=complex)
    return float(np.real(h.conj() @ bf.total_covariance() @ h))


def beam_matching_error(bf: BeamformerSet, pattern: DesiredBeampattern, array: ArrayGeometry) -> float:
    """Sum of squared deviations between desired and designed levels."""
    B = transmit_beampattern(bf, array, pattern.angles)
    return float(np.sum((pattern.levels - B) ** 2))


def component_decomposition(bf: BeamformerSet, array: ArrayGeometry, grid: Sequence[float]):
    """Communication, radar and total beampattern curves over ``grid``.

    Returns
    -------
    comm, radar, total : ndarray
        ``a^H (sum W_k) a``, ``a^H R_d a`` and their sum.
    """
    A = steering_matrix(array, grid)
    comm = _quad(A, sum(bf.covariances))
    radar = _quad(A, bf.radar_covariance)
    return comm, radar, comm + radar


# -- communication -----------------------------------------------------------

def sinr(bf: BeamformerSet, k: int, scenario: Scenario, use_vectors: bool = False) -> float:
    """SINR of user ``k`` (0-based).

    With ``use_vectors`` the signal and interference terms use ``|h^H w_i|^2``
    instead of ``tr(H W_i)``.
    """
    h = channel_vector(scenario.array, scenario.users[k])
    noise = scenario.users[k].noise_power
    if use_vectors:
        if bf.vectors is None:
            raise BeamformerError("no extracted vectors on this set")
        powers = [abs(np.vdot(h, w)) ** 2 for w in bf.vectors]
    else:
        powers = [float(np.real(h.conj() @ W @ h)) for W in bf.covariances]
    radar = float(np.real(h.conj() @ bf.radar_covariance @ h))
    interference = sum(p for i, p in enumerate(powers) if i != k)
    return powers[k] / (interference + radar + noise)


def rate(gamma: float) -> float:
    """Shannon rate log2(1 + gamma) in bits/s/Hz."""
    if gamma < 0:
        raise ValueError("SINR must be nonnegative")
    return math.log2(1.0 + gamma)


# -- unit conversion and export ----------------------------------------------

def to_dbm(p_mw):
    """10 log10 of a power in mW; nonpositive values map to -inf."""
    p = np.asarray(p_mw, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0, 10.0 * np.log10(np.where(p > 0, p, 1.0)), -np.inf)
    return float(out) if out.ndim == 0 else out


def format_number(x: float) -> str:
    """Fixed 9-significant-digit CSV formatting; -inf for nonpositive dBm."""
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    if math.isnan(x):
        return "nan"
    s = format(x, ".9g")
    return "0" if s == "-0" else s


def beampattern_csv(bf: BeamformerSet, array: ArrayGeometry, grid: Sequence[float] | None = None) -> str:
    """CSV text with header ``angle_deg,total_dBm,comm_dBm,radar_dBm``."""
    from .scene import angle_grid

    grid = angle_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    comm, radar, total = component_decomposition(bf, array, grid)
    buf = io.StringIO()
    buf.write("angle_deg,total_dBm,comm_dBm,radar_dBm\n")
    for th, t, c, r in zip(grid, to_dbm(total), to_dbm(comm), to_dbm(radar)):
        buf.write(",".join(format_number(float(v)) for v in (th, t, c, r)) + "\n")
    return buf.getvalue()
