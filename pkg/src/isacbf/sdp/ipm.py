"""Dense primal-dual interior-point method for real standard-form SDPs.

Infeasible-start path following with the HKM search direction and a
Mehrotra predictor-corrector. Primal/dual infeasibility is detected from
approximate Farkas certificates built from diverging iterates. Problem data
are first scaled so that ||b|| and ||C|| are at most one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lowering import StandardForm

log = logging.getLogger(__name__)

INFEAS_TOL = 1e-8
MAX_NORM = 1e14


@dataclass
class IPMResult:
    status: str
    iterations: int
    X: list
    x: np.ndarray
    y: np.ndarray
    Z: list
    z: np.ndarray
    pobj: float
    dobj: float
    relgap: float
    pinf: float
    dinf: float
    message: str = ""


def _sym(A):
    return 0.5 * (A + A.T)


def _max_step_psd(X, dX):
    """Largest alpha with X + alpha dX PSD (inf if unbounded)."""
    if X.shape[0] == 0:
        return np.inf
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _Operator:
    """Block-sparse linear map A and its adjoint."""

    def __init__(self, sf: StandardForm):
        self.sf = sf
        self.m = sf.num_rows
        self.flat = [A.reshape(A.shape[0], -1) for A in sf.sdp_A]

    def apply(self, Xs, x):
        out = np.zeros(self.m)
        for rows, F, X in zip(self.sf.sdp_rows, self.flat, Xs):
            if rows.size:
                out[rows] += F @ X.ravel()
        if self.sf.lp_dim:
            out += self.sf.lp_A @ x
        return out

    def adjoint(self, y):
        mats = []
        for rows, F, n in zip(self.sf.sdp_rows, self.flat, self.sf.sdp_dims):
            if rows.size:
                mats.append((F.T @ y[rows]).reshape(n, n))
            else:
                mats.append(np.zeros((n, n)))
        vec = self.sf.lp_A.T @ y if self.sf.lp_dim else np.zeros(0)
        return mats, vec


def _initial_point(sf: StandardForm, b, C, c):
    Xs, Zs = [], []
    for rows, A, n, Cj in zip(sf.sdp_rows, sf.sdp_A, sf.sdp_dims, C):
        normA = np.sqrt((A.reshape(A.shape[0], -1) ** 2).sum(axis=1)) if rows.size else np.zeros(0)
        if rows.size:
            xi = max(10.0, np.sqrt(n), n * float(np.max((1 + np.abs(b[rows])) / (1 + normA))))
            eta = max(10.0, np.sqrt(n), float(normA.max()), float(np.linalg.norm(Cj)))
        else:
            xi = max(10.0, np.sqrt(n))
            eta = max(10.0, np.sqrt(n), float(np.linalg.norm(Cj)))
        Xs.append(xi * np.eye(n))
        Zs.append(eta * np.eye(n))
    p = sf.lp_dim
    if p:
        normA = np.sqrt((sf.lp_A ** 2).sum(axis=0))
        xi = max(10.0, np.sqrt(p), np.sqrt(p) * float(np.max((1 + np.max(np.abs(b), initial=0)) / (1 + normA))))
        eta = max(10.0, np.sqrt(p), float(normA.max(initial=0)), float(np.linalg.norm(c)))
        x = np.full(p, xi)
        z = np.full(p, eta)
    else:
        x = z = np.zeros(0)
    return Xs, x, np.zeros(sf.num_rows), Zs, z


def _inner(As, a, Bs, b_):
    return sum(float(np.vdot(A, B)) for A, B in zip(As, Bs)) + float(a @ b_)


def _chol_solve_factory(M):
    n = M.shape[0]
    if n == 0:
        return lambda r: r
    M = _sym(M)
    shift = 0.0
    scale = max(1e-300, float(np.max(np.abs(np.diag(M)))))
    for _ in range(8):
        try:
            cf = sla.cho_factor(M + shift * np.eye(n), lower=True, check_finite=False)
            return lambda r, cf=cf: sla.cho_solve(cf, r, check_finite=False)
        except np.linalg.LinAlgError:
            shift = scale * 1e-14 if shift == 0 else shift * 100
    lu = sla.lu_factor(M + shift * np.eye(n), check_finite=False)
    return lambda r: sla.lu_solve(lu, r, check_finite=False)


def interior_point(sf: StandardForm, gap_tol=1e-8, feas_tol=1e-8, max_iterations=200,
                   verbose=False) -> IPMResult:
    op = _Operator(sf)
    b_raw = sf.b
    C_raw = sf.sdp_C
    c_raw = sf.lp_c
    normb_raw = float(np.linalg.norm(b_raw))
    normC_raw = float(np.sqrt(sum(float(np.sum(Cj * Cj)) for Cj in C_raw) + float(c_raw @ c_raw)))
    bs = max(1.0, normb_raw)
    cs = max(1.0, normC_raw)
    b = b_raw / bs
    C = [Cj / cs for Cj in C_raw]
    c = c_raw / cs

    Xs, x, y, Zs, z = _initial_point(sf, b, C, c)
    ntot = sum(sf.sdp_dims) + sf.lp_dim
    nblk = len(sf.sdp_dims)
    status, message = "max_iterations", ""
    best = None
    alpha_p = alpha_d = 1.0
    stall = 0
    it = 0

    def measures(Xs, x, y, Zs, z):
        Rp = b - op.apply(Xs, x)
        Aty, aty = op.adjoint(y)
        Rd = [Cj - Zj - Aj for Cj, Zj, Aj in zip(C, Zs, Aty)]
        rd = c - z - aty
        pobj = _inner(C, c, Xs, x)
        dobj = float(b @ y)
        XZ = _inner(Xs, x, Zs, z)
        P = pobj * bs * cs + sf.offset
        D = dobj * bs * cs + sf.offset
        relgap = max(abs(P - D), abs(XZ) * bs * cs) / (1.0 + abs(P) + abs(D))
        pinf = float(np.linalg.norm(Rp)) * bs / (1.0 + normb_raw)
        dnorm = np.sqrt(sum(float(np.sum(R * R)) for R in Rd) + float(rd @ rd))
        dinf = float(dnorm) * cs / (1.0 + normC_raw)
        return Rp, Rd, rd, pobj, dobj, XZ, P, D, relgap, pinf, dinf

    for it in range(max_iterations + 1):
        Rp, Rd, rd, pobj, dobj, XZ, P, D, relgap, pinf, dinf = measures(Xs, x, y, Zs, z)
        if verbose:
            log.info("it %3d  P=% .9e  D=% .9e  gap=%.2e  pinf=%.2e  dinf=%.2e  ap=%.2f ad=%.2f",
                     it, P, D, relgap, pinf, dinf, alpha_p, alpha_d)
        score = max(relgap, pinf, dinf)
        if best is None or score < best[0]:
            best = (score, it, [X.copy() for X in Xs], x.copy(), y.copy(), [Z.copy() for Z in Zs], z.copy())
        if relgap <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            status = "optimal"
            break
        # Farkas-type certificates from diverging iterates
        if dobj > 0:
            Aty, aty = op.adjoint(y)
            cert = np.sqrt(sum(float(np.sum((A + Z) ** 2)) for A, Z in zip(Aty, Zs))
                           + float(np.sum((aty + z) ** 2))) / dobj
            if cert < INFEAS_TOL and pinf > feas_tol:
                status, message = "infeasible", f"primal infeasibility certificate, residual {cert:.2e}"
                break
        if pobj < 0:
            cert = float(np.linalg.norm(op.apply(Xs, x))) / -pobj
            if cert < INFEAS_TOL and dinf > feas_tol:
                status, message = "unbounded", f"dual infeasibility certificate, residual {cert:.2e}"
                break
        if it == max_iterations:
            status = "max_iterations"
            break
        big = max([float(np.abs(X).max(initial=0)) for X in Xs] + [float(np.abs(x).max(initial=0)),
                  float(np.abs(y).max(initial=0))])
        if not np.isfinite(big) or big > MAX_NORM:
            status, message = "numerical_failure", "iterates diverged without a certificate"
            break

        mu = XZ / ntot
        # Schur complement M_ij = <A_i, X A_j Z^-1>
        Zinv = []
        M = np.zeros((sf.num_rows, sf.num_rows))
        try:
            for j in range(nblk):
                n = sf.sdp_dims[j]
                cf = sla.cho_factor(Zs[j], lower=True, check_finite=False)
                Zi = _sym(sla.cho_solve(cf, np.eye(n), check_finite=False))
                Zinv.append(Zi)
                rows = sf.sdp_rows[j]
                if rows.size == 0:
                    continue
                A = sf.sdp_A[j]
                mb = rows.size
                XA = (Xs[j] @ A.transpose(1, 0, 2).reshape(n, mb * n)).reshape(n, mb, n).transpose(1, 0, 2)
                T = (XA.reshape(mb * n, n) @ Zi).reshape(mb, n * n)
                M[np.ix_(rows, rows)] += T @ op.flat[j].T
        except np.linalg.LinAlgError:
            status, message = "numerical_failure", "dual slack lost definiteness"
            break
        if sf.lp_dim:
            d = x / z
            M += (sf.lp_A * d) @ sf.lp_A.T
        solve = _chol_solve_factory(M)

        XRdZ = [Xs[j] @ Rd[j] @ Zinv[j] for j in range(nblk)]
        xrdz = x * rd / z if sf.lp_dim else x

        def direction(G, g):
            rhs = Rp - op.apply(G, g) + op.apply(XRdZ, xrdz)
            dy = solve(rhs)
            Aty, aty = op.adjoint(dy)
            dZ = [Rd[j] - Aty[j] for j in range(nblk)]
            dz = rd - aty
            dX = [_sym(G[j] - Xs[j] @ dZ[j] @ Zinv[j]) for j in range(nblk)]
            dx = g - x * dz / z if sf.lp_dim else g
            return dX, dx, dy, dZ, dz

        def steps(dX, dx, dZ, dz):
            ap = min([_max_step_psd(Xs[j], dX[j]) for j in range(nblk)] + [_max_step_lp(x, dx)])
            ad = min([_max_step_psd(Zs[j], dZ[j]) for j in range(nblk)] + [_max_step_lp(z, dz)])
            return ap, ad

        # predictor
        G = [-X for X in Xs]
        g = -x
        dX, dx, dy, dZ, dz = direction(G, g)
        ap, ad = steps(dX, dx, dZ, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        new_gap = _inner([X + ap * D_ for X, D_ in zip(Xs, dX)], x + ap * dx,
                         [Z + ad * D_ for Z, D_ in zip(Zs, dZ)], z + ad * dz)
        expon = max(1.0, 3.0 * min(ap, ad) ** 2)
        sigma = min(1.0, max(0.0, new_gap / XZ) ** expon) if XZ > 0 else 0.0

        # corrector
        G = [(sigma * mu * Zinv[j] - dX[j] @ dZ[j] @ Zinv[j]) - Xs[j] for j in range(nblk)]
        g = (sigma * mu - dx * dz) / z - x if sf.lp_dim else x
        dX, dx, dy, dZ, dz = direction(G, g)
        ap, ad = steps(dX, dx, dZ, dz)
        gamma = 0.9 + 0.09 * min(alpha_p, alpha_d)
        alpha_p = min(1.0, gamma * ap)
        alpha_d = min(1.0, gamma * ad)

        Xs = [_sym(X + alpha_p * D_) for X, D_ in zip(Xs, dX)]
        x = x + alpha_p * dx
        y = y + alpha_d * dy
        Zs = [_sym(Z + alpha_d * D_) for Z, D_ in zip(Zs, dZ)]
        z = z + alpha_d * dz

        if max(alpha_p, alpha_d) < 1e-8:
            stall += 1
            if stall >= 3:
                status, message = "numerical_failure", "step length collapsed"
                break
        else:
            stall = 0

    if status in ("numerical_failure", "max_iterations") and best is not None:
        _, _, Xs, x, y, Zs, z = best
        Rp, Rd, rd, pobj, dobj, XZ, P, D, relgap, pinf, dinf = measures(Xs, x, y, Zs, z)

    # undo the b/C scaling
    Xs = [X * bs for X in Xs]
    x = x * bs
    y = y * cs
    Zs = [Z * cs for Z in Zs]
    z = z * cs
    return IPMResult(status, it, Xs, x, y, Zs, z, P, D, relgap, pinf, dinf, message)
