"""Finite-difference Jacobians and spectra of iteration maps at fixed points."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import SCHEMA_VERSION
from .errors import CapabilityError, CertificateError, ConvergenceError, PreconditionError
from .problems import ManifoldClass
from .proxengine import MapKind, moreau_value

DEFAULT_CLASS_TOL = 1e-4
HESSIAN_STEP = 1e-3


def default_fd_step(x):
    return 1e-5 * max(1.0, float(np.linalg.norm(x)))


def fd_jacobian(S, x, step=None):
    """Central-difference Jacobian; column ``i`` is ``(S(x+h e_i) - S(x-h e_i)) / 2h``."""
    x = np.asarray(x, dtype=float)
    h = default_fd_step(x) if step is None else float(step)
    cols = []
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        xp, xm = x + e, x - e
        # divide by the step actually taken, which differs from 2h by rounding
        cols.append((np.asarray(S(xp)) - np.asarray(S(xm))) / (xp[i] - xm[i]))
    return np.column_stack(cols)


def kink_suspect(S, x, step, tol=1e-3):
    """True when one-sided difference quotients at ``h`` and ``2h`` disagree.

    A disagreement means ``S`` has a kink within ``2h`` of ``x`` along some
    coordinate, so a central difference there is not trustworthy.
    """
    x = np.asarray(x, dtype=float)
    s0 = np.asarray(S(x))
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        quotients = [
            (np.asarray(S(x + e)) - s0) / step,
            (np.asarray(S(x + 2 * e)) - s0) / (2 * step),
            (s0 - np.asarray(S(x - e))) / step,
            (s0 - np.asarray(S(x - 2 * e))) / (2 * step),
        ]
        ref = quotients[0]
        scale = max(1.0, float(np.max(np.abs(ref))))
        if any(np.max(np.abs(q - ref)) > tol * scale for q in quotients[1:]):
            return True
    return False


# ---------------------------------------------------------------------------
# eigenvalues: Householder-Hessenberg reduction followed by shifted QR


def hessenberg(m):
    """Upper Hessenberg matrix orthogonally similar to ``m``."""
    H = np.array(m, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        big = np.max(np.abs(x))
        if big == 0.0:
            continue
        # the reflector is scale-invariant; normalizing keeps |x|^2 out of underflow.
        # Real and imaginary parts separately: complex division by a tiny real overflows.
        x = x.real / big + 1j * (x.imag / big)
        alpha = np.linalg.norm(x)
        if x[0].imag == 0:
            phase = -1.0 if x[0].real < 0 else 1.0
        else:
            phase = np.exp(1j * np.angle(x[0]))
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _givens(a, b):
    s = max(abs(a), abs(b))
    if s == 0.0:
        return 1.0, 0.0
    a, b = a / s, b / s  # scale first so that r cannot underflow
    r = np.hypot(abs(a), abs(b))
    return a / r, b / r


def eigenvalues(m, max_sweeps=None):
    """All eigenvalues of a real square matrix (``d <= 64``) as a complex array.

    Raises
    ------
    ConvergenceError
        If the shifted QR iteration needs more than ``100 d`` sweeps.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if n > 64:
        raise PreconditionError("eigenvalues() is meant for d <= 64")
    if n == 0:
        return np.zeros(0, dtype=complex)
    scale = float(np.max(np.abs(m)))
    if scale == 0.0 or not np.isfinite(scale):
        if scale == 0.0:
            return np.zeros(n, dtype=complex)
        raise PreconditionError("matrix has non-finite entries")
    # work on m / scale: keeps tiny or huge inputs away from under/overflow
    A = m / scale
    A[np.abs(A) < np.finfo(float).tiny / np.finfo(float).eps] = 0.0
    H = hessenberg(A)
    eps = np.finfo(float).eps
    floor = eps * np.linalg.norm(H)
    budget = 100 * n if max_sweeps is None else int(max_sweeps)
    sweeps = 0
    since_deflation = 0
    out = []
    hi = n - 1
    while hi >= 0:
        if hi == 0:
            out.append(H[0, 0])
            break
        lo = 0
        for l in range(hi, 0, -1):
            # normwise test (backward stable) or the sharper relative test
            if abs(H[l, l - 1]) <= max(floor, eps * (abs(H[l, l]) + abs(H[l - 1, l - 1]))):
                H[l, l - 1] = 0.0
                lo = l
                break
        if lo == hi:
            out.append(H[hi, hi])
            hi -= 1
            since_deflation = 0
            continue
        if sweeps >= budget:
            raise ConvergenceError(f"shifted QR did not converge in {budget} sweeps")
        sweeps += 1
        since_deflation += 1
        a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
        c, d = H[hi, hi - 1], H[hi, hi]
        if since_deflation % 11 == 10:
            shift = d + 1.5 * abs(c)
        else:
            tr = a + d
            disc = np.sqrt((a - d) ** 2 / 4.0 + b * c)
            r1, r2 = tr / 2.0 + disc, tr / 2.0 - disc
            shift = r1 if abs(r1 - d) < abs(r2 - d) else r2
        blk = slice(lo, hi + 1)
        A = H[blk, blk]
        size = hi - lo + 1
        A -= shift * np.eye(size)
        rots = []
        for k in range(size - 1):
            cs, sn = _givens(A[k, k], A[k + 1, k])
            G = np.array([[np.conj(cs), np.conj(sn)], [-sn, cs]])
            A[k:k + 2, k:] = G @ A[k:k + 2, k:]
            rots.append(G)
        for k, G in enumerate(rots):
            top = min(k + 2, size - 1) + 1
            A[:top, k:k + 2] = A[:top, k:k + 2] @ G.conj().T
        A += shift * np.eye(size)
        H[blk, blk] = A
    vals = scale * np.array(out[::-1], dtype=complex)
    # real input: snap conjugate-symmetric round-off
    vals.imag[np.abs(vals.imag) <= 1e-14 * max(1.0, float(np.max(np.abs(vals))))] = 0.0
    return vals


def eigenpairs(m):
    """Eigenvalues with unit eigenvectors.

    Each vector is the right singular vector of ``m - lambda I`` for its
    smallest singular value, so its residual is as small as any unit vector's;
    unlike inverse iteration this stays well defined for defective matrices.
    """
    m = np.asarray(m, dtype=float)
    vals = eigenvalues(m)
    n = m.shape[0]
    vecs = np.empty((n, n), dtype=complex)
    for j, lam in enumerate(vals):
        _, _, vh = np.linalg.svd(m - lam * np.eye(n))
        vecs[:, j] = vh[-1].conj()
    return vals, vecs


def eigen_residuals(m, vals, vecs):
    m = np.asarray(m, dtype=float)
    return np.array([np.linalg.norm(m @ vecs[:, j] - vals[j] * vecs[:, j]) for j in range(len(vals))])


# ---------------------------------------------------------------------------
# fixed point classification


class Stability(str, enum.Enum):
    UNSTABLE = "unstable"
    NOT_UNSTABLE = "not_unstable"


@dataclass
class SpectrumReport:
    """Spectrum of the FD Jacobian of ``S`` at a fixed point.

    ``classification`` looks only at numerically real eigenvalues, matching
    the real-eigenvalue criterion of the escape theorems; the magnitude
    criterion is kept apart in ``magnitude_unstable``.
    """

    jacobian: np.ndarray
    eigenvalues: np.ndarray
    max_real_eigenvalue: float
    classification: Stability
    fd_step: float
    class_tol: float
    magnitude_unstable: bool
    kink_suspect: bool
    alpha: float | None = None
    damped_eigenvalues: np.ndarray | None = None

    def to_dict(self):
        def cplx(arr):
            return None if arr is None else [[float(z.real), float(z.imag)] for z in arr]

        mre = self.max_real_eigenvalue
        return {
            "schema_version": SCHEMA_VERSION,
            "jacobian": np.asarray(self.jacobian).tolist(),
            "eigenvalues": cplx(self.eigenvalues),
            "max_real_eigenvalue": None if not np.isfinite(mre) else float(mre),
            "classification": self.classification.value,
            "fd_step": self.fd_step,
            "class_tol": self.class_tol,
            "magnitude_unstable": self.magnitude_unstable,
            "kink_suspect": self.kink_suspect,
            "alpha": self.alpha,
            "damped_eigenvalues": cplx(self.damped_eigenvalues),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def spectrum_report(J, class_tol=DEFAULT_CLASS_TOL, fd_step=float("nan"), alpha=None, kink=False):
    vals = eigenvalues(J)
    real = vals[np.abs(vals.imag) <= class_tol].real
    mre = float(real.max()) if real.size else -np.inf
    cls = Stability.UNSTABLE if mre > 1.0 + class_tol else Stability.NOT_UNSTABLE
    damped = None if alpha is None else 1.0 - alpha + alpha * vals
    return SpectrumReport(np.asarray(J), vals, mre, cls, fd_step, class_tol,
                          bool(np.any(np.abs(vals) > 1.0 + class_tol)), kink, alpha, damped)


def classify_fixed_point(map, xbar, fd_step=None, class_tol=DEFAULT_CLASS_TOL):
    """FD spectrum of the undamped map ``S`` at an (approximate) fixed point.

    ``map`` is an :class:`IterationMap` or a bare callable ``S``; for an
    iteration map the damped spectrum ``1 - alpha + alpha * lambda`` is
    reported as well.
    """
    S = map.S if hasattr(map, "S") else map
    alpha = getattr(map, "alpha", None)
    xbar = np.asarray(xbar, dtype=float)
    gap = float(np.linalg.norm(np.asarray(S(xbar)) - xbar))
    if gap > 10.0 * class_tol:
        raise PreconditionError(f"|S(x) - x| = {gap:.3g} exceeds 10*class_tol; not a fixed point")
    h = default_fd_step(xbar) if fd_step is None else float(fd_step)
    J = fd_jacobian(S, xbar, h)
    return spectrum_report(J, class_tol, h, alpha, kink_suspect(S, xbar, h))


# ---------------------------------------------------------------------------
# Moreau envelope curvature


def moreau_hessian_fd(problem, x, params, step=HESSIAN_STEP, return_asymmetry=False):
    """Symmetrized second-difference Hessian of the Moreau envelope."""
    params.check(problem.rho)
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    h = float(step)
    f0 = moreau_value(problem, x, params)

    def f(*moves):
        y = x.copy()
        for i, s in moves:
            y[i] = y[i] + s * h
        return moreau_value(problem, y, params)

    H = np.empty((d, d))
    for i in range(d):
        H[i, i] = (f((i, 1)) - 2.0 * f0 + f((i, -1))) / h ** 2
        for j in range(d):
            if j != i:
                H[i, j] = (f((i, 1), (j, 1)) - f((i, 1), (j, -1))
                           - f((i, -1), (j, 1)) + f((i, -1), (j, -1))) / (4.0 * h ** 2)
    asym = float(np.max(np.abs(H - H.T))) if d > 1 else 0.0
    Hs = 0.5 * (H + H.T)
    return (Hs, asym) if return_asymmetry else Hs


@dataclass(frozen=True)
class MorSmoothReport:
    lhs: float
    rhs: float
    holds: bool
    hessian: np.ndarray


def check_mor_smooth_inequality(problem, spec, params, step=HESSIAN_STEP, slack=1e-4):
    """Compare the envelope's least tangent curvature with that of ``d^2 f_M``."""
    if spec.classification is ManifoldClass.NON_ACTIVE:
        raise PreconditionError("no active manifold at this critical point")
    B = spec.basis
    H = moreau_hessian_fd(problem, spec.critical_point, params, step)
    lhs = float(np.min(np.linalg.eigvalsh(B @ H @ B.T)))
    Q = spec.reduced_quadratic_matrix()
    rhs = float(np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))))
    return MorSmoothReport(lhs, rhs, lhs <= rhs + slack, H)


# ---------------------------------------------------------------------------
# tangent-space Jacobian predictions


def reduced_jacobian_prediction(kind, spec, params):
    """``-Hyy^{-1} Hxy^T`` on the tangent space, from the stored reduced Hessians."""
    kind = MapKind.parse(kind)
    if kind.value not in spec.reduced_hessians:
        raise CapabilityError(f"no reduced Hessian data for {kind.value} on this problem")
    Hxy, Hyy = (np.atleast_2d(np.asarray(a, dtype=float)) for a in spec.reduced_hessians[kind.value](params.mu))
    return -np.linalg.solve(Hyy, Hxy.T)


def fd_tangent_restriction(map, spec, step=None):
    """FD Jacobian of ``S`` at the critical point, expressed in the tangent basis."""
    B = spec.basis
    J = fd_jacobian(map.S, spec.critical_point, step)
    return B @ J @ B.T


def check_reduced_jacobian(map, spec, step=None, tol=1e-5):
    """Prediction and FD restriction; raises :class:`CertificateError` if they differ by more than ``tol``."""
    pred = reduced_jacobian_prediction(map.kind, spec, map.params)
    fd = fd_tangent_restriction(map, spec, step)
    err = float(np.max(np.abs(pred - fd)))
    if err > tol:
        raise CertificateError(f"reduced Jacobian prediction off by {err:.3g}", slack=tol - err)
    return pred, fd, err
