"""Spectra of small real matrices and fixed-point stability analysis.

The eigensolver reduces to upper Hessenberg form with Householder reflections
and then runs Francis double-shift QR iterations; every returned eigenvalue is
checked against the normalized determinant residual ``|det(m - lam I)| / ||m||^n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidInputError,
    InvalidRegionError,
    NoStableStepError,
    NumericFailureError,
)

MARGIN = 1e-12
RESIDUAL_TOL = 1e-7
FD_EPS = 1e-5
MAX_DIM = 16
RATE_FLOOR = 1e-14
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=complex).ravel()
        order = np.lexsort((ev.imag, ev.real))
        object.__setattr__(self, "eigenvalues", ev[order])

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def real(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def imag(self) -> np.ndarray:
        return self.eigenvalues.imag

    def is_conjugate_closed(self, tol: float = 1e-9) -> bool:
        """Every non-real eigenvalue has its conjugate in the list."""
        ev = self.eigenvalues
        used = np.zeros(len(ev), dtype=bool)
        for i, lam in enumerate(ev):
            if abs(lam.imag) <= tol or used[i]:
                continue
            dist = np.abs(ev - np.conj(lam))
            dist[used] = np.inf
            dist[i] = np.inf
            j = int(np.argmin(dist))
            if dist[j] > tol:
                return False
            used[i] = used[j] = True
        return True


# ---------------------------------------------------------------------------
# eigenvalues


def eig2(m) -> Spectrum:
    """Roots of ``lam**2 - tr*lam + det`` for a real 2x2 matrix."""
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise InvalidInputError("eig2 needs a finite 2x2 matrix")
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        return Spectrum(np.zeros(2, dtype=complex))
    # unit-scale entries keep the products below from under- or overflowing
    a, b, c, d = (float(x) / scale for x in m.ravel())
    return Spectrum(scale * _eig2_unit(a, b, c, d))


def _eig2_unit(a, b, c, d) -> np.ndarray:
    half_tr = 0.5 * (a + d)
    # (a - d)^2 + 4bc avoids the cancellation in tr^2 - 4 det
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0:
        root = math.sqrt(disc)
        r1 = half_tr + math.copysign(root, half_tr) if half_tr != 0 else root
        det = a * d - b * c
        r2 = det / r1 if r1 != 0 else half_tr - root
        return np.array([r1, r2], dtype=complex)
    root = math.sqrt(-disc)
    return np.array([complex(half_tr, root), complex(half_tr, -root)])


def _hessenberg(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        alpha = -math.copysign(np.linalg.norm(x), x[0]) if x[0] != 0 else -np.linalg.norm(x)
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0:
            continue
        v /= vnorm
        a[k + 1 :, :] -= 2.0 * np.outer(v, v @ a[k + 1 :, :])
        a[:, k + 1 :] -= 2.0 * np.outer(a[:, k + 1 :] @ v, v)
        a[k + 2 :, k] = 0.0
    return a


def _francis_qr(a: np.ndarray, max_its: int = 60) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix (modified in place)."""
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.sum(np.abs(np.triu(a, -1))))
    nn = n - 1
    t = 0.0
    x = y = w = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= _EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its >= max_its:
                raise NumericFailureError(f"QR iteration did not converge after {max_its} sweeps")
            if its in (10, 20, 40):
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u <= _EPS * v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = a[k, j] + q * a[k + 1, j]
                    if k != nn - 1:
                        p += r * a[k + 2, j]
                        a[k + 2, j] -= p * z
                    a[k + 1, j] -= p * y
                    a[k, j] -= p * x
                mmin = nn if nn < k + 3 else k + 3
                for i in range(l, mmin + 1):
                    p = x * a[i, k] + y * a[i, k + 1]
                    if k != nn - 1:
                        p += z * a[i, k + 2]
                        a[i, k + 2] -= p * r
                    a[i, k + 1] -= p * q
                    a[i, k] -= p
    return wr + 1j * wi


def eig_residuals(m, eigenvalues) -> np.ndarray:
    """Normalized residuals ``|det(m - lam I)| / ||m||_2^n`` per eigenvalue."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    ev = np.asarray(eigenvalues, dtype=complex)
    scale = np.linalg.norm(m, 2)
    if scale == 0.0:
        return np.abs(ev) ** n
    # exact power-of-two rescaling: tiny or huge matrices neither underflow nor overflow
    e = math.frexp(scale)[1]
    ms = np.ldexp(m, -e)
    evs = np.ldexp(ev.real, -e) + 1j * np.ldexp(ev.imag, -e)
    eye = np.eye(n)
    # |det| as a product of singular values; LU pivoting on subnormals can give nan
    det = np.array([np.prod(np.linalg.svd(ms - lam * eye, compute_uv=False)) for lam in evs])
    return det / math.ldexp(scale, -e) ** n


def eig_small(m, check: bool = True) -> Spectrum:
    """All eigenvalues of a real ``n x n`` matrix, ``n <= 16``.

    Raises :class:`NumericFailureError` if the QR sweeps do not converge or an
    eigenvalue fails the residual check.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"eig_small needs a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if n > MAX_DIM:
        raise InvalidInputError(f"eig_small handles n <= {MAX_DIM}, got {n}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("eig_small needs finite entries")
    if n == 0:
        return Spectrum(np.zeros(0, dtype=complex))
    if n == 1:
        return Spectrum(np.array([m[0, 0]], dtype=complex))
    ev = _francis_qr(_hessenberg(m))
    if check:
        res = eig_residuals(m, ev)
        if np.any(res > RESIDUAL_TOL):
            raise NumericFailureError(f"eigenvalue residual {res.max():.3g} exceeds {RESIDUAL_TOL}")
    return Spectrum(ev)


def eigvals(m) -> Spectrum:
    m = np.asarray(m, dtype=float)
    return eig2(m) if m.shape == (2, 2) else eig_small(m)


# ---------------------------------------------------------------------------
# Jacobians and stability


def fd_jacobian(fieldfn: Callable, p, eps: float = FD_EPS) -> np.ndarray:
    """Central-difference Jacobian; column ``j`` is the derivative along ``e_j``."""
    if not eps > 0:
        raise InvalidInputError("fd_jacobian needs eps > 0")
    p = np.asarray(p, dtype=float)
    n = p.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        fp = np.asarray(fieldfn(p + e), dtype=float)
        fm = np.asarray(fieldfn(p - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise InvalidRegionError(f"field is not finite near {p} along coordinate {j}")
        cols.append((fp - fm) / (2.0 * eps))
    return np.column_stack(cols)


LINEAR = "linearly-convergent"
NOT_CONVERGENT = "not-convergent"
MARGINAL = "marginal"


@dataclass(frozen=True)
class StabilityVerdict:
    continuous: str
    discrete: str
    continuous_rate: float
    discrete_rate: float

    @property
    def rate(self) -> float:
        return self.discrete_rate


def _as_spectrum(spec) -> Spectrum:
    return spec if isinstance(spec, Spectrum) else Spectrum(np.asarray(spec, dtype=complex))


def classify(spec, h: Optional[float] = None) -> StabilityVerdict:
    """Continuous and discrete verdicts for a spectrum.

    The continuous verdict reads the spectrum as that of a vector-field Jacobian.
    With ``h`` the discrete verdict uses the SimGD eigenvalues ``1 + h*lam``;
    without it the spectrum is taken to be that of the update operator itself.
    """
    spec = _as_spectrum(spec)
    if len(spec) == 0:
        raise InvalidInputError("cannot classify an empty spectrum")
    ev = spec.eigenvalues
    max_re = float(np.max(ev.real))
    if max_re < -MARGIN:
        cont = LINEAR
    elif max_re > MARGIN:
        cont = NOT_CONVERGENT
    else:
        cont = MARGINAL
    disc_ev = ev if h is None else 1.0 + h * ev
    radius = float(np.max(np.abs(disc_ev)))
    if radius < 1.0 - MARGIN:
        disc = LINEAR
    elif radius > 1.0 + MARGIN:
        disc = NOT_CONVERGENT
    else:
        disc = MARGINAL
    return StabilityVerdict(cont, disc, max_re, radius)


def max_stable_step(spec) -> float:
    """Supremum of SimGD step sizes for which all ``|1 + h*lam| < 1``."""
    spec = _as_spectrum(spec)
    if len(spec) == 0:
        raise InvalidInputError("empty spectrum")
    re = spec.real
    im = spec.imag
    if np.any(re >= 0):
        raise NoStableStepError("some eigenvalue has nonnegative real part; no step size is stable")
    a = -re
    return float(np.min(2.0 * a / (a * a + im * im)))


def estimate_rate(traj, target=None, floor: float = RATE_FLOOR, min_points: int = 10) -> float:
    """Empirical linear convergence factor of a trajectory towards ``target``.

    Fits ``log ||x_k - target||`` against ``k`` by least squares over the final
    half of the points above ``floor`` and returns ``exp(slope)``.
    """
    pts = np.asarray(traj.points, dtype=float)
    steps = np.asarray(traj.steps, dtype=float)
    tgt = np.zeros(pts.shape[1]) if target is None else np.asarray(
        target.as_tuple() if hasattr(target, "as_tuple") else target, dtype=float
    )
    dist = np.linalg.norm(pts - tgt, axis=1)
    below = np.flatnonzero(dist < floor)
    usable = len(dist) if below.size == 0 else int(below[0])
    if usable < min_points:
        raise InsufficientDataError(f"only {usable} points above the distance floor {floor}")
    start = usable // 2
    k = steps[start:usable]
    logd = np.log(dist[start:usable])
    if len(k) < 2:
        raise InsufficientDataError("fit window too small")
    slope = np.polyfit(k, logd, 1)[0]
    return float(math.exp(slope))


# ---------------------------------------------------------------------------
# eigenvalue bounds for saddle-point Jacobians


@dataclass
class EigBoundMatrices:
    """Blocks of ``J = [[-P, -B^T], [B, -Q]]`` (``P`` optional)."""

    Q: np.ndarray
    B: np.ndarray
    P: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.B = np.asarray(self.B, dtype=float)
        if self.B.ndim == 1:
            self.B = self.B[:, None]
        if self.P is not None:
            self.P = np.atleast_2d(np.asarray(self.P, dtype=float))

    @property
    def jacobian(self) -> np.ndarray:
        m, n = self.B.shape
        top_left = np.zeros((n, n)) if self.P is None else -self.P
        return np.block([[top_left, -self.B.T], [self.B, -self.Q]])


@dataclass(frozen=True)
class BoundCheck:
    name: str
    value: float
    bound: float
    passed: bool


@dataclass
class EigBoundReport:
    eigenvalues: np.ndarray
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]


def _validate_bound_matrices(mats: EigBoundMatrices):
    Q, B, P = mats.Q, mats.B, mats.P
    m, n = B.shape
    if Q.shape != (m, m):
        raise InvalidInputError(f"Q must be {m}x{m} to match B ({m}x{n}), got {Q.shape}")
    if P is not None and P.shape != (n, n):
        raise InvalidInputError(f"P must be {n}x{n}, got {P.shape}")
    if n + m > MAX_DIM:
        raise InvalidInputError(f"total dimension {n + m} exceeds {MAX_DIM}")
    for name, mat in (("Q", Q), ("P", P)):
        if mat is None:
            continue
        if not np.all(np.isfinite(mat)):
            raise InvalidInputError(f"{name} has non-finite entries")
        if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
            raise InvalidInputError(f"{name} is not symmetric")
    if not np.all(np.isfinite(B)):
        raise InvalidInputError("B has non-finite entries")
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise InvalidInputError("Q is not positive definite")
    if P is not None and np.linalg.eigvalsh(P)[0] < -1e-12 * max(1.0, np.max(np.abs(P))):
        raise InvalidInputError("P is not positive semi-definite")
    if m < n or np.linalg.svd(B, compute_uv=False)[-1] <= 1e-10:
        raise InvalidInputError("B does not have full column rank")


def check_eig_bounds(mats: EigBoundMatrices, slack: float = 1e-9) -> EigBoundReport:
    """Verify the real-part and imaginary-part bounds on the spectrum of ``J``.

    Always checked: every ``Re(lam) < 0`` and ``|Im(lam)| <= sqrt(lmax(B^T B))``.
    When ``P`` is absent or zero the sharper real-part bounds are checked too:
    ``Re(lam) <= -lmin(Q)/2`` for non-real eigenvalues and
    ``Re(lam) <= -lmin(Q) lmin(B^T B) / (lmax(Q) lmin(Q) + lmin(B^T B))`` for real ones.
    """
    _validate_bound_matrices(mats)
    J = mats.jacobian
    spec = eig_small(J)
    q = np.linalg.eigvalsh(mats.Q)
    btb = np.linalg.eigvalsh(mats.B.T @ mats.B)
    qmin, qmax = q[0], q[-1]
    bmin, bmax = btb[0], btb[-1]
    imag_bound = math.sqrt(bmax)
    real_bound = -qmin * bmin / (qmax * qmin + bmin)
    complex_bound = -qmin / 2.0
    sharp = mats.P is None or not np.any(mats.P)
    real_tol = 1e-9 * max(1.0, np.linalg.norm(J, 2))

    report = EigBoundReport(spec.eigenvalues)
    for i, lam in enumerate(spec.eigenvalues):
        report.checks.append(BoundCheck(f"re<0[{i}]", lam.real, 0.0, lam.real < 0))
        report.checks.append(
            BoundCheck(f"|im|<=sqrt(lmax(BtB))[{i}]", abs(lam.imag), imag_bound, abs(lam.imag) <= imag_bound + slack)
        )
        if sharp:
            if abs(lam.imag) <= real_tol:
                report.checks.append(BoundCheck(f"re-bound(real)[{i}]", lam.real, real_bound, lam.real <= real_bound + slack))
            else:
                report.checks.append(BoundCheck(f"re-bound(complex)[{i}]", lam.real, complex_bound, lam.real <= complex_bound + slack))
    return report
