"""Numerical kernels shared by the rest of the package.

Dense LU, sparse LU and symmetric LDL' (backed by LAPACK and SuperLU
through scipy), log-gamma, the regularized
incomplete beta function and its inverse.  Everything is double precision
and free of global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg.lapack
import scipy.sparse
import scipy.sparse.linalg


class SingularMatrixError(ValueError):
    """Raised when an LU pivot is numerically zero."""

    def __init__(self, index: int, pivot: float):
        super().__init__(f"matrix is singular: pivot {index} has magnitude {abs(pivot):.3e}")
        self.index = index
        self.pivot = pivot


class ConvergenceError(RuntimeError):
    pass


PIVOT_RTOL = 1e-12
_getrf, _getrs = scipy.linalg.lapack.get_lapack_funcs(("getrf", "getrs"), dtype=np.float64)


def as_dense(a) -> np.ndarray:
    """Validate and return a finite 2-D float array (row-major)."""
    m = np.array(a, dtype=float, order="C")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class LinearSystemFactors:
    """LU factors with partial pivoting, as returned by LAPACK getrf.

    ``lu`` packs L (unit diagonal, strictly lower part) and U; ``piv`` records
    the row interchanges.
    """

    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    def solve(self, b, trans: bool = False) -> np.ndarray:
        x, info = _getrs(self.lu, self.piv, np.asarray(b, dtype=float), trans=1 if trans else 0)
        if info != 0:
            raise ValueError(f"getrs failed with info={info}")
        return x

    def reconstruct(self) -> np.ndarray:
        """Return P^T L U, i.e. the factored matrix."""
        n = self.n
        lower = np.tril(self.lu, -1) + np.eye(n)
        upper = np.triu(self.lu)
        a = lower @ upper
        # replay getrf's row interchanges in reverse
        for i in range(n - 1, -1, -1):
            j = self.piv[i]
            if j != i:
                a[[i, j]] = a[[j, i]]
        return a


def lu_factor(a, rtol: float = PIVOT_RTOL) -> LinearSystemFactors:
    """Factor a square matrix; raise SingularMatrixError if a pivot of U is at
    most ``rtol`` times the largest absolute row sum."""
    m = as_dense(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"LU needs a square matrix, got {m.shape}")
    n = m.shape[0]
    if n == 0:
        return LinearSystemFactors(m, np.zeros(0, dtype=np.int32))
    # an exactly zero pivot (info > 0) is caught by the relative test below
    lu, piv, info = _getrf(m)
    if info < 0:
        raise ValueError(f"getrf failed with info={info}")
    scale = np.abs(m).sum(axis=1).max()
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag <= rtol * max(scale, np.finfo(float).tiny))
    if bad.size:
        i = int(bad[0])
        raise SingularMatrixError(i, float(lu[i, i]))
    return LinearSystemFactors(lu, piv)


@dataclass(frozen=True)
class SparseFactors:
    """Sparse LU factors P_r A P_c = L U (SuperLU, partial pivoting)."""

    lu: scipy.sparse.linalg.SuperLU

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    def solve(self, b, trans: bool = False) -> np.ndarray:
        return self.lu.solve(np.asarray(b, dtype=float), trans="T" if trans else "N")


def sparse_lu_factor(a, rtol: float = PIVOT_RTOL) -> SparseFactors:
    """Factor a square sparse (or dense) matrix; same singularity test as
    ``lu_factor``."""
    m = scipy.sparse.csc_matrix(a, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"LU needs a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m.data)):
        raise ValueError("matrix has non-finite entries")
    n = m.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    try:
        # threshold 1.0 is ordinary partial pivoting
        lu = scipy.sparse.linalg.splu(m, diag_pivot_thresh=1.0)
    except RuntimeError:
        raise SingularMatrixError(-1, 0.0) from None
    scale = float(abs(m).sum(axis=1).max())
    diag = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(diag <= rtol * max(scale, np.finfo(float).tiny))
    if bad.size:
        i = int(bad[0])
        raise SingularMatrixError(i, float(diag[i]))
    return SparseFactors(lu)


@dataclass(frozen=True)
class SymmetricFactors:
    """Bunch-Kaufman factors P L D L' P' of a symmetric matrix (LAPACK sytrf,
    lower triangle)."""

    ldl: np.ndarray
    ipiv: np.ndarray

    @property
    def n(self) -> int:
        return self.ldl.shape[0]

    def solve(self, b) -> np.ndarray:
        x, info = scipy.linalg.lapack.dsytrs(self.ldl, self.ipiv, np.asarray(b, dtype=float), lower=1)
        if info != 0:
            raise ValueError(f"sytrs failed with info {info}")
        return x


def ldl_factor(a) -> SymmetricFactors:
    """Factor a symmetric (possibly indefinite) matrix; only its lower
    triangle is read.  Raises SingularMatrixError on an exactly zero block."""
    m = as_dense(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"LDL' needs a square matrix, got {m.shape}")
    n = m.shape[0]
    # a generous workspace lets LAPACK use its blocked algorithm
    ldl, ipiv, info = scipy.linalg.lapack.dsytrf(m, lower=1, lwork=max(1, 32 * n))
    if info > 0:
        raise SingularMatrixError(info - 1, 0.0)
    if info < 0:
        raise ValueError(f"sytrf rejected argument {-info}")
    return SymmetricFactors(ldl, ipiv)


def lu_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by LU with partial pivoting."""
    return lu_factor(a).solve(b)


# Stirling series coefficients B_2k / (2k (2k-1))
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0.

    Arguments below 10 are shifted up with the recurrence, then the Stirling
    series is summed to eight terms.
    """
    x = float(x)
    if not x > 0.0 or math.isinf(x):
        raise ValueError(f"log_gamma domain error: x = {x}")
    shift = 0.0
    if x < 10.0:
        prod = 1.0
        while x < 10.0:
            prod *= x
            x += 1.0
        shift = math.log(prod)
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    term = inv
    for c in _STIRLING:
        series += c * term
        term *= inv2
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - shift


def log_beta(a: float, b: float) -> float:
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def beta_pdf(x: float, a: float, b: float) -> float:
    if x < 0.0 or x > 1.0:
        return 0.0
    if x == 0.0:
        return math.inf if a < 1 else (1.0 / math.exp(log_beta(a, b)) if a == 1 else 0.0)
    if x == 1.0:
        return math.inf if b < 1 else (1.0 / math.exp(log_beta(a, b)) if b == 1 else 0.0)
    return math.exp((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_beta(a, b))


CF_MAX_ITER = 500
_CF_EPS = 1e-16
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _CF_EPS:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in {CF_MAX_ITER} "
        f"iterations (a={a}, b={b}, x={x})"
    )


def reg_inc_beta(z: float, alpha: float, beta: float) -> float:
    """Regularized incomplete beta I_z(alpha, beta)."""
    if not (alpha > 0.0 and beta > 0.0):
        raise ValueError(f"shape parameters must be positive, got {alpha}, {beta}")
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    log_front = alpha * math.log(z) + beta * math.log1p(-z) - log_beta(alpha, beta)
    front = math.exp(log_front)
    if z < (alpha + 1.0) / (alpha + beta + 2.0):
        return min(1.0, front * _beta_cf(alpha, beta, z) / alpha)
    return max(0.0, 1.0 - front * _beta_cf(beta, alpha, 1.0 - z) / beta)


INV_MAX_ITER = 200


def inv_reg_inc_beta(p: float, alpha: float, beta: float, tol: float = 1e-12) -> float:
    """Return z in [0, 1] with I_z(alpha, beta) = p.

    Newton steps on the CDF, falling back to bisection whenever a step leaves
    the current bracket.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not (alpha > 0.0 and beta > 0.0):
        raise ValueError(f"shape parameters must be positive, got {alpha}, {beta}")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    lo, hi = 0.0, 1.0
    z = alpha / (alpha + beta)
    for _ in range(INV_MAX_ITER):
        f = reg_inc_beta(z, alpha, beta) - p
        if abs(f) <= tol:
            return z
        if f < 0.0:
            lo = z
        else:
            hi = z
        if hi - lo <= 4.0 * np.finfo(float).eps * max(z, 1e-300):
            return z
        dens = beta_pdf(z, alpha, beta)
        step_ok = False
        if dens > 0.0 and math.isfinite(dens):
            trial = z - f / dens
            if lo < trial < hi:
                z = trial
                step_ok = True
        if not step_ok:
            z = 0.5 * (lo + hi)
    raise ConvergenceError(
        f"inverse incomplete beta did not converge in {INV_MAX_ITER} iterations "
        f"(p={p}, a={alpha}, b={beta})"
    )
