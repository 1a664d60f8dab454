"""
One-dimensional Galerkin matrices of a B-spline space and their banded
LU factorizations with many right-hand sides.

Row index = test function, column index = trial function, so for the
advection kinds ``AdvectionTrialDeriv[i, l] = int B_i B_l'`` and
``AdvectionTestDeriv[i, l] = int B_i' B_l``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .splines import KnotVector, QuadratureRule, basis_funs, gauss_rule

__all__ = (
    "MatrixKind",
    "BandedMatrix",
    "BandedFactorization",
    "SingularMatrixError",
    "assemble_1d",
    "combine_mass_plus_scaled_stiffness",
    "factorize",
    "solve_multi_rhs",
)


class SingularMatrixError(ArithmeticError):
    """Raised when a pivot falls below the singularity threshold."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class MatrixKind(enum.Enum):
    MASS = "mass"
    STIFFNESS = "stiffness"
    ADVECTION_TRIAL_DERIV = "advection_trial_deriv"
    ADVECTION_TEST_DERIV = "advection_test_deriv"


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square matrix with half-bandwidth ``k`` stored row-wise.

    ``data[i, d]`` holds ``A[i, i - k + d]``; slots falling outside the
    matrix are kept at zero.
    """

    data: np.ndarray
    k: int
    symmetric: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2 * self.k + 1:
            raise ValueError("band storage must have shape (n, 2k+1)")
        if not np.all(np.isfinite(data)):
            raise ValueError("band entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return (self.n, self.n)

    @classmethod
    def from_dense(cls, a, k: int | None = None, symmetric: bool = False) -> "BandedMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("matrix must be square")
        if k is None:
            nz = np.argwhere(a != 0)
            k = int(np.abs(nz[:, 0] - nz[:, 1]).max()) if len(nz) else 0
        data = np.zeros((n, 2 * k + 1))
        for d in range(2 * k + 1):
            off = d - k
            rows = np.arange(max(0, -off), min(n, n - off))
            data[rows, d] = a[rows, rows + off]
        return cls(data, k, symmetric)

    @classmethod
    def identity(cls, n: int) -> "BandedMatrix":
        return cls(np.ones((n, 1)), 0, True)

    def to_dense(self) -> np.ndarray:
        n, k = self.n, self.k
        out = np.zeros((n, n))
        for d in range(2 * k + 1):
            off = d - k
            rows = np.arange(max(0, -off), min(n, n - off))
            out[rows, rows + off] = self.data[rows, d]
        return out

    @property
    def T(self) -> "BandedMatrix":
        n, k = self.n, self.k
        data = np.zeros_like(self.data)
        for d in range(2 * k + 1):
            off = d - k
            rows = np.arange(max(0, -off), min(n, n - off))
            data[rows + off, 2 * k - d] = self.data[rows, d]
        return BandedMatrix(data, k, self.symmetric)

    def matvec(self, x):
        """Product with a vector or with the columns of an (n, m) array."""
        x = np.asarray(x, dtype=float)
        vec = x.ndim == 1
        xx = x.reshape(self.n, -1)
        out = np.zeros_like(xx)
        n, k = self.n, self.k
        for d in range(2 * k + 1):
            off = d - k
            rows = np.arange(max(0, -off), min(n, n - off))
            out[rows] += self.data[rows, d][:, None] * xx[rows + off]
        return out[:, 0] if vec else out

    def __add__(self, other):
        if not isinstance(other, BandedMatrix) or other.n != self.n:
            return NotImplemented
        k = max(self.k, other.k)
        return BandedMatrix(_widen(self, k) + _widen(other, k), k,
                            self.symmetric and other.symmetric)

    def __mul__(self, scalar):
        return BandedMatrix(self.data * float(scalar), self.k, self.symmetric)

    __rmul__ = __mul__


def _widen(a: BandedMatrix, k: int) -> np.ndarray:
    pad = k - a.k
    return np.pad(a.data, ((0, 0), (pad, pad)))


@dataclass(frozen=True, eq=False)
class BandedFactorization:
    """Partially pivoted LU factors in LAPACK ``gbtrf`` layout."""

    ab: np.ndarray
    ipiv: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return self.ab.shape[1]


def assemble_1d(kv: KnotVector, kind: MatrixKind | str,
                rule: QuadratureRule | None = None) -> BandedMatrix:
    """Galerkin matrix of the given kind, assembled element by element."""
    kind = MatrixKind(kind)
    if kind is MatrixKind.ADVECTION_TEST_DERIV:
        # exact transpose, independent of rounding in the element products
        return assemble_1d(kv, MatrixKind.ADVECTION_TRIAL_DERIV, rule).T
    p = kv.degree
    if rule is None:
        rule = gauss_rule(p + 1, kv)
    pts, wts = rule.points, rule.weights
    n_el, q = pts.shape
    spans, vals, ders = basis_funs(kv, pts.ravel())
    vals = vals.reshape(n_el, q, p + 1)
    ders = ders.reshape(n_el, q, p + 1)
    spans = spans.reshape(n_el, q)[:, 0]
    test, trial = {
        MatrixKind.MASS: (vals, vals),
        MatrixKind.STIFFNESS: (ders, ders),
        MatrixKind.ADVECTION_TRIAL_DERIV: (vals, ders),
    }[kind]
    local = np.einsum("eq,eqa,eqb->eab", wts, test, trial)
    data = np.zeros((kv.n_basis, 2 * p + 1))
    a = np.arange(p + 1)
    rows = spans[:, None, None] - p + a[None, :, None]
    diag = (a[None, None, :] - a[None, :, None] + p) * np.ones_like(rows)
    np.add.at(data, (rows, diag), local)
    sym = kind in (MatrixKind.MASS, MatrixKind.STIFFNESS)
    return BandedMatrix(data, p, sym)


def combine_mass_plus_scaled_stiffness(M: BandedMatrix, S: BandedMatrix,
                                       row_coefficients) -> BandedMatrix:
    """Rows ``M[i, :] + c_i * S[i, :]``."""
    c = np.asarray(row_coefficients, dtype=float)
    if M.n != S.n or M.k != S.k:
        raise ValueError(f"dimension mismatch: {M.shape}/k={M.k} vs {S.shape}/k={S.k}")
    if c.shape != (M.n,):
        raise ValueError(f"expected {M.n} row coefficients, got shape {c.shape}")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("row coefficients must be finite and nonnegative")
    uniform = bool(np.all(c == c[0]))
    return BandedMatrix(M.data + c[:, None] * S.data, M.k,
                        M.symmetric and S.symmetric and uniform)


def factorize(A: BandedMatrix, rtol: float = 1e-14) -> BandedFactorization:
    n, k = A.n, A.k
    ab = np.zeros((3 * k + 1, n))
    for d in range(2 * k + 1):
        off = d - k
        rows = np.arange(max(0, -off), min(n, n - off))
        ab[2 * k - off, rows + off] = A.data[rows, d]
    ipiv = np.zeros(n, dtype=np.int64)
    scale = np.abs(A.data).max() if A.data.size else 0.0
    bad = _kernels.band_lu(ab, ipiv, k, rtol * scale)
    if bad >= 0:
        raise SingularMatrixError(f"matrix is numerically singular at row {bad}", row=int(bad))
    return BandedFactorization(ab, ipiv, k)


def solve_multi_rhs(f: BandedFactorization, rhs) -> np.ndarray:
    """Solve for every column of an (n, m) right-hand side."""
    rhs = np.asarray(rhs, dtype=float)
    vec = rhs.ndim == 1
    if rhs.shape[0] != f.n or rhs.ndim > 2:
        raise ValueError(f"right-hand side has shape {rhs.shape}, expected ({f.n}, m)")
    b = np.array(rhs.reshape(f.n, -1), dtype=float, order="C")
    if b.shape[1]:
        which = np.zeros(b.shape[1], dtype=np.int64)
        _kernels.band_solve_columns(f.ab[None], f.ipiv[None], f.k, which, b)
    return b[:, 0] if vec else b
