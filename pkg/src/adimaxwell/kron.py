"""
Kronecker-product operators on rank-3 coefficient tensors and direction sweeps.

A tensor ``u`` of shape ``(Nx, Ny, Nz)`` is the coefficient array of a
trivariate spline; ``vec(u)`` is its C-order flattening, so the x index is
the slowest and ``(Ax kron Ay kron Az) vec(u)`` acts on axis 0 with ``Ax``.

A sweep solves one banded system per fiber along an axis.  Fibers either share
a single factorization or, when the system rows carry per-test-function
coefficients, pick theirs from a cache keyed by the fiber's coefficient
vector.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .linalg1d import (BandedFactorization, BandedMatrix, SingularMatrixError,
                       combine_mass_plus_scaled_stiffness, factorize)

__all__ = (
    "apply_axis",
    "kron_apply",
    "to_axis_major",
    "from_axis_major",
    "FactorizationCache",
    "SweepPlan",
    "sweep_solve",
    "adi_solve_block",
)


def _check_tensor(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got shape {u.shape}")
    return u


def apply_axis(A: BandedMatrix, u: np.ndarray, axis: int) -> np.ndarray:
    """Apply a banded matrix along one axis without forming the full operator."""
    u = _check_tensor(u)
    if A.n != u.shape[axis]:
        raise ValueError(f"matrix of size {A.n} does not match axis {axis} of length {u.shape[axis]}")
    if not u.flags.c_contiguous:
        u = np.ascontiguousarray(u)
    return _kernels.band_apply_axis(A.data, A.k, u, axis, np.empty_like(u))


def kron_apply(Ax, Ay, Az, u) -> np.ndarray:
    """``(Ax kron Ay kron Az) vec(u)``; ``None`` stands for the identity."""
    u = _check_tensor(u)
    mats = (Ax, Ay, Az)
    for axis, A in enumerate(mats):
        if A is not None and A.n != u.shape[axis]:
            raise ValueError(f"matrix of size {A.n} does not match axis {axis} of length {u.shape[axis]}")
    out = np.ascontiguousarray(u)
    buf = None
    for axis, A in enumerate(mats):
        if A is None:
            continue
        if buf is None or buf is u:
            buf = np.empty_like(out)
        _kernels.band_apply_axis(A.data, A.k, out, axis, buf)
        out, buf = buf, (out if out is not u else None)
    return out.copy() if out is u else out


def to_axis_major(u: np.ndarray, axis: int) -> np.ndarray:
    """Reorder into an (n_axis, n_fibers) matrix with contiguous columns per fiber row."""
    u = np.asarray(u)
    n = u.shape[axis]
    return np.ascontiguousarray(np.moveaxis(u, axis, 0)).reshape(n, -1)


def from_axis_major(b: np.ndarray, shape, axis: int) -> np.ndarray:
    moved = (shape[axis],) + tuple(s for i, s in enumerate(shape) if i != axis)
    return np.ascontiguousarray(np.moveaxis(b.reshape(moved), 0, axis))


class FactorizationCache:
    """Factorizations of ``M + diag(c) S`` keyed by the row coefficients ``c``.

    Lookups are lock-free; insertion is serialized.
    """

    def __init__(self, M: BandedMatrix, S: BandedMatrix, transform=None):
        self.M = M
        self.S = S
        self.transform = transform
        self._entries: dict[bytes, BandedFactorization] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._entries)

    def get(self, coefficients) -> BandedFactorization:
        c = np.ascontiguousarray(coefficients, dtype=float)
        key = c.tobytes()
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._entries.get(key)
            if hit is None:
                A = combine_mass_plus_scaled_stiffness(self.M, self.S, c)
                if self.transform is not None:
                    A = self.transform(A)
                hit = self._entries[key] = factorize(A)
        return hit


@dataclass(eq=False)
class SweepPlan:
    """Which factorization solves each fiber along ``axis``.

    ``which`` has shape ``shape`` with ``axis`` removed and indexes into
    ``factors``.  A constant plan has a single factor and ``which is None``.
    """

    axis: int
    factors: list
    which: np.ndarray | None = None
    cache: FactorizationCache | None = None
    _ab: np.ndarray = field(init=False, repr=False)
    _ipiv: np.ndarray = field(init=False, repr=False)
    _zeros: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis}")
        ks = {f.k for f in self.factors}
        ns = {f.n for f in self.factors}
        if len(ks) != 1 or len(ns) != 1:
            raise ValueError("all factorizations in a plan must share size and bandwidth")
        self._ab = np.stack([f.ab for f in self.factors])
        self._ipiv = np.stack([f.ipiv for f in self.factors])

    @property
    def n(self) -> int:
        return self.factors[0].n

    @property
    def k(self) -> int:
        return self.factors[0].k

    @property
    def is_constant(self) -> bool:
        return self.which is None

    @classmethod
    def constant(cls, axis: int, factorization: BandedFactorization) -> "SweepPlan":
        return cls(axis, [factorization])

    @classmethod
    def variable(cls, axis: int, M: BandedMatrix, S: BandedMatrix, coefficients,
                 cache: FactorizationCache | None = None) -> "SweepPlan":
        """Per-fiber systems ``M[i, :] + c[.., i, ..] S[i, :]`` along ``axis``.

        ``coefficients`` is indexed by the test-function triple.
        """
        c = np.asarray(coefficients, dtype=float)
        if c.ndim != 3 or c.shape[axis] != M.n:
            raise ValueError(f"coefficient shape {c.shape} does not match axis {axis} of size {M.n}")
        if cache is None:
            cache = FactorizationCache(M, S)
        rows = np.moveaxis(c, axis, -1)
        fiber_shape = rows.shape[:-1]
        rows = rows.reshape(-1, M.n)
        sigs, inverse = np.unique(rows, axis=0, return_inverse=True)
        factors, slot = [], {}
        for s, sig in enumerate(sigs):
            try:
                f = cache.get(sig)
            except SingularMatrixError as err:
                col = int(np.flatnonzero(inverse.ravel() == s)[0])
                raise SingularMatrixError(
                    f"singular fiber system on axis {axis}, column {col}: {err}", row=err.row) from err
            if id(f) not in slot:
                slot[id(f)] = len(factors)
                factors.append(f)
        remap = np.array([slot[id(cache.get(sig))] for sig in sigs], dtype=np.int64)
        which = np.ascontiguousarray(remap[inverse.ravel()].reshape(fiber_shape))
        return cls(axis, factors, which, cache)

    def fiber_factor(self, index) -> BandedFactorization:
        """Factorization used for the fiber at ``index`` (the non-axis indices)."""
        if self.which is None:
            return self.factors[0]
        return self.factors[int(self.which[tuple(index)])]


def _fiber_map(plan: SweepPlan, shape) -> np.ndarray:
    fshape = tuple(s for i, s in enumerate(shape) if i != plan.axis)
    if plan.which is not None:
        if plan.which.shape != fshape:
            raise ValueError("plan fiber map does not match the right-hand side")
        return plan.which
    zeros = plan._zeros.get(fshape)
    if zeros is None:
        zeros = plan._zeros[fshape] = np.zeros(fshape, dtype=np.int64)
    return zeros


def sweep_solve(plan: SweepPlan, rhs, overwrite: bool = False) -> np.ndarray:
    """Solve the banded system of every fiber along the plan's axis.

    With ``overwrite`` a C-contiguous float ``rhs`` is solved in place.
    """
    rhs = _check_tensor(rhs)
    axis = plan.axis
    if rhs.shape[axis] != plan.n:
        raise ValueError(f"plan of size {plan.n} does not match axis {axis} of length {rhs.shape[axis]}")
    which = _fiber_map(plan, rhs.shape)
    out = rhs if overwrite and rhs.flags.c_contiguous and rhs.flags.writeable else np.array(rhs, order="C")
    if out.size:
        _kernels.band_solve_axis(plan._ab, plan._ipiv, plan.k, which, out, axis)
    return out


def adi_solve_block(plans, rhs) -> np.ndarray:
    """Invert a Kronecker-structured system by consecutive sweeps.

    Plans are applied in the order given.  A plan with per-fiber coefficients
    does not commute with the others, so it must come first: the system is
    then ``V (A kron B)`` with ``V`` the row-modified factor, and solving
    ``V`` first is exact.
    """
    plans = list(plans)
    if sorted(p.axis for p in plans) != [0, 1, 2]:
        raise ValueError("need exactly one plan per axis")
    if any(not p.is_constant for p in plans[1:]):
        raise ValueError("only the first sweep may carry per-fiber coefficients")
    out = np.array(_check_tensor(rhs), order="C")
    for plan in plans:
        out = sweep_solve(plan, out, overwrite=True)
    return out
