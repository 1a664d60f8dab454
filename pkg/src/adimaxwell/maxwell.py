"""
Two-substep alternating-direction implicit scheme for the Maxwell system on
the unit cube, discretized with tensor-product B-splines.

The curl is split as ``curl = C1 - C2`` with

    C1 = [[0, 0, d2], [d3, 0, 0], [0, d1, 0]]
    C2 = [[0, d3, 0], [0, 0, d1], [d2, 0, 0]]

and one time step is

    (M + c K1) E^{n+1/2} = M E^n + a_E C H^n + c R1 E^n
    M H^{n+1/2} = M H^n - a_H C1 E^n + a_H C2 E^{n+1/2}
    (M + c K2) E^{n+1} = M E^{n+1/2} + a_E C H^{n+1/2} + c R2 E^{n+1/2}
    M H^{n+1} = M H^{n+1/2} + a_H C2 E^{n+1/2} - a_H C1 E^{n+1}

with ``a_E = tau/(2 eps)``, ``a_H = tau/(2 mu)``, ``c = tau^2/(4 eps mu)``.
Every block is a Kronecker product of 1D mass (M), stiffness (S) and
advection (A: derivative on the trial function, B = A^T) matrices, so each
E component is solved with three banded sweeps.  K1 stiffens E1, E2, E3
along y, z, x; K2 along z, x, y.

Spatially varying materials enter row-wise: the coefficients above become
arrays indexed by the test-function triple.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import typed as nb_typed

from . import _kernels
from .kron import (FactorizationCache, SweepPlan, _fiber_map, adi_solve_block, kron_apply)
from .linalg1d import (BandedMatrix, MatrixKind, assemble_1d, factorize)
from .materials import CoefficientField
from .splines import KnotVector, collocation_matrix, gauss_rule

__all__ = (
    "EMState",
    "SchemeConfig",
    "Operators",
    "STIFFENED_AXIS",
    "assemble_operators",
    "rhs_substep1",
    "rhs_substep2",
    "solve_E",
    "update_H",
    "step",
    "run",
    "l2_project",
    "tensor_contract",
    "evaluate_field",
    "zero_state",
)

# stiffened axis per E component: substep -> (E1, E2, E3)
STIFFENED_AXIS = {1: (1, 2, 0), 2: (2, 0, 1)}


@dataclass(frozen=True)
class EMState:
    E: tuple
    H: tuple
    t: float = 0.0

    def __post_init__(self):
        E = tuple(np.asarray(e, dtype=float) for e in self.E)
        H = tuple(np.asarray(h, dtype=float) for h in self.H)
        if len(E) != 3 or len(H) != 3:
            raise ValueError("a state holds three E and three H components")
        shapes = {a.shape for a in E + H}
        if len(shapes) != 1 or len(next(iter(shapes))) != 3:
            raise ValueError("all six components must share one rank-3 shape")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "H", H)

    @property
    def shape(self):
        return self.E[0].shape

    @property
    def fields(self):
        return self.E + self.H

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.fields)


def zero_state(shape, t=0.0) -> EMState:
    z = [np.zeros(shape) for _ in range(6)]
    return EMState(tuple(z[:3]), tuple(z[3:]), t)


@dataclass(frozen=True)
class SchemeConfig:
    """Time step, materials and spline spaces of a simulation.

    ``eps`` and ``mu`` are positive scalars, or a ``CoefficientField`` giving
    both per test function (in which case the ``mu`` argument is ignored).
    ``boundary="pec"`` (default) removes the boundary B-splines of tangential
    E components, so ``E x n = 0`` holds exactly; ``"natural"`` leaves every
    function free.  ``tau = 0`` is accepted for operator inspection only.
    """

    tau: float
    spaces: tuple
    eps: float | CoefficientField = 1.0
    mu: float = 1.0
    T: float | None = None
    n_steps: int | None = None
    boundary: str = "pec"
    delta: float = 1e-12

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be nonnegative and finite, got {self.tau}")
        if len(self.spaces) != 3 or not all(isinstance(s, KnotVector) for s in self.spaces):
            raise ValueError("spaces must be three KnotVectors")
        if self.boundary not in ("natural", "pec"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if isinstance(self.eps, CoefficientField):
            if self.eps.shape != self.shape:
                raise ValueError(f"coefficient field shape {self.eps.shape} != space dims {self.shape}")
        else:
            for name in ("eps", "mu"):
                v = float(getattr(self, name))
                if not v >= self.delta:
                    raise ValueError(f"{name} must be >= {self.delta}, got {v}")
        if self.n_steps is not None and (int(self.n_steps) != self.n_steps or self.n_steps < 0):
            raise ValueError(f"n_steps must be a nonnegative integer, got {self.n_steps}")
        if self.tau == 0 and (self.T or self.n_steps):
            raise ValueError("tau must be positive to reach a final time")
        if self.T is not None and self.tau == 0:
            object.__setattr__(self, "n_steps", 0)
        if self.T is not None and self.n_steps is None:
            object.__setattr__(self, "n_steps", int(round(self.T / self.tau)))
        if self.T is None and self.n_steps is not None:
            object.__setattr__(self, "T", self.n_steps * self.tau)
        if self.T is not None and abs(self.n_steps * self.tau - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ValueError(f"n_steps*tau = {self.n_steps * self.tau} does not reach T = {self.T}")

    @property
    def shape(self):
        return tuple(s.n_basis for s in self.spaces)

    @property
    def variable(self) -> bool:
        return isinstance(self.eps, CoefficientField)

    def material_arrays(self):
        """``(eps, mu)`` as scalars or per-test-function arrays."""
        if self.variable:
            return self.eps.eps, self.eps.mu
        return float(self.eps), float(self.mu)

    @classmethod
    def uniform(cls, n_elements: int, degree: int, tau: float, continuity=None, **kw):
        from .splines import make_open_knot_vector
        kv = make_open_knot_vector(n_elements, degree, continuity)
        return cls(tau=tau, spaces=(kv, kv, kv), **kw)


@dataclass(eq=False)
class Operators:
    """1D matrices, sweep plans and material coefficients of one scheme."""

    cfg: SchemeConfig
    M: tuple
    S: tuple
    A: tuple
    B: tuple
    a_E: object
    a_H: object
    c: object
    mass_plans_E: tuple
    mass_plans_H: tuple
    e_plans: dict
    masks: tuple
    workers: int = 1
    _pool: ThreadPoolExecutor | None = field(default=None, repr=False)
    _packed: tuple | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.cfg.shape

    @property
    def tau(self):
        return self.cfg.tau

    def deriv(self, axis: int, u):
        """Galerkin derivative block: A on ``axis``, mass on the other two."""
        mats = [self.M[0], self.M[1], self.M[2]]
        mats[axis] = self.A[axis]
        return kron_apply(*mats, u)

    def mass(self, u):
        return kron_apply(self.M[0], self.M[1], self.M[2], u)

    def map3(self, fn, *args):
        if self.workers > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(self.workers)
            return tuple(self._pool.map(fn, *args))
        return tuple(map(fn, *args))


def _dirichlet_rows(A: BandedMatrix) -> BandedMatrix:
    """Replace the first and last rows by identity rows."""
    data = A.data.copy()
    data[0] = 0.0
    data[-1] = 0.0
    data[0, A.k] = 1.0
    data[-1, A.k] = 1.0
    return BandedMatrix(data, A.k)


def _constrained_axes(comp: int, boundary: str):
    # tangential E_comp vanishes on faces normal to the other two axes
    if boundary != "pec":
        return ()
    return tuple(a for a in range(3) if a != comp)


def assemble_operators(cfg: SchemeConfig, workers: int = 1) -> Operators:
    spaces = cfg.spaces
    rules = [gauss_rule(kv.degree + 1, kv) for kv in spaces]
    M = tuple(assemble_1d(kv, MatrixKind.MASS, r) for kv, r in zip(spaces, rules))
    S = tuple(assemble_1d(kv, MatrixKind.STIFFNESS, r) for kv, r in zip(spaces, rules))
    A = tuple(assemble_1d(kv, MatrixKind.ADVECTION_TRIAL_DERIV, r) for kv, r in zip(spaces, rules))
    B = tuple(assemble_1d(kv, MatrixKind.ADVECTION_TEST_DERIV, r) for kv, r in zip(spaces, rules))

    eps, mu = cfg.material_arrays()
    if cfg.variable:
        eps = np.asarray(eps, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if np.any(eps < cfg.delta) or np.any(mu < cfg.delta):
            raise ValueError("material values must be positive")
    tau = cfg.tau
    a_E = tau / (2.0 * eps)
    a_H = tau / (2.0 * mu)
    c = tau * tau / (4.0 * eps * mu)
    shape = cfg.shape

    def transform_for(comp, axis):
        return _dirichlet_rows if axis in _constrained_axes(comp, cfg.boundary) else None

    def mass_factor(comp, axis):
        Mx = M[axis]
        t = transform_for(comp, axis)
        return factorize(t(Mx) if t else Mx)

    mass_plans_E = tuple(
        tuple(SweepPlan.constant(ax, mass_factor(comp, ax)) for ax in range(3)) for comp in range(3))
    mass_plans_H = tuple(
        tuple(SweepPlan.constant(ax, factorize(M[ax])) for ax in range(3)) for _ in range(3))

    caches = {}
    e_plans = {}
    for substep, axes in STIFFENED_AXIS.items():
        per_comp = []
        for comp, ax in enumerate(axes):
            key = (ax, transform_for(comp, ax))
            cache = caches.get(key)
            if cache is None:
                cache = caches[key] = FactorizationCache(M[ax], S[ax], transform_for(comp, ax))
            if np.ndim(c) == 0:
                stiff = SweepPlan.constant(ax, cache.get(np.full(shape[ax], c)))
            else:
                stiff = SweepPlan.variable(ax, M[ax], S[ax], c, cache=cache)
            others = [mass_plans_E[comp][a] for a in range(3) if a != ax]
            per_comp.append((stiff, *others))
        e_plans[substep] = tuple(per_comp)

    masks = []
    for comp in range(3):
        mask = np.zeros(shape, dtype=bool)
        for ax in _constrained_axes(comp, cfg.boundary):
            idx = [slice(None)] * 3
            idx[ax] = [0, shape[ax] - 1]
            mask[tuple(idx)] = True
        masks.append(mask if mask.any() else None)

    return Operators(cfg, M, S, A, B, a_E, a_H, c, mass_plans_E, mass_plans_H,
                     e_plans, tuple(masks), workers=max(1, int(workers)))


def _curl_H(ops: Operators, H):
    """Galerkin (C1 - C2) H, one tensor per test component."""
    d = ops.deriv
    return (d(1, H[2]) - d(2, H[1]),
            d(2, H[0]) - d(0, H[2]),
            d(0, H[1]) - d(1, H[0]))


def C1_apply(ops: Operators, E):
    d = ops.deriv
    return (d(1, E[2]), d(2, E[0]), d(0, E[1]))


def C2_apply(ops: Operators, E):
    d = ops.deriv
    return (d(2, E[1]), d(0, E[2]), d(1, E[0]))


def R1_apply(ops: Operators, E):
    M, A, B = ops.M, ops.A, ops.B
    return (kron_apply(A[0], B[1], M[2], E[1]),
            kron_apply(M[0], A[1], B[2], E[2]),
            kron_apply(B[0], M[1], A[2], E[0]))


def R2_apply(ops: Operators, E):
    M, A, B = ops.M, ops.A, ops.B
    return (kron_apply(A[0], M[1], B[2], E[2]),
            kron_apply(B[0], A[1], M[2], E[0]),
            kron_apply(M[0], B[1], A[2], E[1]))


def _rhs(ops: Operators, E, H, R):
    CH = _curl_H(ops, H)
    RE = R(ops, E)
    out = []
    for comp in range(3):
        r = ops.mass(E[comp]) + ops.a_E * CH[comp] + ops.c * RE[comp]
        if ops.masks[comp] is not None:
            r[ops.masks[comp]] = 0.0
        out.append(r)
    return tuple(out)


def rhs_substep1(state: EMState, ops: Operators):
    """``M E^n + a_E C H^n + c R1 E^n``."""
    _check_state(state, ops)
    return _rhs(ops, state.E, state.H, R1_apply)


def rhs_substep2(state: EMState, ops: Operators):
    """``M E^{n+1/2} + a_E C H^{n+1/2} + c R2 E^{n+1/2}``."""
    _check_state(state, ops)
    return _rhs(ops, state.E, state.H, R2_apply)


def solve_E(rhs, ops: Operators, substep: int):
    plans = ops.e_plans[substep]
    return ops.map3(adi_solve_block, plans, rhs)


def _mass_solve_H(ops: Operators, rhs):
    return ops.map3(adi_solve_block, ops.mass_plans_H, rhs)


def update_H(state: EMState, E_new, ops: Operators, substep: int, C2_new=None):
    """H after substep 1 or 2.

    Substep 1: ``M H' = M H - a_H C1 E + a_H C2 E'``;
    substep 2: ``M H' = M H + a_H C2 E - a_H C1 E'`` (``E`` = ``state.E``).
    ``C2_new`` may pass a precomputed ``C2 E'`` (substep 1) or ``C2 E``
    (substep 2).
    """
    if substep == 1:
        c1 = C1_apply(ops, state.E)
        c2 = C2_new if C2_new is not None else C2_apply(ops, E_new)
        incr = tuple(b - a for a, b in zip(c1, c2))
    elif substep == 2:
        c2 = C2_new if C2_new is not None else C2_apply(ops, state.E)
        c1 = C1_apply(ops, E_new)
        incr = tuple(a - b for a, b in zip(c2, c1))
    else:
        raise ValueError(f"substep must be 1 or 2, got {substep}")
    dH = _mass_solve_H(ops, tuple(ops.a_H * r for r in incr))
    return tuple(h + d for h, d in zip(state.H, dH))


def _typed(arrays):
    out = nb_typed.List()
    for a in arrays:
        out.append(a)
    return out


def _plan_arrays(plans, shape):
    abs_ = _typed(np.ascontiguousarray(plan._ab) for plan in plans)
    ipivs = _typed(np.ascontiguousarray(plan._ipiv) for plan in plans)
    whichs = _typed(np.ascontiguousarray(_fiber_map(plan, shape), dtype=np.int64) for plan in plans)
    axes = np.array([plan.axis for plan in plans], dtype=np.int64)
    return abs_, ipivs, whichs, axes


def _pack(ops: Operators) -> tuple:
    # typed lists keep kernel dispatch cheap: their numba type is cached, so
    # calls do not re-inspect every array
    if ops._packed is None:
        shape = ops.shape
        def coef(v):
            return float(v) if np.ndim(v) == 0 else np.ascontiguousarray(v, dtype=float)
        masks = _typed(m if m is not None else np.zeros(shape, dtype=bool) for m in ops.masks)
        e_plans = [p for sub in (1, 2) for comp in ops.e_plans[sub] for p in comp]
        h_plans = [p for comp in ops.mass_plans_H for p in comp]
        bands = [np.ascontiguousarray(m.data) for m in (*ops.M, *ops.A, *ops.B)]
        ops._packed = (
            _typed(bands[0:3]), _typed(bands[3:6]), _typed(bands[6:9]),
            tuple(m.k for m in ops.M),
            coef(ops.a_E), coef(ops.a_H), coef(ops.c), masks,
            *_plan_arrays(e_plans, shape), *_plan_arrays(h_plans, shape))
    return ops._packed


def _step_composed(state: EMState, ops: Operators) -> EMState:
    """Reference step built from the public substep operations."""
    E_half = solve_E(rhs_substep1(state, ops), ops, 1)
    C2_half = C2_apply(ops, E_half)
    H_half = update_H(state, E_half, ops, 1, C2_new=C2_half)
    half = EMState(E_half, H_half, state.t + 0.5 * ops.tau)
    E_new = solve_E(rhs_substep2(half, ops), ops, 2)
    H_new = update_H(half, E_new, ops, 2, C2_new=C2_half)
    return EMState(E_new, H_new, state.t + ops.tau)


def step(state: EMState, ops: Operators) -> EMState:
    """Advance one full time step (two substeps).

    With a single worker both substeps run as compiled kernels; the result is
    the same as chaining ``rhs_substep1``, ``solve_E`` and ``update_H``.
    """
    _check_state(state, ops)
    if ops.workers > 1:
        return _step_composed(state, ops)
    packed = _pack(ops)
    E = tuple(np.ascontiguousarray(e, dtype=float) for e in state.E)
    H = tuple(np.ascontiguousarray(h, dtype=float) for h in state.H)
    E_new, H_new = _kernels.fused_step(*E, *H, *packed)
    return EMState(E_new, H_new, state.t + ops.tau)


def run(state: EMState, ops: Operators, n_steps: int, observer=None) -> EMState:
    """March ``n_steps``; ``observer(step_index, state)`` sees every level incl. the first."""
    if observer is not None:
        observer(0, state)
    for n in range(1, n_steps + 1):
        state = step(state, ops)
        if observer is not None:
            observer(n, state)
    return state


def _check_state(state: EMState, ops: Operators):
    if state.shape != ops.shape:
        raise ValueError(f"state shape {state.shape} does not match operators {ops.shape}")


def tensor_contract(mats, u):
    """``out[a, b, c] = sum Mx[a, i] My[b, j] Mz[c, k] u[i, j, k]`` with dense factors."""
    out = np.asarray(u, dtype=float)
    out = np.tensordot(mats[0], out, axes=(1, 0))
    out = np.tensordot(mats[1], out, axes=(1, 1)).transpose(1, 0, 2)
    out = np.tensordot(out, mats[2], axes=(2, 1))
    return out


def evaluate_field(u, spaces, points, derivative=(0, 0, 0)):
    """Values (or a first partial derivative) of a spline field on a tensor grid."""
    mats = [collocation_matrix(kv, x, d) for kv, x, d in zip(spaces, points, derivative)]
    return tensor_contract(mats, u)


def l2_project(f, ops: Operators, field: str = "E", q: int | None = None):
    """Coefficients of the L2 projection of a 3-vector field.

    ``f(x, y, z)`` receives broadcastable coordinate arrays and returns three
    arrays (or scalars).  For ``field="E"`` under the pec mode, the projection
    is onto the constrained space.
    """
    spaces = ops.cfg.spaces
    rules = [gauss_rule(q or kv.degree + 2, kv) for kv in spaces]
    pts = [r.points.ravel() for r in rules]
    wts = [r.weights.ravel() for r in rules]
    loads_mats = [collocation_matrix(kv, x).T * w[None, :] for kv, x, w in zip(spaces, pts, wts)]
    X, Y, Z = np.meshgrid(*pts, indexing="ij", sparse=True)
    vals = f(X, Y, Z)
    grid = (len(pts[0]), len(pts[1]), len(pts[2]))
    plans = ops.mass_plans_E if field == "E" else ops.mass_plans_H
    out = []
    for comp in range(3):
        F = np.broadcast_to(np.asarray(vals[comp], dtype=float), grid)
        load = tensor_contract(loads_mats, F)
        if field == "E" and ops.masks[comp] is not None:
            load[ops.masks[comp]] = 0.0
        out.append(adi_solve_block(plans[comp], load))
    return tuple(out)


def with_tau(cfg: SchemeConfig, tau: float, n_steps: int | None = None) -> SchemeConfig:
    return replace(cfg, tau=tau, n_steps=n_steps, T=cfg.T if n_steps is None else n_steps * tau)
