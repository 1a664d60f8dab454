"""
Verification harness: manufactured Maxwell solutions, quadrature error norms,
a dense brute-force reference step and convergence / cost studies.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .maxwell import (EMState, Operators, SchemeConfig, assemble_operators,
                      l2_project, step, tensor_contract, with_tau)
from .splines import collocation_matrix, gauss_rule, make_open_knot_vector

__all__ = (
    "Mode",
    "ManufacturedSolution",
    "FieldEvaluator",
    "ErrorRow",
    "ErrorReport",
    "OracleSizeError",
    "error_norms",
    "dense_oracle_step",
    "simulate_manufactured",
    "convergence_study",
    "fit_order",
    "scaling_study",
    "divergence_norm",
)

GAMMA_A = 2.0 / math.sqrt(14.0)


@dataclass(frozen=True)
class Mode:
    family: int
    kappa: int = 1
    lam: int = 1
    weight: float = 1.0

    def __post_init__(self):
        if self.family not in (1, 2, 3):
            raise ValueError(f"family must be 1, 2 or 3, got {self.family}")
        if self.kappa == 0 or self.lam == 0:
            raise ValueError("kappa and lambda must be nonzero")

    def terms(self):
        """Separable terms ``(component, coeff, factors, time)``.

        ``factors[a]`` is ``(kind, wavenumber)`` along axis ``a`` with kind in
        ``"s"`` (sin), ``"c"`` (cos) or ``"1"``; ``time`` is ``"cos"``/``"sin"``.
        Components 0-2 are E, 3-5 are H.
        """
        k, l = self.kappa, self.lam
        w = math.hypot(k, l)
        one = ("1", 0)
        if self.family == 1:
            return [
                (0, 1.0, (one, ("s", k), ("s", l)), "cos"),
                (4, -l / w, (one, ("s", k), ("c", l)), "sin"),
                (5, k / w, (one, ("c", k), ("s", l)), "sin"),
            ]
        if self.family == 2:
            # H signs flipped relative to the printed formula, which does not
            # satisfy the Maxwell system; this is the cyclic image of family 1
            return [
                (1, 1.0, (("s", k), one, ("s", l)), "cos"),
                (3, l / w, (("s", k), one, ("c", l)), "sin"),
                (5, -k / w, (("c", k), one, ("s", l)), "sin"),
            ]
        return [
            (2, 1.0, (("s", k), ("s", l), one), "cos"),
            (3, -l / w, (("s", k), ("c", l), one), "sin"),
            (4, k / w, (("c", k), ("s", l), one), "sin"),
        ]

    @property
    def omega(self) -> float:
        return math.pi * math.hypot(self.kappa, self.lam)


def _factor(kind, k, x, deriv=False):
    a = k * math.pi
    if kind == "1":
        return np.zeros_like(x) if deriv else np.ones_like(x)
    if kind == "s":
        return a * np.cos(a * x) if deriv else np.sin(a * x)
    return -a * np.sin(a * x) if deriv else np.cos(a * x)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Weighted sum of plane-standing-wave modes; fields for eps = mu = 1."""

    modes: tuple
    gamma: float = 1.0

    @classmethod
    def u_A(cls) -> "ManufacturedSolution":
        return cls((Mode(1, 1, 1, 1.0), Mode(2, 1, 1, 2.0), Mode(3, 1, 1, 3.0)), GAMMA_A)

    @classmethod
    def single(cls, family, kappa=1, lam=1) -> "ManufacturedSolution":
        return cls((Mode(family, kappa, lam),), 1.0)

    def _terms(self):
        for m in self.modes:
            for comp, coeff, factors, tf in m.terms():
                yield comp, self.gamma * m.weight * coeff, factors, tf, m.omega

    @staticmethod
    def _time(tf, omega, t, deriv=False):
        if tf == "cos":
            return -omega * math.sin(omega * t) if deriv else math.cos(omega * t)
        return omega * math.cos(omega * t) if deriv else math.sin(omega * t)

    def evaluate(self, x, t: float, time_derivative: bool = False):
        """Six components at points ``x = (x1, x2, x3)`` (broadcastable arrays)."""
        x = [np.asarray(xi, dtype=float) for xi in x]
        shape = np.broadcast_shapes(*(xi.shape for xi in x))
        out = np.zeros((6,) + shape)
        for comp, coeff, factors, tf, om in self._terms():
            val = coeff * self._time(tf, om, t, time_derivative)
            for (kind, k), xi in zip(factors, x):
                val = val * _factor(kind, k, xi)
            out[comp] += val
        return out

    def partial(self, x, t: float, comp: int, axis: int):
        """Spatial partial derivative of one component."""
        x = [np.asarray(xi, dtype=float) for xi in x]
        shape = np.broadcast_shapes(*(xi.shape for xi in x))
        out = np.zeros(shape)
        for c, coeff, factors, tf, om in self._terms():
            if c != comp:
                continue
            val = coeff * self._time(tf, om, t)
            for a, ((kind, k), xi) in enumerate(zip(factors, x)):
                val = val * _factor(kind, k, xi, deriv=(a == axis))
            out += val
        return out

    def curl(self, x, t: float):
        """``(curl E, curl H)`` as two arrays of shape (3, ...)."""
        out = []
        for base in (0, 3):
            d = lambda c, a: self.partial(x, t, base + c, a)  # noqa: E731
            out.append(np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]))
        return out[0], out[1]

    def initial(self, which: str = "E"):
        """Callable for :func:`l2_project` giving E (or H) at t = 0."""
        sl = slice(0, 3) if which == "E" else slice(3, 6)
        return lambda X, Y, Z: self.evaluate((X, Y, Z), 0.0)[sl]


def eval_manufactured(ms: ManufacturedSolution, x, t):
    return ms.evaluate(x, t)


def analytic_curl(ms: ManufacturedSolution, x, t):
    return ms.curl(x, t)


class FieldEvaluator:
    """Spline fields and the exact solution on a tensor Gauss grid."""

    def __init__(self, spaces, q: int | None = None):
        self.spaces = tuple(spaces)
        rules = [gauss_rule(q or kv.degree + 2, kv) for kv in spaces]
        self.points = [r.points.ravel() for r in rules]
        w = [r.weights.ravel() for r in rules]
        self.weights = w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]
        self.B = [collocation_matrix(kv, x) for kv, x in zip(spaces, self.points)]
        self.D = [collocation_matrix(kv, x, 1) for kv, x in zip(spaces, self.points)]
        self.grid = np.meshgrid(*self.points, indexing="ij", sparse=True)

    def values(self, u):
        return tensor_contract(self.B, u)

    def partial(self, u, axis):
        mats = list(self.B)
        mats[axis] = self.D[axis]
        return tensor_contract(mats, u)

    def curl(self, F):
        d = self.partial
        return (d(F[2], 1) - d(F[1], 2), d(F[0], 2) - d(F[2], 0), d(F[1], 0) - d(F[0], 1))

    def sq_norm(self, comps):
        return float(sum(np.sum(self.weights * c * c) for c in comps))


@dataclass(frozen=True)
class ErrorRow:
    step: int
    t: float
    l2_E: float
    l2_H: float
    hcurl_E: float
    hcurl_H: float

    FIELDS = ("l2_E", "l2_H", "hcurl_E", "hcurl_H")


@dataclass
class ErrorReport:
    rows: list = field(default_factory=list)

    def append(self, row: ErrorRow):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def max_over_steps(self) -> dict:
        return {f: float(self.column(f).max()) for f in ErrorRow.FIELDS}

    def at_final(self) -> dict:
        last = self.rows[-1]
        return {f: getattr(last, f) for f in ErrorRow.FIELDS}


def error_norms(state: EMState, ms: ManufacturedSolution | None, spaces=None,
                evaluator: FieldEvaluator | None = None, step_index: int = 0) -> ErrorRow:
    """L2 and H(curl) errors of E and H against the exact solution at ``state.t``.

    ``ms=None`` compares against the zero field.
    """
    ev = evaluator or FieldEvaluator(spaces)
    t = state.t
    if ms is None:
        exact = np.zeros((6,) + tuple(len(p) for p in ev.points))
        cE = cH = np.zeros((3,) + exact.shape[1:])
    else:
        exact = ms.evaluate(ev.grid, t)
        cE, cH = ms.curl(ev.grid, t)
    out = []
    for base, coeffs, exact_curl in ((0, state.E, cE), (3, state.H, cH)):
        diff = [ev.values(u) - exact[base + c] for c, u in enumerate(coeffs)]
        curl_h = ev.curl(coeffs)
        cdiff = [ch - ce for ch, ce in zip(curl_h, exact_curl)]
        l2 = ev.sq_norm(diff)
        out.append((math.sqrt(l2), math.sqrt(l2 + ev.sq_norm(cdiff))))
    (l2E, hcE), (l2H, hcH) = out
    return ErrorRow(step_index, t, l2E, l2H, hcE, hcH)


def divergence_norm(state: EMState, spaces, eps=1.0, evaluator: FieldEvaluator | None = None) -> float:
    """L2 norm of div(eps E_h) for scalar eps (diagnostic only; never enforced)."""
    ev = evaluator or FieldEvaluator(spaces)
    div = sum(ev.partial(state.E[a], a) for a in range(3))
    return float(eps) * math.sqrt(ev.sq_norm([div]))


def simulate_manufactured(cfg: SchemeConfig, ms: ManufacturedSolution, every: int = 1,
                          ops: Operators | None = None, q: int | None = None):
    """Project the exact initial data, march to T, and record errors.

    Errors are sampled at step 0, every ``every`` steps and at the last step;
    ``every=0`` samples only the first and last levels.
    """
    ops = ops or assemble_operators(cfg)
    ev = FieldEvaluator(cfg.spaces, q)
    state = EMState(l2_project(ms.initial("E"), ops, "E"),
                    l2_project(ms.initial("H"), ops, "H"), 0.0)
    report = ErrorReport()
    report.append(error_norms(state, ms, evaluator=ev, step_index=0))
    for n in range(1, cfg.n_steps + 1):
        state = step(state, ops)
        if n == cfg.n_steps or (every and n % every == 0):
            report.append(error_norms(state, ms, evaluator=ev, step_index=n))
    return state, report


class OracleSizeError(RuntimeError):
    pass


ORACLE_LIMIT = 2000


def _dense_1d(kv, q=None):
    rule = gauss_rule(q or kv.degree + 1, kv)
    x, w = rule.points.ravel(), rule.weights.ravel()
    B = collocation_matrix(kv, x)
    D = collocation_matrix(kv, x, 1)
    W = w[:, None]
    return {"M": B.T @ (W * B), "S": D.T @ (W * D), "A": B.T @ (W * D), "B": D.T @ (W * B)}


def dense_oracle_step(cfg: SchemeConfig, state: EMState) -> EMState:
    """One time step by explicit Kronecker expansion and dense solves.

    Independent of the sweep machinery: 1D matrices come from dense collocation
    products, the 3N x 3N block systems are formed explicitly with the
    per-test-function coefficients as row scalings, and the pec mode deletes
    constrained rows and columns instead of modifying 1D factors.
    """
    shape = cfg.shape
    N = int(np.prod(shape))
    if 3 * N > ORACLE_LIMIT:
        raise OracleSizeError(f"dense oracle refuses {3 * N} unknowns per block system (limit {ORACLE_LIMIT})")
    mats = [_dense_1d(kv) for kv in cfg.spaces]

    def kr(*names):
        out = np.ones((1, 1))
        for ax, nm in enumerate(names):
            out = np.kron(out, mats[ax][nm])
        return out

    Z = np.zeros((N, N))
    dx = [kr("A", "M", "M"), kr("M", "A", "M"), kr("M", "M", "A")]
    MMM = kr("M", "M", "M")
    Mb = np.block([[MMM, Z, Z], [Z, MMM, Z], [Z, Z, MMM]])
    K1 = np.block([[kr("M", "S", "M"), Z, Z], [Z, kr("M", "M", "S"), Z], [Z, Z, kr("S", "M", "M")]])
    K2 = np.block([[kr("M", "M", "S"), Z, Z], [Z, kr("S", "M", "M"), Z], [Z, Z, kr("M", "S", "M")]])
    R1 = np.block([[Z, kr("A", "B", "M"), Z], [Z, Z, kr("M", "A", "B")], [kr("B", "M", "A"), Z, Z]])
    R2 = np.block([[Z, Z, kr("A", "M", "B")], [kr("B", "A", "M"), Z, Z], [Z, kr("M", "B", "A"), Z]])
    # curl = C1 - C2 from the continuous operators
    C1 = np.block([[Z, Z, dx[1]], [dx[2], Z, Z], [Z, dx[0], Z]])
    C2 = np.block([[Z, dx[2], Z], [Z, Z, dx[0]], [dx[1], Z, Z]])
    C = C1 - C2

    eps, mu = cfg.material_arrays()
    eps = np.tile(np.broadcast_to(eps, shape).ravel(), 3)
    mu = np.tile(np.broadcast_to(mu, shape).ravel(), 3)
    tau = cfg.tau
    aE = (tau / (2 * eps))[:, None]
    aH = (tau / (2 * mu))[:, None]
    cc = (tau * tau / (4 * eps * mu))[:, None]

    free = np.ones(3 * N, dtype=bool)
    if cfg.boundary == "pec":
        idx = np.indices(shape).reshape(3, -1)
        for comp in range(3):
            fixed = np.zeros(N, dtype=bool)
            for ax in range(3):
                if ax != comp:
                    fixed |= (idx[ax] == 0) | (idx[ax] == shape[ax] - 1)
            free[comp * N:(comp + 1) * N] = ~fixed

    def solve_E(lhs, rhs):
        out = np.zeros(3 * N)
        out[free] = np.linalg.solve(lhs[np.ix_(free, free)], rhs[free])
        return out

    E = np.concatenate([e.ravel() for e in state.E])
    H = np.concatenate([h.ravel() for h in state.H])
    E_half = solve_E(Mb + cc * K1, Mb @ E + aE[:, 0] * (C @ H) + cc[:, 0] * (R1 @ E))
    H_half = np.linalg.solve(Mb, Mb @ H + aH[:, 0] * (-(C1 @ E) + C2 @ E_half))
    E_new = solve_E(Mb + cc * K2, Mb @ E_half + aE[:, 0] * (C @ H_half) + cc[:, 0] * (R2 @ E_half))
    H_new = np.linalg.solve(Mb, Mb @ H_half + aH[:, 0] * (C2 @ E_half - C1 @ E_new))

    split = lambda v: tuple(v[c * N:(c + 1) * N].reshape(shape) for c in range(3))  # noqa: E731
    return EMState(split(E_new), split(H_new), state.t + tau)


def fit_order(taus, errors) -> float:
    """Least-squares slope of log(error) against log(tau)."""
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(taus) < 2:
        return float("nan")
    return float(np.polyfit(np.log(taus), np.log(errors), 1)[0])


def convergence_study(cfg: SchemeConfig, taus, ms: ManufacturedSolution | None = None,
                      every: int = 0):
    """Run one simulation per time step size and fit temporal orders.

    Returns ``(rows, orders)``: rows hold the error at T and the max over the
    sampled levels; ``orders`` maps each norm to its fitted slope at T.
    """
    ms = ms or ManufacturedSolution.u_A()
    taus = [float(t) for t in taus]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly descending")
    T = cfg.T
    rows = []
    for tau in taus:
        n = int(round(T / tau))
        if abs(n * tau - T) > 1e-12 * max(1.0, T):
            raise ValueError(f"tau={tau} does not divide T={T}")
        _, report = simulate_manufactured(with_tau(cfg, tau, n), ms, every=every)
        rows.append({"tau": tau, "n_steps": n, "at_T": report.at_final(), "max": report.max_over_steps()})
    orders = {}
    if len(rows) > 1:
        for f in ErrorRow.FIELDS:
            orders[f] = fit_order(taus, [r["at_T"][f] for r in rows])
    return rows, orders


def scaling_study(sizes, tau: float = 0.01, steps: int = 3, degree: int = 2,
                  coefficients=None, warmup: int = 1, repeats: int = 1):
    """Seconds per step for each mesh size (elements per axis).

    ``coefficients(spaces)`` may build a ``CoefficientField`` for the variable
    path.  Timing is the minimum over ``repeats`` of the mean over ``steps``.
    """
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be ascending")
    rows = []
    rng = np.random.default_rng(0)
    for ne in sizes:
        kv = make_open_knot_vector(ne, degree)
        spaces = (kv, kv, kv)
        eps = coefficients(spaces) if coefficients is not None else 1.0
        cfg = SchemeConfig(tau=tau, spaces=spaces, eps=eps)
        ops = assemble_operators(cfg)
        shape = cfg.shape
        fields = [rng.standard_normal(shape) for _ in range(6)]
        state = EMState(tuple(fields[:3]), tuple(fields[3:]))
        for _ in range(warmup):
            state = step(state, ops)
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(steps):
                state = step(state, ops)
            best = min(best, (time.perf_counter() - t0) / steps)
        rows.append({"elements": ne, "N": int(np.prod(shape)), "seconds_per_step": best})
    for prev, row in zip(rows, rows[1:]):
        row["ratio"] = row["seconds_per_step"] / prev["seconds_per_step"]
    return rows
