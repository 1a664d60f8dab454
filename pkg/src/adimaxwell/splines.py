"""
One-dimensional B-spline spaces: knot vectors, Cox-de Boor evaluation with
first derivatives, Greville abscissae and element-wise Gauss quadrature.

Basis evaluation follows Algorithms A2.1-A2.3 of Piegl & Tiller,
"The NURBS Book", vectorized over arrays of evaluation points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = (
    "KnotVector",
    "BasisEval",
    "QuadratureRule",
    "make_open_knot_vector",
    "find_spans",
    "basis_funs",
    "eval_basis",
    "collocation_matrix",
    "greville_points",
    "gauss_rule",
)


class DomainError(ValueError):
    """Evaluation point outside the parametric domain."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped (open) knot vector of a B-spline space of degree ``degree``."""

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        t = np.asarray(self.knots, dtype=float)
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        if t.ndim != 1 or len(t) < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be nondecreasing")
        if np.any(t[: p + 1] != t[0]) or np.any(t[-p - 1:] != t[-1]):
            raise ValueError(f"end knots must be repeated exactly {p + 1} times")
        if t[p + 1] == t[0] and len(t) > 2 * (p + 1):
            raise ValueError("first knot repeated more than p+1 times")
        if t[-p - 2] == t[-1] and len(t) > 2 * (p + 1):
            raise ValueError("last knot repeated more than p+1 times")
        _, counts = np.unique(t[p + 1: len(t) - p - 1], return_counts=True)
        if np.any(counts > p):
            raise ValueError("interior knot multiplicity exceeds the degree")
        t.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", t)

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def n_elements(self) -> int:
        return len(self.breakpoints) - 1

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, n_basis={self.n_basis}, n_elements={self.n_elements})"


@dataclass(frozen=True)
class BasisEval:
    """Nonzero basis functions at one point: indices ``span-p .. span``."""

    span: int
    values: np.ndarray
    derivatives: np.ndarray

    @property
    def first_index(self) -> int:
        return self.span - (len(self.values) - 1)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss points and weights per element, arrays of shape (n_elements, q)."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.points.shape[1]


def make_open_knot_vector(n_elements: int, p: int, continuity: int | None = None,
                          domain: tuple[float, float] = (0.0, 1.0)) -> KnotVector:
    """Uniform clamped knot vector; ``continuity`` defaults to C^{p-1}."""
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    if continuity is None:
        continuity = p - 1
    if not 0 <= continuity <= p - 1:
        raise ValueError(f"continuity must lie in [0, {p - 1}], got {continuity}")
    a, b = domain
    breaks = np.linspace(a, b, n_elements + 1)
    mult = p - continuity
    knots = np.concatenate([
        np.full(p + 1, breaks[0]),
        np.repeat(breaks[1:-1], mult),
        np.full(p + 1, breaks[-1]),
    ])
    return KnotVector(p, knots)


def find_spans(kv: KnotVector, x) -> np.ndarray:
    """Knot span index of every point; the right endpoint maps to the last span."""
    x = np.asarray(x, dtype=float)
    a, b = kv.domain
    if np.any((x < a) | (x > b)):
        raise DomainError(f"evaluation point outside [{a}, {b}]")
    p, t = kv.degree, kv.knots
    spans = np.searchsorted(t, x, side="right") - 1
    return np.clip(spans, p, kv.n_basis - 1)


def _nonzero_funs(t, p, spans, x):
    # Cox-de Boor triangle, vectorized over points (A2.2).
    npts = x.shape[0]
    N = np.zeros((npts, p + 1))
    N[:, 0] = 1.0
    left = np.empty((npts, p + 1))
    right = np.empty((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[spans + 1 - j]
        right[:, j] = t[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def basis_funs(kv: KnotVector, x, spans=None):
    """Values and first derivatives of the p+1 nonzero functions at each point.

    Returns ``(spans, values, derivatives)`` where the value arrays have shape
    ``(len(x), p+1)`` and column ``r`` belongs to function ``span - p + r``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if spans is None:
        spans = find_spans(kv, x)
    p, t = kv.degree, kv.knots
    vals = _nonzero_funs(t, p, spans, x)
    low = _nonzero_funs(t, p - 1, spans, x) if p > 1 else np.ones((len(x), 1))
    ders = np.zeros_like(vals)
    for r in range(p + 1):
        i = spans - p + r
        if r >= 1:
            den = t[i + p] - t[i]
            ders[:, r] += p * np.divide(low[:, r - 1], den, out=np.zeros_like(den), where=den > 0)
        if r <= p - 1:
            den = t[i + p + 1] - t[i + 1]
            ders[:, r] -= p * np.divide(low[:, r], den, out=np.zeros_like(den), where=den > 0)
    return spans, vals, ders


def eval_basis(kv: KnotVector, x: float) -> BasisEval:
    spans, vals, ders = basis_funs(kv, [x])
    return BasisEval(int(spans[0]), vals[0], ders[0])


def collocation_matrix(kv: KnotVector, x, derivative: int = 0) -> np.ndarray:
    """Dense matrix ``B[q, i] = B_i(x_q)`` (or its first derivative)."""
    if derivative not in (0, 1):
        raise ValueError("only values and first derivatives are supported")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans, vals, ders = basis_funs(kv, x)
    src = vals if derivative == 0 else ders
    out = np.zeros((len(x), kv.n_basis))
    rows = np.arange(len(x))[:, None]
    cols = spans[:, None] - kv.degree + np.arange(kv.degree + 1)[None, :]
    out[rows, cols] = src
    return out


def greville_points(kv: KnotVector) -> np.ndarray:
    p, t = kv.degree, kv.knots
    return np.array([t[i + 1: i + p + 1].mean() for i in range(kv.n_basis)])


def gauss_rule(q: int, kv: KnotVector) -> QuadratureRule:
    """Gauss-Legendre rule with ``q`` points on every nonempty element."""
    if q < 1:
        raise ValueError(f"need at least one quadrature point, got {q}")
    xi, wi = np.polynomial.legendre.leggauss(q)
    br = kv.breakpoints
    a, b = br[:-1, None], br[1:, None]
    points = 0.5 * (a + b) + 0.5 * (b - a) * xi[None, :]
    weights = 0.5 * (b - a) * wi[None, :]
    return QuadratureRule(points, weights)
