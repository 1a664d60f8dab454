"""
Voxel densities to per-test-function material coefficients.

Densities (0-255) are classified as air, tissue or skull; each test B-spline
takes the material of the voxel nearest to its Greville point.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np

from .splines import KnotVector, greville_points

__all__ = (
    "VoxelFormatError",
    "MaterialClass",
    "VoxelGrid",
    "MaterialTable",
    "CoefficientField",
    "load_voxels",
    "save_voxels",
    "load_pgm_stack",
    "classify",
    "classify_array",
    "sample_coefficients",
    "synthetic_phantom",
)

TISSUE_DENSITY = 120
SKULL_DENSITY = 255


class VoxelFormatError(ValueError):
    pass


class MaterialClass(enum.IntEnum):
    AIR = 0
    TISSUE = 1
    SKULL = 2


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Densities indexed ``[ix, iy, iz]``; the grid spans the unit cube."""

    densities: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.densities)
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError(f"voxel grid must be a nonempty rank-3 array, got shape {d.shape}")
        if d.dtype != np.uint8:
            if np.any((d < 0) | (d > 255)):
                raise ValueError("densities must lie in 0..255")
            d = d.astype(np.uint8)
        object.__setattr__(self, "densities", d)

    @property
    def dims(self):
        return self.densities.shape

    @property
    def spacing(self):
        return tuple(1.0 / n for n in self.dims)


@dataclass(frozen=True)
class MaterialTable:
    eps: dict = field(default_factory=lambda: {c: 1.0 for c in MaterialClass})
    mu: dict = field(default_factory=lambda: {c: 1.0 for c in MaterialClass})
    t_air: float = 1
    t_skull: float = 240
    delta: float = 1e-12

    def __post_init__(self):
        for name in ("eps", "mu"):
            table = {MaterialClass(k) if not isinstance(k, str) else MaterialClass[k.upper()]: float(v)
                     for k, v in getattr(self, name).items()}
            missing = set(MaterialClass) - set(table)
            if missing:
                raise ValueError(f"{name} missing for {sorted(m.name for m in missing)}")
            bad = {k.name: v for k, v in table.items() if not v >= self.delta}
            if bad:
                raise ValueError(f"{name} must be >= {self.delta}: {bad}")
            object.__setattr__(self, name, table)
        if not self.t_air < self.t_skull:
            raise ValueError(f"t_air ({self.t_air}) must be below t_skull ({self.t_skull})")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Permittivity and permeability per test-function triple ``(r, s, t)``."""

    eps: np.ndarray
    mu: np.ndarray
    delta: float = 1e-12

    def __post_init__(self):
        eps = np.array(self.eps, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if eps.ndim != 3 or eps.shape != mu.shape:
            raise ValueError("eps and mu must be rank-3 arrays of equal shape")
        if not (np.all(eps >= self.delta) and np.all(mu >= self.delta)):
            raise ValueError(f"material values must be >= {self.delta}")
        eps.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "mu", mu)

    @property
    def shape(self):
        return self.eps.shape

    @classmethod
    def uniform(cls, shape, eps=1.0, mu=1.0):
        return cls(np.full(shape, float(eps)), np.full(shape, float(mu)))


def load_voxels(source, dims, layout: str = "zyx") -> VoxelGrid:
    """Headerless 8-bit densities from bytes, a path or a binary file object.

    ``layout`` names the axes from slowest to fastest varying in the stream;
    the default ``"zyx"`` is a stack of z slices stored row by row.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    nx, ny, nz = (int(d) for d in dims)
    if min(nx, ny, nz) < 1:
        raise ValueError(f"dims must be positive, got {dims}")
    if sorted(layout) != ["x", "y", "z"]:
        raise ValueError(f"layout must be a permutation of 'xyz', got {layout!r}")
    expected = nx * ny * nz
    if len(raw) != expected:
        raise VoxelFormatError(f"expected {expected} bytes for dims {nx}x{ny}x{nz}, got {len(raw)}")
    size = {"x": nx, "y": ny, "z": nz}
    arr = np.frombuffer(raw, dtype=np.uint8).reshape([size[a] for a in layout])
    arr = np.transpose(arr, [layout.index(a) for a in "xyz"])
    return VoxelGrid(np.ascontiguousarray(arr))


def save_voxels(grid: VoxelGrid, target, layout: str = "zyx"):
    arr = np.ascontiguousarray(np.transpose(grid.densities, ["xyz".index(a) for a in layout]))
    with open(target, "wb") as fh:
        fh.write(arr.tobytes())


def load_pgm_stack(pattern: str, count: int, start: int = 0) -> VoxelGrid:
    """Stack of binary PGM slices; ``pattern.format(i)`` names slice ``i`` (z index).

    Image rows map to y and columns to x.
    """
    from PIL import Image

    slices = []
    for i in range(start, start + count):
        path = pattern.format(i)
        with Image.open(path) as img:
            if img.format != "PPM" or img.mode != "L":
                raise VoxelFormatError(f"{path}: expected an 8-bit binary PGM, got {img.format}/{img.mode}")
            slices.append(np.asarray(img, dtype=np.uint8))
    if len({s.shape for s in slices}) != 1:
        raise VoxelFormatError("PGM slices differ in size")
    stack = np.stack(slices)  # (z, y, x)
    return VoxelGrid(np.ascontiguousarray(np.transpose(stack, (2, 1, 0))))


def classify(density, table: MaterialTable | None = None) -> MaterialClass:
    table = table or MaterialTable()
    if density <= table.t_air:
        return MaterialClass.AIR
    if density >= table.t_skull:
        return MaterialClass.SKULL
    return MaterialClass.TISSUE


def classify_array(densities, table: MaterialTable | None = None) -> np.ndarray:
    table = table or MaterialTable()
    d = np.asarray(densities)
    out = np.full(d.shape, MaterialClass.TISSUE, dtype=np.int8)
    out[d >= table.t_skull] = MaterialClass.SKULL
    out[d <= table.t_air] = MaterialClass.AIR
    return out


def sample_coefficients(grid: VoxelGrid, spaces, table: MaterialTable | None = None) -> CoefficientField:
    """Material of the voxel nearest to each test function's Greville point."""
    table = table or MaterialTable()
    idx = []
    for kv, n in zip(spaces, grid.dims):
        a, b = kv.domain
        g = (greville_points(kv) - a) / (b - a)
        idx.append(np.clip(np.floor(g * n).astype(int), 0, n - 1))
    dens = grid.densities[np.ix_(*idx)]
    cls = classify_array(dens, table)
    eps_lut = np.array([table.eps[c] for c in MaterialClass])
    mu_lut = np.array([table.mu[c] for c in MaterialClass])
    return CoefficientField(eps_lut[cls], mu_lut[cls], table.delta)


def synthetic_phantom(outer_radius: float, skull_thickness: float,
                      center=(0.5, 0.5, 0.5), resolution: int = 64) -> VoxelGrid:
    """Tissue ball inside a skull shell, surrounded by air."""
    center = np.asarray(center, dtype=float)
    if outer_radius < 0 or skull_thickness < 0:
        raise ValueError("radius and thickness must be nonnegative")
    if skull_thickness > outer_radius:
        raise ValueError("skull thickness exceeds the outer radius")
    if np.any(center - outer_radius < 0) or np.any(center + outer_radius > 1):
        raise ValueError("phantom does not fit in the unit cube")
    c = (np.arange(resolution) + 0.5) / resolution
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij", sparse=True)
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    dens = np.zeros((resolution,) * 3, dtype=np.uint8)
    if outer_radius > 0:
        dens[r <= outer_radius] = SKULL_DENSITY
        dens[r < outer_radius - skull_thickness] = TISSUE_DENSITY
    return VoxelGrid(dens)
