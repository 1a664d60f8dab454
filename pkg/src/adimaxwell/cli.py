"""
Command line driver: ``adimaxwell <mode> --config <path|preset> [--set key=value ...]``.

Modes are ``verify`` (manufactured-solution run checked against error
bounds), ``run`` (simulation with a material map and field snapshots),
``convergence`` (temporal order study) and ``scaling`` (seconds per step
versus mesh size).  Exit status: 0 success, 1 configuration, 2 numerical
failure or violated bound, 3 I/O.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .linalg1d import SingularMatrixError
from .materials import (CoefficientField, MaterialTable, VoxelFormatError, load_voxels,
                        sample_coefficients, synthetic_phantom)
from .maxwell import (EMState, SchemeConfig, assemble_operators, evaluate_field, l2_project, step,
                      zero_state)
from .splines import make_open_knot_vector
from .verify import (ErrorReport, ErrorRow, FieldEvaluator, ManufacturedSolution, Mode,
                     convergence_study, error_norms, scaling_study)

__all__ = (
    "ConfigError",
    "RunConfig",
    "FieldSnapshot",
    "parse_config",
    "load_config",
    "sample_snapshot",
    "write_snapshot",
    "write_error_csv",
    "read_error_csv",
    "build_scheme",
    "main",
)

MODES = ("run", "verify", "convergence", "scaling")
CSV_COLUMNS = ("step", "t", "l2_E", "l2_H", "hcurl_E", "hcurl_H")
WORKERS_ENV = "ADIMAXWELL_WORKERS"


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path, ``line`` 1-based when known."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key:
            where += f"{key}: "
        if line:
            where = f"line {line}: " + where
        super().__init__(where + message)
        self.key = key
        self.line = line


# Defaults double as the schema: a key absent here is unknown.  ``None``
# marks optional leaves whose value may be a scalar or a mapping.
DEFAULTS = {
    "mode": None,
    "mesh": {"elements": 16, "degree": 2, "continuity": None},
    "time": {"tau": None, "n_steps": None, "T": None},
    "boundary": "pec",
    "materials": {
        "eps": None,
        "mu": None,
        "phantom": None,
        "voxels": None,
        "table": None,
    },
    "initial": {"manufactured": None, "zero": False},
    "outputs": {
        "directory": "adimaxwell-out",
        "snapshot_every": 0,
        "snapshot_resolution": 32,
        "errors": True,
        "dump_coefficients": False,
    },
    "verify": {"l2": 0.08, "hcurl": 0.35},
    "convergence": {"taus": ["1/40", "1/80", "1/160", "1/320"], "order": 2.0, "tolerance": 0.3},
    "scaling": {"sizes": [8, 16, 32], "tau": 0.01, "steps": 5, "repeats": 3,
                "ratio_min": 5.0, "ratio_max": 12.0},
}

PHANTOM_KEYS = {"outer_radius": 0.4, "skull_thickness": 0.05,
                "center": [0.5, 0.5, 0.5], "resolution": 64}
VOXEL_KEYS = {"path": None, "dims": None, "layout": "zyx"}
TABLE_KEYS = {"eps": None, "mu": None, "t_air": 1, "t_skull": 240}
MODE_KEYS = {"family": 1, "kappa": 1, "lam": 1, "weight": 1.0}


@dataclass(frozen=True)
class RunConfig:
    mode: str | None
    elements: int
    degree: int
    continuity: int | None
    tau: float
    n_steps: int
    T: float
    boundary: str
    materials: dict
    manufactured: ManufacturedSolution | None
    outputs: dict
    verify: dict
    convergence: dict
    scaling: dict
    resolved: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class FieldSnapshot:
    resolution: int
    t: float
    fields: dict

    def __post_init__(self):
        for name, arr in self.fields.items():
            if arr.shape != (self.resolution,) * 3:
                raise ValueError(f"field {name} has shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name} has non-finite samples")


# -- parsing ----------------------------------------------------------------

def _compose(text: str):
    """YAML document to plain data plus a map from dotted key to line number."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"cannot parse: {getattr(err, 'problem', err)}",
                          line=mark.line + 1 if mark else None) from None
    lines = {}

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                key = f"{path}.{k.value}" if path else str(k.value)
                lines[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                walk(v, f"{path}[{i}]")

    if node is not None:
        walk(node, "")
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    return data, lines


def _merge(defaults: dict, given: dict, lines: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError("unknown key", key=path, line=lines.get(path))
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", key=path, line=lines.get(path))
            out[key] = _merge(defaults[key], value, lines, path + ".")
        else:
            out[key] = value
    return out


def _number(value, key, lines, kind=float, positive=False, nonneg=False):
    try:
        if kind is float and isinstance(value, str):
            x = float(Fraction(value.strip()))
        elif kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            x = int(value)
        else:
            if isinstance(value, bool):
                raise TypeError
            x = float(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"expected {'an integer' if kind is int else 'a number'}, got {value!r}",
                          key=key, line=lines.get(key)) from None
    if kind is float and not math.isfinite(x):
        raise ConfigError(f"must be finite, got {value!r}", key=key, line=lines.get(key))
    if positive and not x > 0:
        raise ConfigError(f"must be positive, got {value!r}", key=key, line=lines.get(key))
    if nonneg and x < 0:
        raise ConfigError(f"must be nonnegative, got {value!r}", key=key, line=lines.get(key))
    return x


def _sub(spec, defaults, key, lines):
    if spec is True or spec == {}:
        spec = {}
    if not isinstance(spec, dict):
        raise ConfigError("expected a mapping", key=key, line=lines.get(key))
    return _merge(defaults, spec, lines, key + ".")


def _parse_manufactured(spec, lines):
    key = "initial.manufactured"
    if spec in ("u_A", "uA", "u_a"):
        return ManufacturedSolution.u_A()
    if not isinstance(spec, dict):
        raise ConfigError("expected 'u_A' or a mapping with 'modes'", key=key, line=lines.get(key))
    unknown = set(spec) - {"modes", "gamma"}
    if unknown:
        k = f"{key}.{sorted(unknown)[0]}"
        raise ConfigError("unknown key", key=k, line=lines.get(k))
    modes = []
    for i, m in enumerate(spec.get("modes") or []):
        mk = f"{key}.modes[{i}]"
        m = _sub(m, MODE_KEYS, mk, lines)
        try:
            modes.append(Mode(_number(m["family"], mk + ".family", lines, int),
                              _number(m["kappa"], mk + ".kappa", lines, int),
                              _number(m["lam"], mk + ".lam", lines, int),
                              _number(m["weight"], mk + ".weight", lines)))
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err), key=mk, line=lines.get(mk)) from None
    if not modes:
        raise ConfigError("needs at least one mode", key=key, line=lines.get(key))
    gamma = _number(spec.get("gamma", 1.0), key + ".gamma", lines)
    return ManufacturedSolution(tuple(modes), gamma)


def parse_config(text: str, overrides=()) -> RunConfig:
    """Validate a YAML document; ``overrides`` are ``key=value`` strings."""
    data, lines = _compose(text)
    for item in overrides:
        _apply_override(data, item)
    cfg = _merge(DEFAULTS, data, lines)

    mode = cfg["mode"]
    if mode is not None and mode not in MODES:
        raise ConfigError(f"must be one of {', '.join(MODES)}", key="mode", line=lines.get("mode"))

    mesh = cfg["mesh"]
    elements = _number(mesh["elements"], "mesh.elements", lines, int, positive=True)
    degree = _number(mesh["degree"], "mesh.degree", lines, int, positive=True)
    continuity = mesh["continuity"]
    if continuity is not None:
        continuity = _number(continuity, "mesh.continuity", lines, int)
        if not 0 <= continuity <= degree - 1:
            raise ConfigError(f"must lie in 0..{degree - 1}", key="mesh.continuity",
                              line=lines.get("mesh.continuity"))

    tm = cfg["time"]
    tau = tm["tau"]
    if tau is not None:
        tau = _number(tau, "time.tau", lines, positive=True)
    n_steps = tm["n_steps"]
    if n_steps is not None:
        n_steps = _number(n_steps, "time.n_steps", lines, int, nonneg=True)
    T = tm["T"]
    if T is not None:
        T = _number(T, "time.T", lines, nonneg=True)
    if tau is None:
        if n_steps is None or T is None or n_steps == 0:
            raise ConfigError("give tau, or n_steps together with T", key="time", line=lines.get("time"))
        tau = T / n_steps
    if T is None:
        T = (n_steps or 0) * tau
    if n_steps is None:
        n_steps = int(round(T / tau))
    if abs(n_steps * tau - T) > 1e-12 * max(1.0, T):
        raise ConfigError(f"n_steps*tau = {n_steps * tau!r} does not match T = {T!r}",
                          key="time", line=lines.get("time"))

    boundary = cfg["boundary"]
    if boundary not in ("pec", "natural"):
        raise ConfigError("must be 'pec' or 'natural'", key="boundary", line=lines.get("boundary"))

    materials = _parse_materials(cfg["materials"], lines)

    init = cfg["initial"]
    zero = init["zero"]
    if not isinstance(zero, bool):
        raise ConfigError("expected true or false", key="initial.zero", line=lines.get("initial.zero"))
    if (init["manufactured"] is not None) == zero:
        raise ConfigError("give exactly one of 'manufactured' or 'zero: true'", key="initial",
                          line=lines.get("initial"))
    manufactured = None if zero else _parse_manufactured(init["manufactured"], lines)

    out = cfg["outputs"]
    out["snapshot_every"] = _number(out["snapshot_every"], "outputs.snapshot_every", lines, int, nonneg=True)
    out["snapshot_resolution"] = _number(out["snapshot_resolution"], "outputs.snapshot_resolution",
                                         lines, int, positive=True)
    for flag in ("errors", "dump_coefficients"):
        if not isinstance(out[flag], bool):
            raise ConfigError("expected true or false", key=f"outputs.{flag}", line=lines.get(f"outputs.{flag}"))
    out["directory"] = str(out["directory"])

    ver = {k: _number(v, f"verify.{k}", lines, positive=True) for k, v in cfg["verify"].items()}

    conv = cfg["convergence"]
    if not isinstance(conv["taus"], list) or not conv["taus"]:
        raise ConfigError("expected a nonempty list", key="convergence.taus", line=lines.get("convergence.taus"))
    taus = [_number(t, "convergence.taus", lines, positive=True) for t in conv["taus"]]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ConfigError("must be strictly descending", key="convergence.taus", line=lines.get("convergence.taus"))
    for t in taus:
        if abs(round(T / t) * t - T) > 1e-12 * max(1.0, T):
            raise ConfigError(f"tau {t!r} does not divide T", key="convergence.taus",
                              line=lines.get("convergence.taus"))
    conv = {"taus": taus,
            "order": _number(conv["order"], "convergence.order", lines),
            "tolerance": _number(conv["tolerance"], "convergence.tolerance", lines, nonneg=True)}

    sc = cfg["scaling"]
    if not isinstance(sc["sizes"], list) or not sc["sizes"]:
        raise ConfigError("expected a nonempty list", key="scaling.sizes", line=lines.get("scaling.sizes"))
    sizes = [_number(s, "scaling.sizes", lines, int, positive=True) for s in sc["sizes"]]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("must be strictly ascending", key="scaling.sizes", line=lines.get("scaling.sizes"))
    scaling = {"sizes": sizes,
               "tau": _number(sc["tau"], "scaling.tau", lines, positive=True),
               "steps": _number(sc["steps"], "scaling.steps", lines, int, positive=True),
               "repeats": _number(sc["repeats"], "scaling.repeats", lines, int, positive=True),
               "ratio_min": _number(sc["ratio_min"], "scaling.ratio_min", lines, nonneg=True),
               "ratio_max": _number(sc["ratio_max"], "scaling.ratio_max", lines, positive=True)}

    resolved = copy.deepcopy(cfg)
    resolved["mesh"].update(elements=elements, degree=degree, continuity=continuity)
    resolved["time"] = {"tau": tau, "n_steps": n_steps, "T": T}
    return RunConfig(mode, elements, degree, continuity, tau, n_steps, T, boundary, materials,
                     manufactured, out, ver, conv, scaling, resolved)


def _parse_materials(m, lines) -> dict:
    sources = [k for k in ("phantom", "voxels") if m[k] is not None]
    scalar = m["eps"] is not None or m["mu"] is not None
    if len(sources) + scalar > 1:
        given = sources + (["eps/mu"] if scalar else [])
        raise ConfigError(f"exactly one material source allowed, got {' and '.join(given)}",
                          key="materials", line=lines.get("materials"))
    if m["table"] is not None and not sources:
        raise ConfigError("a material table needs a phantom or voxel source", key="materials.table",
                          line=lines.get("materials.table"))
    if not sources:
        eps = 1.0 if m["eps"] is None else _number(m["eps"], "materials.eps", lines)
        mu = 1.0 if m["mu"] is None else _number(m["mu"], "materials.mu", lines)
        for name, v in (("eps", eps), ("mu", mu)):
            if not v > 0:
                raise ConfigError(f"must be positive, got {v!r}", key=f"materials.{name}",
                                  line=lines.get(f"materials.{name}"))
        return {"kind": "scalar", "eps": eps, "mu": mu}
    table_spec = _sub(m["table"] or {}, TABLE_KEYS, "materials.table", lines)
    table_kw = {}
    for name in ("eps", "mu"):
        values = table_spec[name]
        if values is None:
            continue
        k = f"materials.table.{name}"
        if not isinstance(values, dict):
            raise ConfigError("expected a mapping air/tissue/skull -> value", key=k, line=lines.get(k))
        table_kw[name] = {c: _number(v, f"{k}.{c}", lines) for c, v in values.items()}
    try:
        table = MaterialTable(**table_kw,
                              t_air=_number(table_spec["t_air"], "materials.table.t_air", lines),
                              t_skull=_number(table_spec["t_skull"], "materials.table.t_skull", lines))
    except (KeyError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err).strip("'\""), key="materials.table",
                          line=lines.get("materials.table")) from None
    kind = sources[0]
    if kind == "phantom":
        p = _sub(m["phantom"], PHANTOM_KEYS, "materials.phantom", lines)
        spec = {"outer_radius": _number(p["outer_radius"], "materials.phantom.outer_radius", lines, nonneg=True),
                "skull_thickness": _number(p["skull_thickness"], "materials.phantom.skull_thickness",
                                           lines, nonneg=True),
                "center": [_number(c, "materials.phantom.center", lines) for c in p["center"]],
                "resolution": _number(p["resolution"], "materials.phantom.resolution", lines, int,
                                      positive=True)}
        if len(spec["center"]) != 3:
            raise ConfigError("expected three coordinates", key="materials.phantom.center",
                              line=lines.get("materials.phantom.center"))
    else:
        v = _sub(m["voxels"], VOXEL_KEYS, "materials.voxels", lines)
        if not v["path"]:
            raise ConfigError("missing", key="materials.voxels.path", line=lines.get("materials.voxels"))
        dims = v["dims"]
        if not isinstance(dims, list) or len(dims) != 3:
            raise ConfigError("expected three integers", key="materials.voxels.dims",
                              line=lines.get("materials.voxels.dims"))
        spec = {"path": str(v["path"]),
                "dims": [_number(d, "materials.voxels.dims", lines, int, positive=True) for d in dims],
                "layout": str(v["layout"])}
        if sorted(spec["layout"]) != ["x", "y", "z"]:
            raise ConfigError("must be a permutation of 'xyz'", key="materials.voxels.layout",
                              line=lines.get("materials.voxels.layout"))
    return {"kind": kind, "spec": spec, "table": table}


def _apply_override(data: dict, item: str):
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        raise ConfigError(f"cannot parse value {raw!r}", key=key) from None
    parts = key.split(".")
    node, schema = data, DEFAULTS
    for i, part in enumerate(parts):
        # below a free-form entry (schema None) keys are checked at validation
        if schema is not None and (not isinstance(schema, dict) or part not in schema):
            raise ConfigError("unknown key", key=".".join(parts[:i + 1]))
        if i == len(parts) - 1:
            node[part] = value
        else:
            child = node.get(part)
            if not isinstance(child, dict):
                child = node[part] = {}
            node = child
            schema = schema[part] if schema is not None else None


def load_config(source: str, overrides=()) -> RunConfig:
    """Read a config file, or a shipped preset by name (e.g. ``paper-verify``)."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        preset = resources.files("adimaxwell").joinpath("presets").joinpath(f"{source}.yaml")
        if not preset.is_file():
            raise FileNotFoundError(f"no config file or preset named {source!r}")
        text = preset.read_text()
    return parse_config(text, overrides)


# -- simulation setup --------------------------------------------------------

def build_scheme(rc: RunConfig, tau: float | None = None, n_steps: int | None = None) -> SchemeConfig:
    kv = make_open_knot_vector(rc.elements, rc.degree, rc.continuity)
    spaces = (kv, kv, kv)
    tau = rc.tau if tau is None else tau
    n_steps = rc.n_steps if n_steps is None else n_steps
    mat = rc.materials
    if mat["kind"] == "scalar":
        return SchemeConfig(tau=tau, spaces=spaces, eps=mat["eps"], mu=mat["mu"],
                            n_steps=n_steps, T=n_steps * tau, boundary=rc.boundary)
    spec = mat["spec"]
    if mat["kind"] == "phantom":
        grid = synthetic_phantom(spec["outer_radius"], spec["skull_thickness"], spec["center"],
                                 spec["resolution"])
    else:
        grid = load_voxels(spec["path"], spec["dims"], spec["layout"])
    coeffs = sample_coefficients(grid, spaces, mat["table"])
    return SchemeConfig(tau=tau, spaces=spaces, eps=coeffs, n_steps=n_steps, T=n_steps * tau,
                        boundary=rc.boundary)


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"must be a positive integer, got {raw!r}", key=WORKERS_ENV) from None
    if n < 1:
        raise ConfigError(f"must be a positive integer, got {raw!r}", key=WORKERS_ENV)
    return n


def _initial_state(rc: RunConfig, ops) -> EMState:
    if rc.manufactured is None:
        return zero_state(ops.shape)
    ms = rc.manufactured
    return EMState(l2_project(ms.initial("E"), ops, "E"), l2_project(ms.initial("H"), ops, "H"), 0.0)


# -- outputs -----------------------------------------------------------------

def sample_snapshot(state: EMState, spaces, resolution: int) -> FieldSnapshot:
    """Six field components on a uniform ``resolution``^3 grid covering the closed domain."""
    if resolution < 2:
        raise ValueError("snapshot resolution must be at least 2")
    pts = [np.linspace(kv.domain[0], kv.domain[1], resolution) for kv in spaces]
    names = ("E1", "E2", "E3", "H1", "H2", "H3")
    return FieldSnapshot(resolution, state.t,
                         {n: evaluate_field(u, spaces, pts) for n, u in zip(names, state.fields)})


def write_snapshot(state, spaces, path, resolution: int = 32) -> Path:
    """Legacy VTK structured points (ASCII), x varying fastest."""
    snap = state if isinstance(state, FieldSnapshot) else sample_snapshot(state, spaces, resolution)
    r = snap.resolution
    lo = [kv.domain[0] for kv in spaces]
    h = [(kv.domain[1] - kv.domain[0]) / (r - 1) for kv in spaces]
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"adimaxwell fields t={snap.t!r}\n")
        fh.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {r} {r} {r}\n")
        fh.write("ORIGIN {!r} {!r} {!r}\n".format(*lo))
        fh.write("SPACING {!r} {!r} {!r}\n".format(*h))
        fh.write(f"POINT_DATA {r ** 3}\n")
        for name, arr in snap.fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(map(repr, arr.ravel(order="F").tolist())))
            fh.write("\n")
    return path


def write_error_csv(report: ErrorReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report.rows:
            w.writerow([row.step] + [repr(float(getattr(row, c))) for c in CSV_COLUMNS[1:]])
    return path


def read_error_csv(path) -> ErrorReport:
    report = ErrorReport()
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {r.fieldnames}")
        for rec in r:
            report.append(ErrorRow(int(rec["step"]), *(float(rec[c]) for c in CSV_COLUMNS[1:])))
    return report


def _write_resolved(rc: RunConfig, outdir: Path, mode: str):
    resolved = copy.deepcopy(rc.resolved)
    resolved["mode"] = mode
    with open(outdir / "config.resolved.yaml", "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True)


# -- modes -------------------------------------------------------------------

class NumericalFailure(RuntimeError):
    pass


def _march(rc: RunConfig, outdir: Path, with_errors: bool):
    cfg = build_scheme(rc)
    ops = assemble_operators(cfg, workers=_workers())
    state = _initial_state(rc, ops)
    ev = FieldEvaluator(cfg.spaces)
    ms = rc.manufactured if with_errors else None
    report = ErrorReport()
    every = rc.outputs["snapshot_every"]
    res = rc.outputs["snapshot_resolution"]

    def observe(n, st):
        if not st.is_finite():
            raise NumericalFailure(f"non-finite field values at step {n}")
        if rc.outputs["errors"]:
            report.append(error_norms(st, ms, cfg.spaces, ev, n))
        if every and (n % every == 0 or n == cfg.n_steps):
            write_snapshot(st, cfg.spaces, outdir / f"fields_{n:06d}.vtk", res)

    observe(0, state)
    for n in range(1, cfg.n_steps + 1):
        state = step(state, ops)
        observe(n, state)
    if rc.outputs["dump_coefficients"]:
        np.savez(outdir / "coefficients.npz", E1=state.E[0], E2=state.E[1], E3=state.E[2],
                 H1=state.H[0], H2=state.H[1], H3=state.H[2], t=state.t)
    return state, report


def _mode_verify(rc: RunConfig, outdir: Path) -> dict:
    if rc.manufactured is None:
        raise ConfigError("verify needs a manufactured initial condition", key="initial")
    rc = _with_outputs(rc, errors=True)
    _, report = _march(rc, outdir, with_errors=True)
    write_error_csv(report, outdir / "errors.csv")
    worst = report.max_over_steps()
    final = report.at_final()
    bounds = {"l2_E": rc.verify["l2"], "l2_H": rc.verify["l2"],
              "hcurl_E": rc.verify["hcurl"], "hcurl_H": rc.verify["hcurl"]}
    failed = {k: worst[k] for k in bounds if not worst[k] < bounds[k]}
    summary = {"max_over_steps": worst, "at_final": final, "bounds": bounds}
    if failed:
        k = sorted(failed)[0]
        raise NumericalFailure(f"bound violated: {k}={failed[k]!r} >= {bounds[k]!r}", summary)
    return summary


def _mode_run(rc: RunConfig, outdir: Path) -> dict:
    state, report = _march(rc, outdir, with_errors=rc.manufactured is not None
                           and rc.materials["kind"] == "scalar")
    name = "errors.csv" if rc.manufactured is not None and rc.materials["kind"] == "scalar" else "norms.csv"
    if rc.outputs["errors"]:
        write_error_csv(report, outdir / name)
    return {"t": state.t, "steps": rc.n_steps,
            "final": report.at_final() if len(report) else None}


def _mode_convergence(rc: RunConfig, outdir: Path) -> dict:
    if rc.manufactured is None:
        raise ConfigError("convergence needs a manufactured initial condition", key="initial")
    cfg = build_scheme(rc)
    rows, orders = convergence_study(cfg, rc.convergence["taus"], rc.manufactured)
    with open(outdir / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = ErrorRow.FIELDS
        w.writerow(["tau", "n_steps"] + [f"{n}_at_T" for n in names] + [f"{n}_max" for n in names])
        for row in rows:
            w.writerow([repr(float(row["tau"])), row["n_steps"]]
                       + [repr(float(row["at_T"][n])) for n in names]
                       + [repr(float(row["max"][n])) for n in names])
    summary = {"orders": orders}
    lo = rc.convergence["order"] - rc.convergence["tolerance"]
    hi = rc.convergence["order"] + rc.convergence["tolerance"]
    bad = {k: v for k, v in orders.items() if k.startswith("l2") and not lo <= v <= hi}
    if bad:
        k = sorted(bad)[0]
        raise NumericalFailure(f"order outside [{lo!r}, {hi!r}]: {k}={bad[k]!r}", summary)
    return summary


def _mode_scaling(rc: RunConfig, outdir: Path) -> dict:
    sc = rc.scaling
    rows = scaling_study(sc["sizes"], sc["tau"], sc["steps"], rc.degree, repeats=sc["repeats"])
    with open(outdir / "scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["elements", "N", "seconds_per_step", "ratio"])
        for row in rows:
            w.writerow([row["elements"], row["N"], repr(row["seconds_per_step"]),
                        repr(row["ratio"]) if "ratio" in row else ""])
    summary = {"rows": rows}
    bad = [r for r in rows[1:] if not sc["ratio_min"] <= r["ratio"] <= sc["ratio_max"]]
    if bad:
        r = bad[0]
        raise NumericalFailure(f"ratio {r['ratio']:.3g} at {r['elements']} elements outside "
                               f"[{sc['ratio_min']}, {sc['ratio_max']}]", summary)
    return summary


def _with_outputs(rc: RunConfig, **kw) -> RunConfig:
    out = dict(rc.outputs, **kw)
    return RunConfig(**{**rc.__dict__, "outputs": out})


_MODES = {"verify": _mode_verify, "run": _mode_run,
          "convergence": _mode_convergence, "scaling": _mode_scaling}


def _report(status: str, **info):
    print("adimaxwell: " + json.dumps({"status": status, **info}, sort_keys=True, default=float),
          file=sys.stderr if status == "error" else sys.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adimaxwell", description=__doc__.split("\n\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="config file or preset name")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key); repeatable")
    args = parser.parse_args(argv)

    try:
        rc = load_config(args.config, args.overrides)
        if rc.mode is not None and rc.mode != args.mode:
            raise ConfigError(f"config is for mode {rc.mode!r}", key="mode")
        _workers()
        outdir = Path(rc.outputs["directory"])
        outdir.mkdir(parents=True, exist_ok=True)
        _write_resolved(rc, outdir, args.mode)
        summary = _MODES[args.mode](rc, outdir)
    except ConfigError as err:
        _report("error", kind="config", exit=1, message=str(err))
        return 1
    except (NumericalFailure, SingularMatrixError, FloatingPointError) as err:
        extra = err.args[1] if isinstance(err, NumericalFailure) and len(err.args) > 1 else None
        if extra:
            _report("result", mode=args.mode, **extra)
        _report("error", kind="numerical", exit=2, message=str(err.args[0]))
        return 2
    except (OSError, VoxelFormatError) as err:
        _report("error", kind="io", exit=3, message=str(err))
        return 3
    except ValueError as err:
        # remaining validation errors from library constructors
        _report("error", kind="config", exit=1, message=str(err))
        return 1
    _report("ok", mode=args.mode, output=str(outdir), **summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
