"""Run-plan configuration in a sectioned key-value format.

Example::

    [model]
    kind = linear
    field_strength = 1.0

    [run]
    hbar = 0.05
    times = 0.25, 0.5, 1.0
    dt = 0.005

    [source]
    q_min = -2.66
    q_max = 2.66
    nq = 96

Unknown sections or keys are rejected.  Validation errors name the
offending field as ``section.key``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DEFAULT_HBAR, HamiltonianModel, ModelError, UniformGrid, get_model
from .flow import DEFAULT_STEP


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_SCHEMA: dict[str, dict[str, str]] = {
    "model": {"kind": "str", "dim": "int", "coefficients": "floats", "field_strength": "float",
              "omega": "float", "quadratic": "float", "quartic": "float"},
    "run": {"hbar": "float", "times": "floats", "t_final": "float", "dt": "float"},
    "source": {"q_min": "float", "q_max": "float", "nq": "int", "p_min": "float", "p_max": "float", "np": "int"},
    "target": {"q_min": "float", "q_max": "float", "nq": "int", "p_min": "float", "p_max": "float", "np": "int"},
    "initial": {"state": "str", "q": "float", "p": "float", "phase": "floats",
                "amplitude_center": "float", "amplitude_width": "float", "order": "int"},
    "trajectory": {"q0": "floats", "p0": "floats"},
    "points": {"target_q": "floats", "target_p": "floats", "source_q": "floats", "source_p": "floats",
               "x": "floats", "y": "floats"},
    "benchmark": {"exact": "str", "l2_tol": "float", "max_tol": "float", "norm_tol": "float",
                  "fb_factor": "float", "boundary_tol": "float"},
    "output": {"directory": "str", "prefix": "str"},
}

_MODEL_PARAMS = {"linear": ("field_strength",), "harmonic": ("omega",), "quartic": ("quadratic", "quartic")}
INITIAL_STATES = ("chirped_gaussian", "packet", "wkbm")


def _default_axis(hbar: float, count: int) -> tuple[float, float, int]:
    h = np.sqrt(hbar) / 4
    half = 0.5 * (count - 1) * h
    return -half, half, count


@dataclass(frozen=True)
class GridSpec:
    """Tensor phase-space grid ``q_min..q_max`` (``nq`` points) by ``p_min..p_max``."""

    q_min: float
    q_max: float
    nq: int
    p_min: float
    p_max: float
    np: int

    def grids(self) -> tuple[UniformGrid, UniformGrid]:
        return UniformGrid.from_bounds(self.q_min, self.q_max, self.nq), UniformGrid.from_bounds(self.p_min, self.p_max, self.np)


@dataclass(frozen=True)
class InitialSpec:
    """Initial state: the chirped Gaussian, a packet ``G_(q,p)`` or a WKBM state."""

    state: str = "chirped_gaussian"
    q: float = 0.0
    p: float = 0.0
    phase: tuple[float, ...] = (0.0, 0.0, 0.5)
    amplitude_center: float = 0.0
    amplitude_width: float = 1.0
    order: int = 3


@dataclass(frozen=True)
class Tolerances:
    """Benchmark gates; ``None`` disables a gate."""

    l2: float | None = 1e-4
    max_abs: float | None = None
    norm_drift: float | None = None
    fb_factor: float | None = 4.0
    boundary: float | None = 1e-4


@dataclass(frozen=True)
class RunPlan:
    """Validated run plan."""

    model_kind: str
    model: HamiltonianModel
    hbar: float
    times: tuple[float, ...]
    dt: float
    source: GridSpec
    target: GridSpec
    initial: InitialSpec
    trajectory_start: tuple[tuple[float, ...], tuple[float, ...]]
    points: dict[str, tuple[float, ...]]
    exact: str | None
    tolerances: Tolerances
    output_dir: Path | None
    prefix: str
    model_params: dict = field(default_factory=dict)


def _convert(path: str, kind: str, raw: str):
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(path, f"cannot parse {raw!r} as {kind}") from None


def _read(text: str, source: str) -> dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, str(exc).replace("\n", " ")) from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(section, "unknown section")
        values[section] = {}
        for key, raw in parser.items(section):
            path = f"{section}.{key}"
            if key not in _SCHEMA[section]:
                raise ConfigError(path, "unknown key")
            values[section][key] = _convert(path, _SCHEMA[section][key], raw)
    return values


def _grid_spec(section: str, vals: dict, fallback: GridSpec | None, hbar: float, count: int) -> GridSpec:
    if fallback is None:
        lo, hi, n = _default_axis(hbar, count)
        fallback = GridSpec(lo, hi, n, lo, hi, n)
    spec = GridSpec(**{k: vals.get(k, getattr(fallback, k)) for k in ("q_min", "q_max", "nq", "p_min", "p_max", "np")})
    for axis in ("q", "p"):
        n = getattr(spec, "nq" if axis == "q" else "np")
        if n < 2:
            raise ConfigError(f"{section}.n{axis}", "need at least two points")
        if getattr(spec, f"{axis}_max") <= getattr(spec, f"{axis}_min"):
            raise ConfigError(f"{section}.{axis}_max", f"must exceed {axis}_min")
    return spec


def plan_from_text(text: str, source: str = "<config>") -> RunPlan:
    """Validate configuration text into a :class:`RunPlan`."""
    cfg = _read(text, source)
    m = cfg.get("model", {})
    kind = m.get("kind", "free")
    dim = m.get("dim", 1)
    if dim < 1:
        raise ConfigError("model.dim", "must be positive")
    params = {k: m[k] for k in _MODEL_PARAMS.get(kind, ()) if k in m}
    stray = set(m) - {"kind", "dim", "coefficients"} - set(_MODEL_PARAMS.get(kind, ()))
    if stray:
        key = sorted(stray)[0]
        raise ConfigError(f"model.{key}", f"not a parameter of model kind {kind!r}")
    try:
        model = get_model(kind, dim, m.get("coefficients"), **params)
    except ModelError as exc:
        raise ConfigError("model.kind" if "kind" in str(exc) else "model.coefficients", str(exc)) from None

    r = cfg.get("run", {})
    hbar = r.get("hbar", DEFAULT_HBAR)
    if not hbar > 0:
        raise ConfigError("run.hbar", "must be positive")
    if "times" in r and "t_final" in r:
        raise ConfigError("run.t_final", "give either times or t_final")
    times = r.get("times", (r["t_final"],) if "t_final" in r else (0.25, 0.5, 1.0))
    if not times:
        raise ConfigError("run.times", "empty")
    dt = r.get("dt", DEFAULT_STEP)
    if not dt > 0:
        raise ConfigError("run.dt", "must be positive")

    source = _grid_spec("source", cfg.get("source", {}), None, hbar, 96)
    target = _grid_spec("target", cfg["target"], None, hbar, 64) if "target" in cfg else source

    i = cfg.get("initial", {})
    initial = InitialSpec(**i)
    if initial.state not in INITIAL_STATES:
        raise ConfigError("initial.state", f"expected one of {', '.join(INITIAL_STATES)}")
    if initial.amplitude_width <= 0:
        raise ConfigError("initial.amplitude_width", "must be positive")

    tr = cfg.get("trajectory", {})
    q0 = tr.get("q0", (0.0,) * dim)
    p0 = tr.get("p0", (1.0,) * dim)
    for key, v in (("q0", q0), ("p0", p0)):
        if len(v) != dim:
            raise ConfigError(f"trajectory.{key}", f"expected {dim} components")

    pts = cfg.get("points", {})
    for a, b in (("target_q", "target_p"), ("source_q", "source_p"), ("x", "y")):
        if len(pts.get(a, ())) != len(pts.get(b, ())):
            raise ConfigError(f"points.{b}", f"length differs from points.{a}")

    b = cfg.get("benchmark", {})
    exact = b.get("exact", "none")
    if exact not in ("none", "free", "linear", "packet"):
        raise ConfigError("benchmark.exact", "expected none, free, linear or packet")
    tol = Tolerances(b.get("l2_tol", 1e-4), b.get("max_tol"), b.get("norm_tol"),
                     b.get("fb_factor", 4.0), b.get("boundary_tol", 1e-4))
    for name, v in (("l2_tol", tol.l2), ("max_tol", tol.max_abs), ("norm_tol", tol.norm_drift),
                    ("fb_factor", tol.fb_factor), ("boundary_tol", tol.boundary)):
        if v is not None and not v > 0:
            raise ConfigError(f"benchmark.{name}", "must be positive")

    o = cfg.get("output", {})
    out = Path(o["directory"]) if "directory" in o else None
    return RunPlan(kind, model, float(hbar), tuple(float(t) for t in times), float(dt), source, target, initial,
                   (tuple(q0), tuple(p0)), {k: tuple(v) for k, v in pts.items()},
                   None if exact == "none" else exact, tol, out, o.get("prefix", "wpprop"), params)


def parse_config(path: str | Path) -> RunPlan:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    return plan_from_text(text, str(path))
