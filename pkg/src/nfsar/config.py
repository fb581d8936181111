"""
Run configuration: YAML ingestion, validation and unit conversion.

Keys carry their unit as a suffix (``_ghz``, ``_us``, ``_mm`` ...) and are
converted to SI on load; scan-grid keys follow the scanner's parameter
labels in snake case (``x_step_mm``, ``num_x_steps``, ``delta_x_mm``,
``periodicity``). Motion-control values in the ``sync`` section stay in
millimetres, matching the actuator settings they describe.

Every failure raises :class:`ConfigError` with a stable code and, where
known, the 1-based line of the offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .beatsim import CaptureErrors
from .core import GEOMETRIES, Aperture, ChirpConfig, Scatterer, Scene
from .fileio import FORMATS, provenance_hash
from .reconstruct import ALGORITHMS, ReconGrid
from .sync import DriveConfig, TriggerPlan

E_SYNTAX = "CFG101"
E_UNKNOWN_KEY = "CFG102"
E_UNIT = "CFG103"
E_GEOMETRY = "CFG104"
E_MISSING = "CFG105"


class ConfigError(ValueError):
    def __init__(self, code: str, message: str, line: Optional[int] = None):
        self.code = code
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"{code}: {message}{where}")


# ---------------------------------------------------------------- yaml layer


class _Map(dict):
    """dict that remembers the source line of itself and of each key."""

    line: int = 0

    def __init__(self):
        super().__init__()
        self.lines = {}


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        line = key_node.start_mark.line + 1
        if not isinstance(key, str):
            raise ConfigError(E_SYNTAX, f"keys must be strings, got {key!r}", line)
        if key in out:
            raise ConfigError(E_SYNTAX, f"duplicate key {key!r}", line)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = line
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(
            E_SYNTAX, str(exc.problem or exc), mark.line + 1 if mark else None
        ) from None
    except yaml.YAMLError as exc:
        raise ConfigError(E_SYNTAX, str(exc)) from None


# ---------------------------------------------------------------- schema

_REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: str  # float | int | str | bool | list
    scale: float = 1.0  # config unit -> internal unit
    default: Any = _REQUIRED
    minimum: Optional[float] = None  # inclusive
    positive: bool = False
    choices: tuple = ()


def _pos(scale=1.0, default=_REQUIRED):
    return Field("float", scale, default, positive=True)


def _num(scale=1.0, default=_REQUIRED, minimum=None):
    return Field("float", scale, default, minimum=minimum)


def _count(default=_REQUIRED, minimum=1):
    return Field("int", default=default, minimum=minimum)


_MM = 1e-3
_DEG = math.pi / 180

CHIRP_KEYS = {
    "start_freq_ghz": _pos(1e9, 77.0),
    "slope_mhz_per_us": _num(1e12, 100.0, minimum=0.0),
    "chirp_duration_us": _pos(1e-6, 40.0),
    "adc_rate_msps": _pos(1e6, 5.0),
    "num_samples": _count(64, minimum=2),
}

APERTURE_KEYS = {
    "geometry": Field("str", choices=GEOMETRIES),
    "x_step_mm": _pos(_MM, None),
    "num_x_steps": _count(None),
    "y_step_mm": _pos(_MM, None),
    "num_y_steps": _count(None),
    "z0_mm": _num(_MM, 0.0),
    "radius_mm": _pos(_MM, None),
    "theta_step_deg": _pos(_DEG, None),
    "num_theta_steps": _count(None),
    "theta_center_deg": _num(_DEG, -90.0),
    "x_max_size_mm": _pos(_MM, None),
    "y_max_size_mm": _pos(_MM, None),
    "delta_x_mm": _num(_MM, 0.0),
    "periodicity": _num(1.0, 0.0, minimum=0.0),
}

_GEOMETRY_KEYS = {
    "linear": {"y_step_mm", "num_y_steps"},
    "rectilinear": {"x_step_mm", "num_x_steps", "y_step_mm", "num_y_steps"},
    "circular": {"radius_mm", "theta_step_deg", "num_theta_steps"},
    "cylindrical": {"radius_mm", "theta_step_deg", "num_theta_steps", "y_step_mm", "num_y_steps"},
}
_SHAPE_KEYS = set().union(*_GEOMETRY_KEYS.values())

SCATTERER_KEYS = {
    "x_mm": _num(_MM, 0.0),
    "y_mm": _num(_MM, 0.0),
    "z_mm": _num(_MM, 0.0),
    "sigma": _num(1.0, 1.0),
}

SCENE_KEYS = {
    "scatterers": Field("list", default=[]),
    "path_loss": Field("bool", default=True),
}

ERROR_KEYS = {
    "phase_offset_rad": _num(1.0, 0.0),
    "range_bias_mm": _num(_MM, 0.0),
    "noise_sigma": _num(1.0, 0.0, minimum=0.0),
}

AXIS_KEYS = {
    "start_mm": _num(_MM),
    "stop_mm": _num(_MM),
    "step_mm": _pos(_MM),
}

RECON_KEYS = {
    "algorithm": Field("str", choices=tuple(ALGORITHMS)),
    "grid": Field("map"),
    "z0_mm": _num(_MM, None),
    "oracle": Field("bool", default=False),
    "max_peaks": _count(10),
    "peak_threshold_db": _num(1.0, -6.0),
}

CALIBRATION_KEYS = {
    "reflector_range_mm": _pos(_MM, 300.0),
    "apply": Field("bool", default=True),
}

SYNC_KEYS = {
    "mm_per_rev": _pos(1.0),
    "pulses_per_rev": _count(),
    "x_max_size_mm": _pos(1.0),
    "x_step_mm": _pos(1.0),
    "num_x_steps": _count(),
    "x_offset_mm": _num(1.0, 0.0, minimum=0.0),
    "delta_x_mm": _num(1.0, 0.0),
    "periodicity": _num(1.0, 0.0, minimum=0.0),
    "v_max_mm_s": _pos(1.0, 200.0),
    "accel_mm_s2": _pos(1.0, 500.0),
    "sweeps": Field("str", default="both", choices=("forward", "reverse", "both")),
}

OUTPUT_KEYS = {
    "dir": Field("str", default="out"),
    "formats": Field("list", default=["raw"]),
    "figures": Field("bool", default=True),
}

TOP_KEYS = {
    "file_name": Field("str", default="run"),
    "seed": _count(0, minimum=0),
    "scan_notes": Field("str", default=""),
    "chirp": Field("map", default=None),
    "chirp2": Field("map", default=None),
    "aperture": Field("map", default=None),
    "scene": Field("map", default=None),
    "errors": Field("map", default=None),
    "errors2": Field("map", default=None),
    "recon": Field("map", default=None),
    "calibration": Field("map", default=None),
    "sync": Field("map", default=None),
    "output": Field("map", default=None),
}

SECTIONS = {
    "chirp": CHIRP_KEYS,
    "chirp2": CHIRP_KEYS,
    "aperture": APERTURE_KEYS,
    "scene": SCENE_KEYS,
    "errors": ERROR_KEYS,
    "errors2": ERROR_KEYS,
    "recon": RECON_KEYS,
    "calibration": CALIBRATION_KEYS,
    "sync": SYNC_KEYS,
    "output": OUTPUT_KEYS,
}


def _to_si(v: float, scale: float) -> float:
    # divide by exact powers of ten so 40 us -> 4e-05 exactly
    inv = 1.0 / scale
    return v / round(inv) if scale < 1 and abs(inv - round(inv)) < 1e-6 else v * scale


def _from_si(v: float, scale: float) -> float:
    inv = 1.0 / scale
    return v * round(inv) if scale < 1 and abs(inv - round(inv)) < 1e-6 else v / scale


def _line_of(m, key=None):
    if isinstance(m, _Map):
        return m.lines.get(key, m.line) if key is not None else m.line
    return None


def _coerce(where: str, key: str, f: Field, raw, line):
    name = f"{where}.{key}" if where else key
    if f.kind == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(E_UNIT, f"{name} must be a number, got {raw!r}", line)
        val = float(raw)
        if math.isnan(val):
            raise ConfigError(E_UNIT, f"{name} is NaN", line)
        if f.positive and not val > 0:
            raise ConfigError(E_UNIT, f"{name} must be positive", line)
        if f.minimum is not None and val < f.minimum:
            raise ConfigError(E_UNIT, f"{name} must be >= {f.minimum}", line)
        if math.isinf(val) and key != "accel_mm_s2":
            raise ConfigError(E_UNIT, f"{name} must be finite", line)
        return _to_si(val, f.scale)
    if f.kind == "int":
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(E_UNIT, f"{name} must be an integer, got {raw!r}", line)
        if f.minimum is not None and raw < f.minimum:
            raise ConfigError(E_UNIT, f"{name} must be >= {f.minimum}", line)
        return raw
    if f.kind == "bool":
        if not isinstance(raw, bool):
            raise ConfigError(E_UNIT, f"{name} must be true or false", line)
        return raw
    if f.kind == "str":
        if not isinstance(raw, str):
            raise ConfigError(E_UNIT, f"{name} must be text, got {raw!r}", line)
        if f.choices and raw not in f.choices:
            code = E_GEOMETRY if key in ("geometry", "algorithm") else E_UNIT
            raise ConfigError(code, f"{name} must be one of {', '.join(f.choices)}", line)
        return raw
    if f.kind == "list":
        if not isinstance(raw, list):
            raise ConfigError(E_UNIT, f"{name} must be a list", line)
        return raw
    if f.kind == "map":
        if not isinstance(raw, dict):
            raise ConfigError(E_UNIT, f"{name} must be a mapping", line)
        return raw
    raise AssertionError(f.kind)


def _section(where: str, m, schema: dict) -> dict:
    if m is None:
        m = _Map()
    if not isinstance(m, dict):
        raise ConfigError(E_UNIT, f"{where or 'document'} must be a mapping", None)
    for key in m:
        if key not in schema:
            raise ConfigError(
                E_UNKNOWN_KEY, f"unknown key {key!r} in {where or 'top level'}", _line_of(m, key)
            )
    out = {}
    for key, f in schema.items():
        if key in m and m[key] is not None:
            out[key] = _coerce(where, key, f, m[key], _line_of(m, key))
        elif f.default is _REQUIRED:
            name = f"{where}.{key}" if where else key
            raise ConfigError(E_MISSING, f"missing required key {name}", _line_of(m))
        elif f.kind == "float" and f.default is not None:
            out[key] = _to_si(f.default, f.scale)
        else:
            out[key] = f.default
    return out


# ---------------------------------------------------------------- run config


@dataclass(frozen=True, eq=False)
class ReconSpec:
    algorithm: str
    grid: ReconGrid
    oracle: bool = False
    max_peaks: int = 10
    peak_threshold_db: float = -6.0


@dataclass(frozen=True)
class SyncSpec:
    drive: DriveConfig
    plan: TriggerPlan
    travel: float
    v_max: float
    accel: float
    sweeps: str = "both"


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    formats: tuple = ("raw",)
    figures: bool = True


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run description; physical values are SI except in ``sync``."""

    name: str
    seed: int
    scan_notes: str
    chirp: Optional[ChirpConfig]
    chirp2: Optional[ChirpConfig]
    aperture: Optional[Aperture]
    delta_x: float
    periodicity: float
    scene: Scene
    path_loss: bool
    errors: CaptureErrors
    errors2: CaptureErrors
    recon: Optional[ReconSpec]
    calibration_range: Optional[float]
    apply_calibration: bool
    sync: Optional[SyncSpec]
    output: OutputSpec
    settings: dict = field(default_factory=dict)
    source: str = ""

    @property
    def provenance(self) -> str:
        return provenance_hash(self.source)

    @property
    def dual(self) -> bool:
        return self.chirp2 is not None


def _centered(n: int, step: float) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2) * step


def _build_aperture(ap: dict, m) -> Aperture:
    geo = ap["geometry"]
    needed = _GEOMETRY_KEYS[geo]
    for key in sorted(_SHAPE_KEYS - needed):
        if ap[key] is not None:
            raise ConfigError(
                E_GEOMETRY, f"aperture.{key} does not apply to a {geo} aperture", _line_of(m, key)
            )
    for key in sorted(needed):
        if ap[key] is None:
            raise ConfigError(E_MISSING, f"{geo} aperture needs aperture.{key}", _line_of(m))
    for axis in ("x", "y"):
        n, step, lim = ap[f"num_{axis}_steps"], ap[f"{axis}_step_mm"], ap[f"{axis}_max_size_mm"]
        if n is not None and lim is not None and (n - 1) * step > lim * (1 + 1e-12):
            raise ConfigError(
                E_UNIT,
                f"{axis} scan length {(n - 1) * step / _MM:g} mm exceeds {axis}_max_size_mm",
                _line_of(m, f"num_{axis}_steps"),
            )
    if geo == "linear":
        return Aperture.linear(_centered(ap["num_y_steps"], ap["y_step_mm"]), ap["z0_mm"])
    if geo == "rectilinear":
        return Aperture.rectilinear(
            _centered(ap["num_x_steps"], ap["x_step_mm"]),
            _centered(ap["num_y_steps"], ap["y_step_mm"]),
            ap["z0_mm"],
        )
    theta = ap["theta_center_deg"] + _centered(ap["num_theta_steps"], ap["theta_step_deg"])
    if geo == "circular":
        return Aperture.circular(theta, ap["radius_mm"])
    return Aperture.cylindrical(theta, _centered(ap["num_y_steps"], ap["y_step_mm"]), ap["radius_mm"])


def _build_chirp(c: dict, line) -> ChirpConfig:
    try:
        return ChirpConfig(
            c["start_freq_ghz"],
            c["slope_mhz_per_us"],
            c["chirp_duration_us"],
            c["adc_rate_msps"],
            c["num_samples"],
        )
    except ValueError as exc:
        raise ConfigError(E_UNIT, f"chirp: {exc}", line) from None


def _build_scene(items: list, m) -> tuple:
    scatterers, converted = [], []
    for i, item in enumerate(items):
        where = f"scene.scatterers[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(E_UNIT, f"{where} must be a mapping", _line_of(m, "scatterers"))
        s = _section(where, item, SCATTERER_KEYS)
        converted.append(s)
        scatterers.append(Scatterer((s["x_mm"], s["y_mm"], s["z_mm"]), s["sigma"]))
    return Scene(tuple(scatterers)), converted


def _build_grid(algorithm: str, grid_map, z0, m) -> tuple:
    dims = ALGORITHMS[algorithm][1]
    for name in grid_map:
        if name not in dims:
            code = E_GEOMETRY if name in ("x", "y", "z") else E_UNKNOWN_KEY
            raise ConfigError(
                code, f"grid axis {name!r} is not used by {algorithm}", _line_of(grid_map, name)
            )
    axes, converted = {}, {}
    for name in dims:
        if name not in grid_map:
            raise ConfigError(E_MISSING, f"{algorithm} needs recon.grid.{name}", _line_of(grid_map))
        a = _section(f"recon.grid.{name}", grid_map[name], AXIS_KEYS)
        if a["stop_mm"] < a["start_mm"]:
            raise ConfigError(
                E_UNIT, f"recon.grid.{name}: stop_mm < start_mm", _line_of(grid_map, name)
            )
        n = int(math.floor((a["stop_mm"] - a["start_mm"]) / a["step_mm"] + 1e-9)) + 1
        axes[name] = a["start_mm"] + a["step_mm"] * np.arange(n)
        converted[name] = a
    if "z" not in dims and z0 is None:
        raise ConfigError(E_MISSING, f"{algorithm} images a fixed plane and needs recon.z0_mm", m)
    return ReconGrid(axes, z0), converted


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run description."""
    doc = _load(text)
    if doc is None:
        doc = _Map()
    if not isinstance(doc, dict):
        raise ConfigError(E_SYNTAX, "top level must be a mapping", 1)
    top = _section("", doc, TOP_KEYS)
    settings = {k: v for k, v in top.items() if k not in SECTIONS}
    sec = {}
    for name, schema in SECTIONS.items():
        m = doc.get(name)
        if name in ("chirp2", "errors2", "recon", "calibration", "sync", "aperture") and m is None:
            sec[name] = None
            continue
        sec[name] = _section(name, m, schema)
        settings[name] = dict(sec[name])

    if sec["aperture"] is None and sec["sync"] is None:
        raise ConfigError(E_MISSING, "config needs an aperture section, a sync section or both", 1)

    chirp = chirp2 = aperture = None
    delta_x = periodicity = 0.0
    if sec["aperture"] is not None:
        ap_map = doc["aperture"]
        chirp = _build_chirp(sec["chirp"], _line_of(doc, "chirp"))
        aperture = _build_aperture(sec["aperture"], ap_map)
        delta_x = sec["aperture"]["delta_x_mm"]
        periodicity = sec["aperture"]["periodicity"]
        if sec["chirp2"] is not None:
            if aperture.geometry != "rectilinear":
                raise ConfigError(
                    E_GEOMETRY, "a second radar needs a rectilinear aperture", _line_of(doc, "chirp2")
                )
            chirp2 = _build_chirp(sec["chirp2"], _line_of(doc, "chirp2"))
            step = sec["aperture"]["x_step_mm"]
            shift = delta_x / step
            if abs(shift - round(shift)) > 1e-6:
                raise ConfigError(
                    E_UNIT,
                    "aperture.delta_x_mm must be a whole number of x steps to merge two radars",
                    _line_of(ap_map, "delta_x_mm"),
                )
            if abs(round(shift)) >= aperture.x.size:
                raise ConfigError(
                    E_UNIT, "radar apertures do not overlap", _line_of(ap_map, "delta_x_mm")
                )
    elif sec["recon"] is not None or sec["calibration"] is not None:
        raise ConfigError(E_MISSING, "recon and calibration need an aperture section", 1)

    scene, scat = _build_scene(sec["scene"]["scatterers"], doc.get("scene"))
    settings["scene"]["scatterers"] = scat

    errors = CaptureErrors(
        sec["errors"]["phase_offset_rad"], sec["errors"]["range_bias_mm"], sec["errors"]["noise_sigma"]
    )
    e2 = sec["errors2"] or sec["errors"]
    errors2 = CaptureErrors(e2["phase_offset_rad"], e2["range_bias_mm"], e2["noise_sigma"])

    recon = None
    if sec["recon"] is not None:
        r = sec["recon"]
        geo = ALGORITHMS[r["algorithm"]][0]
        if geo != aperture.geometry:
            raise ConfigError(
                E_GEOMETRY,
                f"algorithm {r['algorithm']} needs a {geo} aperture, not {aperture.geometry}",
                _line_of(doc["recon"], "algorithm"),
            )
        grid, axes = _build_grid(r["algorithm"], r["grid"], r["z0_mm"], _line_of(doc["recon"], "grid"))
        settings["recon"]["grid"] = axes
        recon = ReconSpec(r["algorithm"], grid, r["oracle"], r["max_peaks"], r["peak_threshold_db"])

    cal = sec["calibration"]

    sync = None
    if sec["sync"] is not None:
        s = sec["sync"]
        line = _line_of(doc, "sync")
        try:
            drive = DriveConfig(s["mm_per_rev"], s["pulses_per_rev"])
            plan = TriggerPlan(
                s["x_offset_mm"], s["x_step_mm"], s["num_x_steps"], s["delta_x_mm"], s["periodicity"]
            )
        except ValueError as exc:
            raise ConfigError(E_UNIT, f"sync: {exc}", line) from None
        sync = SyncSpec(drive, plan, s["x_max_size_mm"], s["v_max_mm_s"], s["accel_mm_s2"], s["sweeps"])

    out = sec["output"]
    for fmt in out["formats"]:
        if fmt not in FORMATS:
            raise ConfigError(
                E_UNIT,
                f"output.formats: unsupported format {fmt!r}",
                _line_of(doc.get("output"), "formats"),
            )
    output = OutputSpec(out["dir"], tuple(dict.fromkeys(out["formats"])), out["figures"])

    return RunConfig(
        name=top["file_name"],
        seed=top["seed"],
        scan_notes=top["scan_notes"],
        chirp=chirp,
        chirp2=chirp2,
        aperture=aperture,
        delta_x=delta_x,
        periodicity=periodicity,
        scene=scene,
        path_loss=sec["scene"]["path_loss"],
        errors=errors,
        errors2=errors2,
        recon=recon,
        calibration_range=cal["reflector_range_mm"] if cal else None,
        apply_calibration=bool(cal and cal["apply"]),
        sync=sync,
        output=output,
        settings=settings,
        source=text,
    )


def _to_config_units(value, schema: dict) -> dict:
    out = {}
    for key, v in value.items():
        f = schema.get(key)
        if f is not None and f.kind == "float" and v is not None:
            out[key] = _from_si(v, f.scale)
        else:
            out[key] = v
    return out


def config_values(cfg: RunConfig) -> dict:
    """The parsed settings, converted back to the units used in the file."""
    s = cfg.settings
    out = {k: s[k] for k in TOP_KEYS if k in s and k not in SECTIONS}
    for name, schema in SECTIONS.items():
        if name not in s:
            continue
        sec = _to_config_units(s[name], schema)
        if name == "scene":
            sec["scatterers"] = [_to_config_units(x, SCATTERER_KEYS) for x in s[name]["scatterers"]]
        if name == "recon":
            sec["grid"] = {a: _to_config_units(v, AXIS_KEYS) for a, v in s[name]["grid"].items()}
        out[name] = sec
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_values(cfg), sort_keys=False)
