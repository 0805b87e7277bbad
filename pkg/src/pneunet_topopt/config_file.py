"""Flat ``key = value`` configuration files with unit-checked values.

Lines look like ``load.pressure = 1 bar``; ``#`` starts a comment.  Every key
must be known, values may carry a unit that is converted to SI, and a unit
from the wrong dimension is rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from ._validation import ValidationError
from .model import BAR, RunConfig

# unit name -> (dimension, factor to SI)
UNITS = {
    "m": ("length", 1.0), "cm": ("length", 1e-2), "mm": ("length", 1e-3),
    "pa": ("pressure", 1.0), "kpa": ("pressure", 1e3), "mpa": ("pressure", 1e6),
    "gpa": ("pressure", 1e9), "bar": ("pressure", BAR),
    "n/m": ("stiffness", 1.0), "kn/m": ("stiffness", 1e3),
}


@dataclass(frozen=True)
class KeySpec:
    field: str
    kind: type
    dimension: str | None = None


KEYS: dict[str, KeySpec] = {
    "domain.lx_m": KeySpec("lx", float, "length"),
    "domain.ly_m": KeySpec("ly", float, "length"),
    "mesh.nex": KeySpec("nex", int),
    "mesh.ney": KeySpec("ney", int),
    "domain.thickness_m": KeySpec("thickness", float, "length"),
    "bc.fixed_left_half": KeySpec("fixed_left_half", str),
    "chamber.radius_factor": KeySpec("chamber_radius_factor", float),
    "void.center_x_factor": KeySpec("void_center_x_factor", float),
    "void.center_y_factor": KeySpec("void_center_y_factor", float),
    "void.width_factor": KeySpec("void_width_factor", float),
    "void.height_factor": KeySpec("void_height_factor", float),
    "load.pressure": KeySpec("pressure", float, "pressure"),
    "spring.kss_n_per_m": KeySpec("kss", float, "stiffness"),
    "material.e1_pa": KeySpec("e1", float, "pressure"),
    "material.e0_ratio": KeySpec("e0_ratio", float),
    "material.nu": KeySpec("nu", float),
    "material.chi": KeySpec("chi", float),
    "flow.kv": KeySpec("kv", float),
    "flow.contrast": KeySpec("contrast", float),
    "flow.eta_k": KeySpec("eta_k", float),
    "flow.beta_k": KeySpec("beta_k", float),
    "drain.remainder": KeySpec("drain_remainder", float),
    "drain.depth_elems": KeySpec("drain_depth_elems", float),
    "drain.eta_d": KeySpec("eta_d", float),
    "drain.beta_d": KeySpec("beta_d", float),
    "filter.radius_factor": KeySpec("filter_radius_factor", float),
    "robust.delta_eta": KeySpec("delta_eta", float),
    "beta.start": KeySpec("beta_start", float),
    "beta.max": KeySpec("beta_max", float),
    "beta.period": KeySpec("beta_period", int),
    "volume.target": KeySpec("volume_target", float),
    "volume.update_period": KeySpec("volume_update_period", int),
    "mma.move_limit": KeySpec("move_limit", float),
    "mma.max_iters": KeySpec("max_iters", int),
    "output.dir": KeySpec("output_dir", str),
}

REQUIRED = ("domain.lx_m", "domain.ly_m", "mesh.nex", "mesh.ney", "load.pressure",
            "volume.target", "output.dir")

_NUMBER = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)$")


def _convert(key: str, raw: str, lineno: int):
    spec = KEYS[key]
    where = f"line {lineno}: {key}"
    if spec.kind is str:
        if not raw:
            raise ValidationError(f"{where}: empty value")
        return raw
    m = _NUMBER.match(raw)
    if not m:
        raise ValidationError(f"{where}: cannot parse {raw!r} as a number")
    number, unit = m.group(1), m.group(2).lower()
    if spec.kind is int:
        try:
            value = int(number)
        except ValueError:
            value = float(number)
            if not value.is_integer():
                raise ValidationError(f"{where}: expected an integer, got {number}") from None
            value = int(value)
        if unit:
            raise ValidationError(f"{where}: integer keys take no unit, got {unit!r}")
        return value
    value = float(number)
    if unit:
        if unit not in UNITS:
            raise ValidationError(f"{where}: unknown unit {unit!r}")
        dimension, factor = UNITS[unit]
        if dimension != spec.dimension:
            expected = spec.dimension or "a dimensionless value"
            raise ValidationError(f"{where}: unit {unit!r} is a {dimension}, expected {expected}")
        value *= factor
    return value


def parse_text(text: str) -> RunConfig:
    values: dict[str, object] = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw, lineno)
        except ValidationError as exc:
            errors.append(str(exc))
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        errors.append("missing required keys: " + ", ".join(missing))
    if errors:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(**{KEYS[k].field: v for k, v in values.items()})


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file; defaults fill unspecified keys."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"configuration file not found: {path}") from None
    return parse_text(text)


def format_config(config: RunConfig) -> str:
    """Every key with its resolved SI value, in a form :func:`parse_text` accepts."""
    lines = ["# resolved configuration (SI units)"]
    for key, spec in KEYS.items():
        value = getattr(config, spec.field)
        lines.append(f"{key} = {value!r}" if not isinstance(value, str) else f"{key} = {value}")
    return "\n".join(lines) + "\n"

