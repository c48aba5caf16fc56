"""Plain-text ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key must be one of
:data:`KEYS`; only ``geometry.name`` is mandatory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .energy import EnergyParams
from .flow import FlowConfig
from .generate import GeometrySpec

log = logging.getLogger(__name__)

COERCIVITY_WARNING = "coercivity condition not guaranteed (θ > 0.5)"


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: " if path is not None else f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text, 0)


def _opt_float(text: str):
    return None if text.lower() == "none" else float(text)


# key -> parser
KEYS = {
    "geometry.name": str,
    "geometry.r": float,
    "geometry.c": float,
    "geometry.N": _int,
    "geometry.N_s": _int,
    "geometry.N_zeta": _int,
    "geometry.seed": _int,
    "geometry.perturb_amplitude": float,
    "geometry.path": str,
    "geometry.format": str,
    "metric.kind": str,
    "metric.floor_eps": _opt_float,
    "metric.n_smooth": _int,
    "energy.p": float,
    "energy.theta": float,
    "flow.tau": float,
    "flow.dt_init": _opt_float,
    "flow.dt_fraction": float,
    "flow.max_steps": _int,
    "flow.tol": float,
    "flow.reproject": _bool,
    "flow.check_bounds": _bool,
    "boundary.policy": str,
    "output.dir": str,
    "output.every": _int,
}
MANDATORY = ("geometry.name",)
METRIC_KINDS = ("identity", "curvature")


@dataclass
class RunConfig:
    geometry: GeometrySpec
    energy: EnergyParams = field(default_factory=EnergyParams)
    flow: FlowConfig = field(default_factory=FlowConfig)
    metric_kind: str = "identity"
    floor_eps: float | None = None
    n_smooth: int | None = None
    output_dir: str | None = None
    output_every: int = 0
    raw: dict = field(default_factory=dict, repr=False)


def parse_config_text(text: str, path=None) -> dict:
    """Key/value pairs with parsed values; errors carry the line number."""
    values, seen = {}, {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed line {raw.strip()!r} (expected key = value)", i, path)
        key, _, value = (part.strip() for part in line.partition("="))
        if not key or not value:
            raise ConfigError(f"malformed line {raw.strip()!r} (empty key or value)", i, path)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", i, path)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", i, path)
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", i, path) from None
        seen[key] = i
    for key in MANDATORY:
        if key not in values:
            raise ConfigError(f"missing mandatory key {key!r}", path=path)
    return values


def build_config(values: dict, path=None) -> RunConfig:
    g = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("geometry.")}
    try:
        geometry = GeometrySpec(**g)
        energy = EnergyParams(p=values.get("energy.p", 1.5), theta=values.get("energy.theta", 1.0 / 3.0))
        flow_kw = {
            "tau": values.get("flow.tau", 1.0),
            "dt_init": values.get("flow.dt_init"),
            "max_steps": values.get("flow.max_steps", 5000),
            "tol_velocity": values.get("flow.tol", 1e-6),
            "reproject": values.get("flow.reproject", geometry.name != "external"),
            "boundary_policy": values.get("boundary.policy", "auto"),
            "check_bounds": values.get("flow.check_bounds", True),
        }
        if "flow.dt_fraction" in values:
            flow_kw["dt_max_displacement_fraction"] = values["flow.dt_fraction"]
        flow = FlowConfig(**flow_kw)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from None
    kind = values.get("metric.kind", "identity")
    if kind not in METRIC_KINDS:
        raise ConfigError(f"metric.kind must be one of {', '.join(METRIC_KINDS)}", path=path)
    every = values.get("output.every", 0)
    if every < 0:
        raise ConfigError("output.every must be >= 0", path=path)
    if flow.check_bounds and not energy.coercive:
        log.warning(COERCIVITY_WARNING)
    return RunConfig(geometry, energy, flow, kind, values.get("metric.floor_eps"),
                     values.get("metric.n_smooth"), values.get("output.dir"), every, values)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    return build_config(parse_config_text(text, path), path)
