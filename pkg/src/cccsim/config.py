"""Run configuration: defaults, the namespaced-key text format, hashing.

A config file is plain text, one ``section.key = value`` per line, with
``#`` comments.  ``print-config`` emits every key with its active value,
so a saved rendering fully reproduces a run.  Emitted result files carry
a short hash of that rendering; mixing files produced under different
configurations is refused unless forced.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .controller import ControllerGains, is_plant_stable
from .dynamics import VehicleParams, powertrain_headroom_ok
from .engine import SimConfig
from .safety import SafetyParams, braking_consistent


class ConfigError(ValueError):
    """Unparseable or invalid configuration input."""


@dataclass
class OptimizerSettings:
    beta_min: float = 0.0
    beta_max: float = 2.0
    step: float = 0.1            # lattice resolution [1/s]
    method: str = "grid"         # "grid" | "nelder_mead"
    eps_margin: float = 1e-6     # stability-margin on the admissible set
    m_components: int = 0        # spectral components; 0 = full limit
    energy_fraction: float = 0.0  # optional truncation target; 0 disables


@dataclass
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    safety: SafetyParams = field(default_factory=SafetyParams)
    sim: SimConfig = field(default_factory=SimConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    output_dir: str = "out"


_SECTIONS = {"vehicle": VehicleParams, "gains": ControllerGains,
             "safety": SafetyParams, "sim": SimConfig,
             "optimizer": OptimizerSettings}


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (tuple, list)):
        return ", ".join(repr(float(x)) for x in val)
    if isinstance(val, float):
        return repr(val)
    if val is None:
        return "none"
    return str(val)


def render_config(rc: RunConfig) -> str:
    """Canonical text rendering; also the input to the config hash."""
    lines = []
    for section, cls in _SECTIONS.items():
        obj = getattr(rc, section)
        for f in fields(cls):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    lines.append(f"io.output_dir = {rc.output_dir}")
    return "\n".join(lines) + "\n"


def config_hash(rc: RunConfig) -> str:
    return hashlib.sha256(render_config(rc).encode()).hexdigest()[:12]


def _parse_value(raw: str, target_type, where: str):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if target_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if target_type is str:
        return raw
    if target_type is tuple:
        try:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"{where}: expected comma-separated numbers, got {raw!r}") from None
    # float, or optional float
    if raw.lower() == "none":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _field_types(cls) -> dict[str, type]:
    out = {}
    for f in fields(cls):
        default = f.default
        if isinstance(default, bool):
            out[f.name] = bool
        elif isinstance(default, int) and not isinstance(default, bool):
            out[f.name] = int
        elif isinstance(default, tuple):
            out[f.name] = tuple
        elif isinstance(default, str):
            out[f.name] = str
        else:
            out[f.name] = float
    return out


def apply_overrides(rc: RunConfig, items: list[tuple[str, str, str]]) -> RunConfig:
    """Apply (key, value, origin) triples onto a config, revalidating each
    touched section through its own constructor."""
    staged: dict[str, dict] = {}
    output_dir = rc.output_dir
    for key, raw, where in items:
        if key == "io.output_dir":
            output_dir = raw.strip()
            continue
        if "." not in key:
            raise ConfigError(f"{where}: key {key!r} is not namespaced (section.name)")
        section, name = key.split(".", 1)
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"{where}: unknown section {section!r}")
        types = _field_types(cls)
        if name not in types:
            raise ConfigError(f"{where}: unknown key {key!r}")
        staged.setdefault(section, {})[name] = _parse_value(raw, types[name], where)

    updated = {}
    for section, cls in _SECTIONS.items():
        if section not in staged:
            updated[section] = getattr(rc, section)
            continue
        base = {f.name: getattr(getattr(rc, section), f.name) for f in fields(cls)}
        base.update(staged[section])
        try:
            updated[section] = cls(**base)
        except ValueError as exc:
            raise ConfigError(f"section {section!r}: {exc}") from None
    return RunConfig(vehicle=updated["vehicle"], gains=updated["gains"],
                     safety=updated["safety"], sim=updated["sim"],
                     optimizer=updated["optimizer"], output_dir=output_dir)


def parse_config_text(text: str, base: RunConfig | None = None,
                      source: str = "<config>") -> RunConfig:
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        items.append((key.strip(), raw, f"{source}:{lineno}"))
    return apply_overrides(base or RunConfig(), items)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), base=base, source=str(path))


def validate_config(rc: RunConfig) -> list[str]:
    """Cross-section consistency checks; returns human-readable warnings."""
    warnings = []
    if not is_plant_stable(rc.gains):
        warnings.append("gains.*: configured gains are not plant stable")
    if not powertrain_headroom_ok(rc.vehicle, rc.gains.v_max):
        warnings.append("vehicle.*: acceleration ceiling is not positive over "
                        f"[0, {rc.gains.v_max}] m/s")
    if not braking_consistent(rc.safety, rc.vehicle):
        warnings.append("safety.a_ego: plant braking authority cannot deliver "
                        "the assumed worst-case ego deceleration")
    if rc.sim.accel_estimator == "provided":
        warnings.append("sim.accel_estimator: 'provided' needs an explicit "
                        "lead-acceleration series (library use only)")
    return warnings
