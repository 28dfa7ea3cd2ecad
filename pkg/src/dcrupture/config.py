"""TOML run configuration with strict validation and a stable hash.

Every section maps to a frozen dataclass.  Unknown keys and wrongly typed
values are rejected with a ``[section].key`` diagnostic.  The hash is the
SHA-256 of the canonical JSON form, so it does not depend on key order in
the source file.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import tomli_w


class ConfigError(ValueError):
    """Invalid configuration, with the offending field in the message."""


@dataclass(frozen=True)
class DomainConfig:
    x_min: float = -15.0
    x_max: float = 15.0
    depth: float = 15.0


@dataclass(frozen=True)
class FaultConfig:
    kind: str = "planar"
    amplitude_ratio: float = 0.01
    band: tuple = (1.0, 30.0)
    seed: int = 1


@dataclass(frozen=True)
class MaterialConfig:
    density: float = 2.67
    shear_modulus: float = 32.0381


@dataclass(frozen=True)
class FrictionConfig:
    vw_region: tuple = (-5.0, 6.0)
    a_vw: float = 0.009
    a_vs: float = 0.013
    b: float = 0.011
    dc_vw: float = 0.2
    dc_vs: float = 1.0
    f0: float = 0.6
    v0: float = 1e-6
    sigma_n: float = 120.0
    sigma_yz0: float = 72.0
    psi0: float = 0.7243
    initial_slip_rate: float = 1e-12


@dataclass(frozen=True)
class LoadingConfig:
    amplitude: float = 25.0
    center: float = 3.0
    width: float = 2.0


@dataclass(frozen=True)
class DiscretizationConfig:
    m: int = 101
    n_across: int = 0
    order: int = 2
    d2_form: str = ""
    dt: float = 0.005
    t_final: float = 6.0
    cfl: float = 0.25
    penalty_factor: float = 1.0
    tolerance: float = 1e-13
    reflection: float = 0.0
    locked: bool = False


@dataclass(frozen=True)
class ReceiverConfig:
    outer: tuple = (-9.0, 9.0, -9.0, 9.0)
    inner: tuple = (-7.0, 7.0, -3.0, 3.0)
    spacing: float = 2.0
    kind: str = "velocity"
    expected_count: int = 88
    window_start: float = 0.0
    window_end: float = float("inf")
    window_taper: float = 0.0


@dataclass(frozen=True)
class InversionConfig:
    param: str = "a"
    m_p: int = 11
    initial_value: float = 0.0135
    initial_factor: float = 0.0
    lower: float = float("-inf")
    upper: float = float("inf")
    max_iter: int = 100
    memory: int = 10
    gtol: float = 1e-12
    snapshot_every: int = 10
    coarse_norm: str = "gram"


@dataclass(frozen=True)
class GradCheckConfig:
    param: str = "a"
    m_p: int = 11
    initial_factor: float = 1.1
    delta_min: float = 1e-12
    delta_max: float = 1e-5
    n_deltas: int = 15
    threshold: float = 1e-4


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    stage_subsample: int = 4
    slip_interval: float = 0.5
    snapshot_times: tuple = ()
    checkpoint: bool = False


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    fault: FaultConfig = field(default_factory=FaultConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    friction: FrictionConfig = field(default_factory=FrictionConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    receivers: ReceiverConfig = field(default_factory=ReceiverConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    gradcheck: GradCheckConfig = field(default_factory=GradCheckConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "RunConfig":
        d = self.discretization
        if self.fault.kind not in ("planar", "fractal"):
            raise ConfigError(f"[fault].kind: expected 'planar' or 'fractal', got '{self.fault.kind}'")
        if d.order not in (2, 4, 6):
            raise ConfigError(f"[discretization].order: expected 2, 4 or 6, got {d.order}")
        if d.d2_form not in ("", "narrow", "wide"):
            raise ConfigError(f"[discretization].d2_form: expected 'narrow' or 'wide', got '{d.d2_form}'")
        if d.m < 2 * d.order + 3:
            raise ConfigError(f"[discretization].m: {d.m} is too small for order {d.order}")
        if d.t_final <= 0 or d.dt < 0:
            raise ConfigError("[discretization]: t_final must be positive and dt non-negative")
        if d.reflection not in (-1.0, 0.0, 1.0):
            raise ConfigError(f"[discretization].reflection: expected -1, 0 or 1, got {d.reflection}")
        if self.receivers.kind not in ("displacement", "velocity"):
            raise ConfigError(f"[receivers].kind: expected 'displacement' or 'velocity', got '{self.receivers.kind}'")
        if self.domain.x_max <= self.domain.x_min or self.domain.depth <= 0:
            raise ConfigError("[domain]: empty domain")
        if self.material.density <= 0 or self.material.shear_modulus <= 0:
            raise ConfigError("[material]: density and shear_modulus must be positive")
        return self

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **sections) -> "RunConfig":
        """Replace fields per section, e.g. ``with_overrides(discretization={"m": 61})``."""
        cfg = self
        for name, values in sections.items():
            cfg = replace(cfg, **{name: replace(getattr(cfg, name), **values)})
        return cfg.validate()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not _finite(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))


def _coerce(section: str, key: str, value, default):
    where = f"[{section}].{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str) and value in ("inf", "-inf"):
            return float(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if default and len(value) != len(default):
            raise ConfigError(f"{where}: expected {len(default)} entries, got {len(value)}")
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: entries must be numbers") from None
    return value


def config_from_dict(data: dict) -> RunConfig:
    sections = {}
    known = {f.name: f for f in fields(RunConfig)}
    for name, values in data.items():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{name}] must be a table")
        cls = known[name].default_factory
        default = cls()
        kwargs = {}
        names = {f.name for f in fields(cls)}
        for key, value in values.items():
            if key not in names:
                raise ConfigError(f"[{name}]: unknown key '{key}'")
            kwargs[key] = _coerce(name, key, value, getattr(default, key))
        sections[name] = cls(**kwargs)
    return RunConfig(**sections).validate()


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def dumps_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg))
