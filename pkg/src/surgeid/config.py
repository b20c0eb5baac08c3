"""Run configuration: engine, estimator and experiment settings.

Everything is a plain dataclass so a config round-trips through JSON and can
be echoed into every output file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from surgeid.rnn import DEFAULT_INPUTS
from surgeid.surge import SurgeParams


class ConfigError(ValueError):
    pass


@dataclass
class AidConfig:
    mass: float | None = None  # None: 8|c_q| of the vehicle (or of the nominal)
    mass_mismatch: float = 1.0
    k_v: float = 1.0
    mode: str = "least_squares"
    gain_rate: float | None = None  # None: 1e4 (least squares) or 10 (gradient)
    forgetting: float = 0.9995
    theta0: list | None = None  # None: nominal parameters


@dataclass
class RnnSection:
    n: int = 20
    m: int = 4
    eta: float = 10.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float | None = None
    penalty_margin: float = 0.1
    inputs: list = field(default_factory=lambda: list(DEFAULT_INPUTS))
    seed: int = 0


@dataclass
class RlsConfig:
    forgetting: float = 0.995
    p0: float = 1e3


@dataclass
class EnsembleConfig:
    forgetting: float = 0.999
    p0: float = 1e2
    reset_per_mission: bool = False


@dataclass
class EngineConfig:
    window: float = 0.2
    quant_step: float = 0.05
    snapshot_period: float = 300.0
    nominal_dt: float = 0.1
    dt_max: float = 1.0
    v_max: float = 2.0
    xi_max: float = 100.0
    enabled: list = field(default_factory=lambda: ["aid", "rnn", "rls"])
    aid: AidConfig = field(default_factory=AidConfig)
    rnn: RnnSection = field(default_factory=RnnSection)
    rls: RlsConfig = field(default_factory=RlsConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)

    def validate(self) -> None:
        if not self.window > 0:
            raise ConfigError("staleness window must be positive")
        if self.quant_step < 0 or self.snapshot_period <= 0:
            raise ConfigError("quant_step must be >= 0 and snapshot_period > 0")
        if not (0 < self.nominal_dt <= self.dt_max):
            raise ConfigError("need 0 < nominal_dt <= dt_max")
        if self.v_max <= 0 or self.xi_max <= 0:
            raise ConfigError("v_max and xi_max must be positive")
        bad = set(self.enabled) - {"aid", "rnn", "rls"}
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}")


@dataclass
class SimConfig:
    fleet_size: int = 8
    spread: float = 0.3
    mission_duration: float = 900.0
    missions_per_vehicle: int = 2
    rate: float = 10.0
    substeps: int = 10
    velocity_std: float = 0.05
    outlier_prob: float = 0.002
    outlier_magnitude: float = 0.5
    disruptions: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    logs: str = "runs/logs"
    snapshots: str = "runs/snapshots"
    out: str = "runs/out"
    engine: EngineConfig = field(default_factory=EngineConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = _build(cls, d)
        cfg.engine.validate()
        return cfg


def _build(cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}")
    hints = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(hints)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if name in hints else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


NOMINAL = SurgeParams()
