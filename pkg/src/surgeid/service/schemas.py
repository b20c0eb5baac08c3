"""Request and response bodies."""

from __future__ import annotations

import math

from pydantic import BaseModel, Field, field_validator

from surgeid.logs import CHANNELS


class MessageIn(BaseModel):
    timestamp: float
    channel: str
    value: float

    @field_validator("channel")
    @classmethod
    def known_channel(cls, v: str) -> str:
        if v not in CHANNELS:
            raise ValueError(f"unknown channel {v!r}; expected one of {CHANNELS}")
        return v


class SessionCreate(BaseModel):
    vehicle_id: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    run_id: str = "live"
    resume: bool = True
    learn: bool = True
    mass: float | None = Field(default=None, gt=0)


class SessionInfo(BaseModel):
    session_id: str
    vehicle_id: str
    run_id: str
    resumed_from: str | None = None
    stream_time: float = 0.0


class MessageBatch(BaseModel):
    messages: list[MessageIn]


def _clean(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


class Prediction(BaseModel):
    t: float
    v_meas: float | None
    v_aid: float | None
    v_rnn: float | None
    v_rls: float | None
    v_ave: float | None
    v_we: float | None

    @classmethod
    def from_record(cls, r) -> "Prediction":
        return cls(**{k: _clean(getattr(r, k)) for k in cls.model_fields})


class PredictionBatch(BaseModel):
    records: list[Prediction]
    snapshots_written: list[str] = []


class MethodSummary(BaseModel):
    mae: float | None
    mse: float | None
    count: int


class Metrics(BaseModel):
    frames: int
    prediction_only: int
    skipped: int
    stale_cycles: int
    methods: dict[str, MethodSummary]
    ensemble_weights: list[float]
    failures: dict[str, int]


class Equilibrium(BaseModel):
    x: float
    slope: float
    kind: str


class CertificationOut(BaseModel):
    theorem3_ok: bool
    gersgorin_ok: bool
    M_psd_ok: bool
    min_eigenvalue_of_M: float
    contraction_constant: float
    violating_neurons: list[int]
    equilibria: list[Equilibrium]
    marginal_segments: list[list[float]]


class SnapshotOut(BaseModel):
    name: str
    stream_time: float


class RnnPayload(BaseModel):
    n: int = Field(gt=0)
    m: int = Field(ge=0)
    a: list[float]
    w1: list[float]
    W2: list[float]
    b: list[float]
    x: float = 0.0
