"""The online estimation engine: frames in, predictions and snapshots out."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from surgeid import rnn as rnnmod
from surgeid.aid import AidEstimator, default_gains
from surgeid.config import NOMINAL, EngineConfig
from surgeid.ensemble import WeightedEnsemble
from surgeid.gate import FrameGate, MeasurementFrame
from surgeid.rls import RlsEstimator
from surgeid.surge import ScaleMap

log = logging.getLogger(__name__)

METHODS = ("aid", "rnn", "rls", "ave", "we")
_ESTIMATOR_ERRORS = (ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError)


@dataclass
class PredictionRecord:
    t: float
    v_meas: float | None
    v_aid: float
    v_rnn: float
    v_rls: float
    v_ave: float
    v_we: float

    def err(self, method: str) -> float | None:
        if self.v_meas is None:
            return None
        v = getattr(self, f"v_{method}")
        return None if math.isnan(v) else abs(v - self.v_meas)

    def __getattr__(self, name):
        if name.startswith("err_"):
            return self.err(name[4:])
        raise AttributeError(name)


@dataclass
class MethodMetrics:
    sum_abs: float = 0.0
    sum_sq: float = 0.0
    count: int = 0

    def add(self, err: float) -> None:
        self.sum_abs += abs(err)
        self.sum_sq += err * err
        self.count += 1

    @property
    def mae(self) -> float:
        return self.sum_abs / self.count if self.count else math.nan

    @property
    def mse(self) -> float:
        return self.sum_sq / self.count if self.count else math.nan


@dataclass
class MetricsAccumulator:
    methods: dict = field(default_factory=lambda: {m: MethodMetrics() for m in METHODS})
    frames: int = 0
    prediction_only: int = 0
    skipped: int = 0

    def add(self, rec: PredictionRecord) -> None:
        self.frames += 1
        if rec.v_meas is None:
            self.prediction_only += 1
            return
        for m in METHODS:
            e = rec.err(m)
            if e is not None:
                self.methods[m].add(e)

    def summary(self) -> dict:
        return {m: {"mae": mm.mae, "mse": mm.mse, "count": mm.count}
                for m, mm in self.methods.items()}

    def to_dict(self) -> dict:
        return {"methods": {m: dataclasses.asdict(mm) for m, mm in self.methods.items()},
                "frames": self.frames, "prediction_only": self.prediction_only,
                "skipped": self.skipped}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsAccumulator":
        return cls({m: MethodMetrics(**v) for m, v in d["methods"].items()},
                   d["frames"], d["prediction_only"], d["skipped"])


def rnn_config(cfg: EngineConfig) -> rnnmod.RnnConfig:
    r = cfg.rnn
    return rnnmod.RnnConfig(n=r.n, m=r.m, eta=r.eta, lr=r.lr, beta1=r.beta1, beta2=r.beta2,
                            eps=r.eps, init_scale=r.init_scale,
                            penalty_margin=r.penalty_margin, inputs=tuple(r.inputs))


def fresh_aid(cfg: EngineConfig, mass: float | None = None) -> AidEstimator:
    a = cfg.aid
    theta0 = NOMINAL.theta() if a.theta0 is None else np.array(a.theta0, dtype=float)
    m = a.mass if a.mass is not None else (mass if mass is not None else NOMINAL.m)
    rate = a.gain_rate if a.gain_rate is not None else (1e4 if a.mode == "least_squares" else 10.0)
    return AidEstimator(m=m * a.mass_mismatch, theta_hat=theta0, k_v=a.k_v,
                        gamma=default_gains(cfg.xi_max, cfg.v_max, rate), mode=a.mode,
                        forgetting=a.forgetting)


class StreamEngine:
    """Runs the three estimators and both fusions frame by frame.

    Each estimator carries its own prediction for the coming frame: the AID
    observer velocity, the RNN's recurrent state (propagated on its own
    estimate, never reset to the measurement) and the static RLS map.  With
    ``learn=False`` parameters are frozen; the observer correction and the
    ensemble weight recursion still run.
    """

    def __init__(self, cfg: EngineConfig | None = None, vehicle_id: str = "usv", run_id: str = "run",
                 mass: float | None = None, learn: bool = True, snapshot_sink=None):
        self.cfg = cfg or EngineConfig()
        self.cfg.validate()
        self.vehicle_id = vehicle_id
        self.run_id = run_id
        self.learn = learn
        self.scale = ScaleMap(self.cfg.v_max)
        self.aid = fresh_aid(self.cfg, mass)
        self.rnn = rnnmod.RnnModel(rnn_config(self.cfg), seed=self.cfg.rnn.seed)
        self.rls = RlsEstimator(self.cfg.rls.forgetting, self.cfg.rls.p0)
        self.ensemble = self._fresh_ensemble()
        self.metrics = MetricsAccumulator()
        self.session_metrics = MetricsAccumulator()
        self.gate = self._fresh_gate()
        self.failures = {"aid": 0, "rnn": 0, "rls": 0, "ensemble": 0}
        self.elapsed = 0.0
        self._last_t: float | None = None
        self._next_snapshot = self.cfg.snapshot_period
        self.snapshot_sink = snapshot_sink

    def _fresh_gate(self) -> FrameGate:
        return FrameGate(self.cfg.window, self.cfg.quant_step, self.cfg.dt_max)

    def _fresh_ensemble(self) -> WeightedEnsemble:
        return WeightedEnsemble(self.cfg.ensemble.forgetting, self.cfg.ensemble.p0)

    def enabled(self, name: str) -> bool:
        return name in self.cfg.enabled

    # -- message level -------------------------------------------------
    def feed(self, msg) -> list[PredictionRecord]:
        frame = self.gate.push(msg)
        return [] if frame is None else [self.tick(frame)]

    def run(self, messages) -> list[PredictionRecord]:
        records = []
        for msg in messages:
            records.extend(self.feed(msg))
        records.extend(self.close())
        return records

    def close(self) -> list[PredictionRecord]:
        """Flush the gate; emits a final snapshot if a sink is attached."""
        frame = self.gate.flush()
        out = [] if frame is None else [self.tick(frame)]
        if self.snapshot_sink is not None and self._last_t is not None:
            self.snapshot_sink(self)
        return out

    def new_mission(self, run_id: str) -> None:
        """Start a new log on the same engine (state carries over)."""
        self.run_id = run_id
        self.gate = self._fresh_gate()
        self._last_t = None
        self.session_metrics = MetricsAccumulator()
        if self.cfg.ensemble.reset_per_mission:
            self.ensemble = self._fresh_ensemble()

    # -- frame level ---------------------------------------------------
    def tick(self, frame: MeasurementFrame) -> PredictionRecord:
        cfg = self.cfg
        if self._last_t is None or not frame.t > self._last_t:
            dt = cfg.nominal_dt
        else:
            dt = min(frame.t - self._last_t, cfg.dt_max)
        # stream time: sum of integration steps, the first frame of a log adds none
        if self._last_t is not None:
            self.elapsed += dt
        self._last_t = frame.t

        v_meas = frame.v_meas
        finite = all(math.isfinite(x) for x in (frame.theta, frame.thetadot, frame.xi_l, frame.xi_r))
        if not finite:
            self.metrics.skipped += 1
            self.session_metrics.skipped += 1
        learn = self.learn and v_meas is not None

        v_aid = v_rnn = v_rls = math.nan
        if self.enabled("aid"):
            try:
                v_aid = self.aid.update(v_meas, frame.thetadot, frame.xi_l, frame.xi_r, dt,
                                        adapt=self.learn)
            except _ESTIMATOR_ERRORS as exc:
                self._fail("aid", exc)
        if self.enabled("rnn"):
            try:
                u = rnnmod.rnn_inputs(self.rnn.cfg.inputs, frame.xi_l, frame.xi_r, frame.theta,
                                      frame.thetadot, cfg.xi_max)
                x_meas = None if v_meas is None else self.scale.scale(v_meas)
                v_rnn = self.scale.unscale(self.rnn.predict_and_learn(u, x_meas, learn=learn))
            except _ESTIMATOR_ERRORS as exc:
                self._fail("rnn", exc)
        if self.enabled("rls"):
            try:
                args = (frame.xi_l / cfg.xi_max, frame.xi_r / cfg.xi_max, frame.theta,
                        frame.thetadot)
                v_rls = (self.rls.update_frame(*args, v_meas) if learn
                         else self.rls.predict_frame(*args))
            except _ESTIMATOR_ERRORS as exc:
                self._fail("rls", exc)

        preds = [v for v in (v_aid, v_rnn, v_rls) if not math.isnan(v)]
        v_ave = sum(preds) / len(preds) if preds else math.nan
        try:
            v_we = self.ensemble.fuse_update(v_aid, v_rnn, v_rls, v_meas)
        except _ESTIMATOR_ERRORS as exc:
            self._fail("ensemble", exc)
            v_we = math.nan

        rec = PredictionRecord(frame.t, v_meas, v_aid, v_rnn, v_rls, v_ave, v_we)
        self.metrics.add(rec)
        self.session_metrics.add(rec)
        if self.snapshot_sink is not None and self.elapsed >= self._next_snapshot:
            self.snapshot_sink(self)
            while self._next_snapshot <= self.elapsed:
                self._next_snapshot += cfg.snapshot_period
        return rec

    def _fail(self, name: str, exc: Exception) -> None:
        self.failures[name] += 1
        log.debug("%s estimator failed: %s", name, exc)

    # -- state ---------------------------------------------------------
    def certification(self) -> rnnmod.CertificationReport:
        return rnnmod.certify(self.rnn.weights)

    def equilibrium(self) -> rnnmod.EquilibriumReport:
        return rnnmod.equilibria(self.rnn.weights)

    def state_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "run_id": self.run_id,
            "stream_time": self.elapsed,
            "next_snapshot": self._next_snapshot,
            "last_t": self._last_t,
            "gate": self.gate.continuity(),
            "aid": self.aid.to_dict(),
            "rnn": self.rnn.to_dict(),
            "rls": self.rls.to_dict(),
            "ensemble": self.ensemble.to_dict(),
            "certification": self.certification().to_dict(),
            "equilibrium": self.equilibrium().to_dict(),
            "metrics": self.metrics.to_dict(),
            "config": dataclasses.asdict(self.cfg),
        }

    def load_state(self, d: dict) -> None:
        self.aid = AidEstimator.from_dict(d["aid"])
        self.rnn = rnnmod.RnnModel.from_dict(d["rnn"], rnn_config(self.cfg))
        self.rls = RlsEstimator.from_dict(d["rls"])
        self.ensemble = WeightedEnsemble.from_dict(d["ensemble"])
        self.metrics = MetricsAccumulator.from_dict(d["metrics"])
        self.elapsed = d["stream_time"]
        self._next_snapshot = d.get("next_snapshot", self.elapsed + self.cfg.snapshot_period)
        # resuming within the same log continues seamlessly; a new log whose
        # clock restarts is detected in tick() by non-increasing time
        self._last_t = d.get("last_t")
        self.gate = self._fresh_gate()
        self.gate.restore(d.get("gate", {}))
