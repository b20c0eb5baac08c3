"""Synthetic vehicles, mission scripts and the truth simulator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from surgeid import surge
from surgeid.logs import Message, MissionLog
from surgeid.surge import SurgeParams, ThrustParams

SEGMENT_KINDS = ("idle", "step", "ramp", "multisine", "abort")


@dataclass(frozen=True)
class NoiseModel:
    velocity_std: float = 0.0
    outlier_prob: float = 0.0
    outlier_magnitude: float = 1.0


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: str
    truth: SurgeParams
    v_max: float = 2.0
    xi_max: float = 100.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleSpec":
        t = d["truth"]
        truth = SurgeParams(m=t["m"], c_q=t["c_q"], c_l=t["c_l"], c_thetadot=t["c_thetadot"],
                            thrust_left=ThrustParams(**t["thrust_left"]),
                            thrust_right=ThrustParams(**t["thrust_right"]))
        return cls(d["vehicle_id"], truth, d["v_max"], d["xi_max"],
                   NoiseModel(**d["noise"]), d["seed"])


def perturbed_params(nominal: SurgeParams, spread: float, rng: np.random.Generator) -> SurgeParams:
    """Scale every drag/thrust coefficient by an independent U(1-spread, 1+spread)
    factor; mass follows as 8|c_q|."""
    theta = nominal.theta() * rng.uniform(1.0 - spread, 1.0 + spread, 9)
    return SurgeParams.from_theta(8.0 * abs(theta[0]), theta)


def make_fleet(size: int = 8, spread: float = 0.3, seed: int = 0,
               nominal: SurgeParams | None = None, noise: NoiseModel | None = None,
               v_max: float = 2.0, xi_max: float = 100.0) -> list[VehicleSpec]:
    nominal = nominal or SurgeParams()
    noise = noise or NoiseModel(velocity_std=0.05, outlier_prob=0.002, outlier_magnitude=0.5)
    rng = np.random.default_rng(seed)
    fleet = []
    for i in range(size):
        truth = perturbed_params(nominal, spread, rng) if spread > 0 else nominal
        fleet.append(VehicleSpec(f"usv{i + 1:02d}", truth, v_max, xi_max, noise,
                                 seed=int(rng.integers(2 ** 31))))
    return fleet


@dataclass(frozen=True)
class Segment:
    """One maneuver.  Levels are fractions of xi_max.

    ``params`` keys by kind: step/ramp use ``left``/``right`` (start levels)
    and ramp also ``left_end``/``right_end``; multisine uses ``base``,
    ``amp``, ``freqs`` (rad/s), ``phases_left``, ``phases_right`` and may set
    ``saturate`` to let the sum clip at the actuator limits.  Any kind may set
    ``turn_rate`` (rad/s, constant) or ``turn_amp``/``turn_freq``.
    An ``abort`` cuts thrust and drops velocity telemetry.
    """

    kind: str
    duration: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        p = self.params
        keys = {"step": ("left", "right"), "ramp": ("left", "right", "left_end", "right_end")}
        for k in keys.get(self.kind, ()):
            if not 0.0 <= p[k] <= 1.0:
                raise ValueError(f"{self.kind} level {k}={p[k]} outside [0, xi_max]")
        if self.kind == "multisine" and not p.get("saturate", False):
            if p["base"] - p["amp"] < 0.0 or p["base"] + p["amp"] > 1.0:
                raise ValueError("multisine command range outside [0, xi_max]")

    def levels(self, tau: float) -> tuple[float, float]:
        p = self.params
        if self.kind in ("idle", "abort"):
            return 0.0, 0.0
        if self.kind == "step":
            return p["left"], p["right"]
        if self.kind == "ramp":
            f = tau / self.duration
            return (p["left"] + f * (p["left_end"] - p["left"]),
                    p["right"] + f * (p["right_end"] - p["right"]))
        amp = p["amp"] / len(p["freqs"])
        left = p["base"] + amp * sum(math.sin(w * tau + ph)
                                     for w, ph in zip(p["freqs"], p["phases_left"]))
        right = p["base"] + amp * sum(math.sin(w * tau + ph)
                                      for w, ph in zip(p["freqs"], p["phases_right"]))
        return left, right

    def turn_rate(self, tau: float) -> float:
        p = self.params
        if "turn_amp" in p:
            return p["turn_amp"] * math.sin(p["turn_freq"] * tau)
        return p.get("turn_rate", 0.0)


@dataclass(frozen=True)
class MissionScript:
    segments: tuple

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def at(self, t: float) -> tuple[Segment, float]:
        start = 0.0
        for seg in self.segments:
            if t < start + seg.duration:
                return seg, t - start
            start += seg.duration
        return self.segments[-1], self.segments[-1].duration

    def to_dict(self) -> dict:
        return {"segments": [{"kind": s.kind, "duration": s.duration, "params": s.params}
                             for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "MissionScript":
        return cls(tuple(Segment(s["kind"], s["duration"], s.get("params", {}))
                         for s in d["segments"]))


def pe_mission(duration: float = 600.0, seed: int = 0) -> MissionScript:
    """Persistently exciting multi-sine on both thrusters plus a weaving turn."""
    rng = np.random.default_rng(seed)
    freqs = [0.05, 0.13, 0.31, 0.71, 1.3]
    params = {"base": 0.5, "amp": 0.7, "freqs": freqs,
              "phases_left": rng.uniform(0, 2 * math.pi, len(freqs)).tolist(),
              "phases_right": rng.uniform(0, 2 * math.pi, len(freqs)).tolist(),
              "turn_amp": 0.6, "turn_freq": 0.23, "saturate": True}
    return MissionScript((Segment("multisine", duration, params),))


def patrol_mission(duration: float = 900.0, seed: int = 0, disruptions: bool = True) -> MissionScript:
    """Operational-looking mission: transits, speed changes, loiters and turns.

    Segment lengths are 30-120 s; with ``disruptions`` an occasional idle
    pause or abort is mixed in.
    """
    rng = np.random.default_rng(seed)
    segs = []
    total = 0.0
    level = 0.0
    while total < duration:
        d = float(min(rng.uniform(30.0, 120.0), duration - total))
        if d <= 0:
            break
        roll = rng.random()
        turn = ({"turn_amp": float(rng.uniform(0.1, 0.6)), "turn_freq": float(rng.uniform(0.05, 0.3))}
                if rng.random() < 0.5 else {"turn_rate": float(rng.uniform(-0.3, 0.3))})
        if disruptions and roll < 0.06:
            segs.append(Segment("abort", d, turn))
            level = 0.0
        elif disruptions and roll < 0.12:
            segs.append(Segment("idle", d, turn))
            level = 0.0
        elif roll < 0.45:
            new = float(rng.uniform(0.2, 1.0))
            bias = float(rng.uniform(-0.1, 0.1))
            segs.append(Segment("ramp", d, {"left": level, "right": level,
                                            "left_end": min(max(new + bias, 0.0), 1.0),
                                            "right_end": min(max(new - bias, 0.0), 1.0),
                                            **turn}))
            level = new
        elif roll < 0.75:
            level = float(rng.uniform(0.2, 1.0))
            bias = float(rng.uniform(-0.1, 0.1))
            segs.append(Segment("step", d, {"left": min(max(level + bias, 0.0), 1.0),
                                            "right": min(max(level - bias, 0.0), 1.0), **turn}))
        else:
            freqs = sorted(rng.uniform(0.02, 0.25, 3).tolist())
            base = float(rng.uniform(0.35, 0.7))
            segs.append(Segment("multisine", d, {
                "base": base, "amp": float(rng.uniform(0.2, 0.5)), "freqs": freqs,
                "phases_left": rng.uniform(0, 2 * math.pi, 3).tolist(),
                "phases_right": rng.uniform(0, 2 * math.pi, 3).tolist(), "saturate": True,
                **turn}))
            level = base
        total += d
    return MissionScript(tuple(segs))


@dataclass
class SimResult:
    log: MissionLog
    t: np.ndarray
    v_true: np.ndarray
    xi_left: np.ndarray
    xi_right: np.ndarray
    heading: np.ndarray
    heading_rate: np.ndarray


def simulate(spec: VehicleSpec, script: MissionScript, run_id: str = "run0", rate: float = 10.0,
             substeps: int = 10, seed: int | None = None, t0: float = 0.0,
             v0: float = 0.0, heading0: float = 0.0, publish_heading_rate: bool = False,
             jitter: float = 0.0) -> SimResult:
    """Integrate the truth plant and emit a timestamped message log.

    Commands and turn rate are sampled at the message rate and held for the
    whole sample interval; the plant is integrated with ``substeps`` Euler
    steps per interval.  Velocity messages carry additive Gaussian noise and
    occasional uniform outlier spikes; they are absent during aborts.
    """
    if script.duration <= 0:
        raise ValueError("mission has zero duration")
    dt = 1.0 / rate
    n = int(round(script.duration * rate))
    if n == 0:
        raise ValueError("mission shorter than one sample")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    p = spec.truth
    t = t0 + dt * np.arange(n)
    v_true = np.empty(n)
    xl = np.empty(n)
    xr = np.empty(n)
    hd = np.empty(n)
    hr = np.empty(n)
    aborted = np.zeros(n, dtype=bool)
    v, heading = v0, heading0
    h = dt / substeps
    for k in range(n):
        seg, tau = script.at(k * dt)
        left, right = seg.levels(tau)
        xl[k] = spec.xi_max * min(max(left, 0.0), 1.0)
        xr[k] = spec.xi_max * min(max(right, 0.0), 1.0)
        hr[k] = seg.turn_rate(tau)
        aborted[k] = seg.kind == "abort"
        v_true[k] = v
        hd[k] = math.remainder(heading, 2 * math.pi)
        for _ in range(substeps):
            v = surge.step(p, v, hr[k], xl[k], xr[k], h, spec.v_max)
        heading += hr[k] * dt

    noise = spec.noise
    v_meas = v_true + (rng.normal(0.0, noise.velocity_std, n) if noise.velocity_std > 0 else 0.0)
    outliers = rng.random(n) < noise.outlier_prob
    v_meas = v_meas + outliers * rng.uniform(-noise.outlier_magnitude, noise.outlier_magnitude, n)
    offsets = rng.uniform(0.0, jitter, (n, 5)) if jitter > 0 else np.zeros((n, 5))

    msgs = []
    for k in range(n):
        tk = float(t[k])
        msgs.append(Message(float(tk + offsets[k, 0]), "heading", float(hd[k])))
        if publish_heading_rate:
            msgs.append(Message(float(tk + offsets[k, 1]), "heading_rate", float(hr[k])))
        msgs.append(Message(float(tk + offsets[k, 2]), "thrust_left", float(xl[k])))
        msgs.append(Message(float(tk + offsets[k, 3]), "thrust_right", float(xr[k])))
        if not aborted[k]:
            msgs.append(Message(float(tk + offsets[k, 4]), "velocity", float(v_meas[k])))
    msgs.sort(key=lambda m: m.timestamp)
    log = MissionLog(spec.vehicle_id, run_id, msgs)
    log.n_outliers = int(outliers.sum())
    return SimResult(log, t, v_true, xl, xr, hd, hr)


def replay_truth(spec: VehicleSpec, sim: SimResult, rate: float = 10.0, substeps: int = 10) -> np.ndarray:
    """Re-integrate the truth plant from the logged commands (self-consistency)."""
    dt = 1.0 / rate
    h = dt / substeps
    out = np.empty(len(sim.t))
    v = float(sim.v_true[0])
    for k in range(len(sim.t)):
        out[k] = v
        for _ in range(substeps):
            v = surge.step(spec.truth, v, sim.heading_rate[k], sim.xi_left[k], sim.xi_right[k],
                           h, spec.v_max)
    return out
