"""Evaluation harness: fleet training, frozen-parameter cross-validation and
the cross-vehicle error matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from surgeid import aid as aidmod
from surgeid import rls as rlsmod
from surgeid.config import EngineConfig, RunConfig, SimConfig
from surgeid.engine import StreamEngine
from surgeid.ensemble import WeightedEnsemble
from surgeid.gate import frames_from_messages
from surgeid.logs import MissionLog
from surgeid.missions import NoiseModel, make_fleet, patrol_mission, simulate
from surgeid.rnn import RnnModel, rnn_inputs
from surgeid.snapshot import SnapshotError, make_payload

METHODS = ("aid", "rnn", "rls", "ave", "we")


@dataclass
class LogFrames:
    """A mission log passed through the staleness gate, as arrays."""

    vehicle_id: str
    run_id: str
    t: np.ndarray
    dt: np.ndarray
    v_meas: np.ndarray  # NaN where the frame carried no measurement
    theta: np.ndarray
    thetadot: np.ndarray
    xi_l: np.ndarray
    xi_r: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def measured(self) -> np.ndarray:
        return ~np.isnan(self.v_meas)


def log_frames(mlog: MissionLog, cfg: EngineConfig) -> LogFrames:
    frames = frames_from_messages(mlog.messages, cfg.window, cfg.quant_step, cfg.dt_max)
    if not frames:
        raise ValueError(f"log {mlog.run_id} produced no complete frames")
    t = np.array([f.t for f in frames])
    dt = np.empty_like(t)
    dt[0] = cfg.nominal_dt
    diff = np.diff(t)
    dt[1:] = np.where(diff > 0, np.minimum(diff, cfg.dt_max), cfg.nominal_dt)
    return LogFrames(mlog.vehicle_id, mlog.run_id, t, dt,
                     np.array([math.nan if f.v_meas is None else f.v_meas for f in frames]),
                     np.array([f.theta for f in frames]), np.array([f.thetadot for f in frames]),
                     np.array([f.xi_l for f in frames]), np.array([f.xi_r for f in frames]))


def fleet_scripts(sc: SimConfig, seed: int) -> list:
    """Mission scripts shared by the whole fleet (one per mission slot)."""
    if not sc.mission_duration > 0:
        raise ValueError("mission duration must be positive")
    return [patrol_mission(sc.mission_duration, seed=seed * 1000 + j, disruptions=sc.disruptions)
            for j in range(sc.missions_per_vehicle)]


def simulate_fleet(sc: SimConfig, seed: int, v_max: float = 2.0, xi_max: float = 100.0):
    """Fleet specs and their mission logs, ``{vehicle_id: [MissionLog, ...]}``.

    Every vehicle flies the same scripts; truth parameters and noise draws
    differ per vehicle.
    """
    noise = NoiseModel(sc.velocity_std, sc.outlier_prob, sc.outlier_magnitude)
    fleet = make_fleet(sc.fleet_size, sc.spread, seed, noise=noise, v_max=v_max, xi_max=xi_max)
    scripts = fleet_scripts(sc, seed)
    logs = {}
    for spec in fleet:
        logs[spec.vehicle_id] = [
            simulate(spec, script, run_id=f"m{j:02d}", rate=sc.rate, substeps=sc.substeps,
                     seed=spec.seed + j).log
            for j, script in enumerate(scripts)]
    return fleet, logs


class MemorySink:
    def __init__(self, wall_time: float = 0.0):
        self.payloads: list[dict] = []
        self.wall_time = wall_time

    def __call__(self, engine) -> None:
        self.payloads.append(make_payload(engine, self.wall_time))


def train_vehicle(logs, cfg: EngineConfig, vehicle_id: str, mass: float | None = None,
                  sink=None, initial: dict | None = None) -> StreamEngine:
    """Stream every log of one vehicle through one engine, in order."""
    engine = StreamEngine(cfg, vehicle_id, logs[0].run_id, mass=mass, snapshot_sink=sink)
    if initial is not None:
        engine.load_state(initial)
    for i, mlog in enumerate(logs):
        if i:
            engine.new_mission(mlog.run_id)
        engine.run(mlog.messages)
    return engine


# -- frozen replay -------------------------------------------------------

REPLAY_MODES = ("forward", "observer")


def replay(payload: dict, lf: LogFrames, cfg: EngineConfig, fuse: bool = True,
           mode: str = "forward") -> dict:
    """Frozen-parameter one-step predictions of every method over a log.

    ``forward`` simulates the AID and RNN on their own estimates from the
    log's first measured velocity, driven by the logged inputs only.
    ``observer`` keeps the AID measurement correction and the snapshot's
    recurrent states, i.e. exactly ``StreamEngine`` with ``learn=False``.
    The ensemble weights keep adapting online in both modes.
    """
    if mode not in REPLAY_MODES:
        raise ValueError(f"mode must be one of {REPLAY_MODES}")
    rnn_d = payload["rnn"]
    if (rnn_d["n"], rnn_d["m"]) != (cfg.rnn.n, cfg.rnn.m):
        raise SnapshotError(f"snapshot RNN is {rnn_d['n']}x{rnn_d['m']}, config expects "
                            f"{cfg.rnn.n}x{cfg.rnn.m}")
    T = len(lf)
    meas = lf.measured
    forward = mode == "forward"
    first = lf.v_meas[np.argmax(meas)] if forward and meas.any() else None
    out = {}
    enabled = set(cfg.enabled)

    if "aid" in enabled:
        a = payload["aid"]
        th = np.array(a["theta_hat"])
        m, k_v = a["m"], a["k_v"]
        xl, xr = np.maximum(lf.xi_l, 0.0), np.maximum(lf.xi_r, 0.0)
        pred = np.empty(T)
        v_hat = a["v_hat"] if first is None else float(first)
        if forward:
            for k in range(T):
                pred[k] = v_hat
                w = aidmod.regressor(v_hat, lf.thetadot[k], xl[k], xr[k])
                v_hat = v_hat + lf.dt[k] * float(w @ th) / m
        else:
            v = np.where(meas, lf.v_meas, 0.0)
            W = np.stack([np.abs(v) * v, v, np.abs(lf.thetadot * v), xl, xl * xl, xl * v,
                          xr, xr * xr, xr * v], axis=1)
            force = W @ th
            for k in range(T):
                pred[k] = v_hat
                if meas[k]:
                    v_hat = v_hat + lf.dt[k] * (force[k] / m + k_v * (lf.v_meas[k] - v_hat))
                else:
                    w = aidmod.regressor(v_hat, lf.thetadot[k], xl[k], xr[k])
                    v_hat = v_hat + lf.dt[k] * float(w @ th) / m
        out["aid"] = pred
    else:
        out["aid"] = np.full(T, math.nan)

    if "rnn" in enabled:
        model = RnnModel.from_dict(rnn_d)
        w = model.weights
        channels = tuple(cfg.rnn.inputs)
        U = np.array([rnn_inputs(channels, lf.xi_l[k], lf.xi_r[k], lf.theta[k], lf.thetadot[k],
                                 cfg.xi_max) for k in range(T)])
        pre = U @ w.W2.T + w.b
        x = model.x if first is None else float(first) / (2.0 * cfg.v_max)
        xs = np.empty(T)
        a_vec, w1 = w.a, w.w1
        for k in range(T):
            x = float(a_vec @ np.maximum(w1 * x + pre[k], 0.0))
            xs[k] = x
        out["rnn"] = xs * (2.0 * cfg.v_max)
    else:
        out["rnn"] = np.full(T, math.nan)

    if "rls" in enabled:
        zeta = np.array(payload["rls"]["theta"])
        xl, xr = lf.xi_l / cfg.xi_max, lf.xi_r / cfg.xi_max
        Phi = np.stack([xr, xr ** 2, xr ** 3, xl, xl ** 2, xl ** 3,
                        np.sin(lf.theta), np.cos(lf.theta), np.abs(lf.thetadot)], axis=1)
        out["rls"] = Phi @ zeta
    else:
        out["rls"] = np.full(T, math.nan)

    comps = np.stack([out["aid"], out["rnn"], out["rls"]], axis=1)
    with np.errstate(invalid="ignore"):
        out["ave"] = np.nanmean(comps, axis=1)
    if fuse:
        ens = (WeightedEnsemble(cfg.ensemble.forgetting, cfg.ensemble.p0)
               if cfg.ensemble.reset_per_mission else WeightedEnsemble.from_dict(payload["ensemble"]))
        comps0 = np.nan_to_num(comps, nan=0.0)
        we = np.empty(T)
        for k in range(T):
            y = lf.v_meas[k] if meas[k] else None
            we[k] = ens.fuse_update(*comps0[k], y) if y is not None else ens.fuse(*comps0[k])
        out["we"] = we
    return out


def errors(preds: dict, lf: LogFrames) -> dict:
    meas = lf.measured
    return {m: p[meas] - lf.v_meas[meas] for m, p in preds.items()}


@dataclass
class CrossValRow:
    snapshot: str
    vehicle_id: str
    run_id: str
    method: str
    mae: float
    mse: float
    n: int


def distribution(values) -> dict:
    """Box-plot summary: min, quartiles, max and 1.5 IQR outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    outl = v[(v < q1 - 1.5 * iqr) | (v > q3 + 1.5 * iqr)]
    return {"min": float(v[0]), "q1": float(q1), "median": float(med), "q3": float(q3),
            "max": float(v[-1]), "n": int(v.size), "outliers": outl.tolist()}


def cross_validate(snapshots, logs, cfg: EngineConfig, methods=METHODS,
                   mode: str = "forward") -> list[CrossValRow]:
    """Every (snapshot, log) pair, frozen replay, MAE/MSE per method.

    ``snapshots`` is an iterable of ``(name, payload)``; ``logs`` of
    ``LogFrames``.  Rows come back sorted, independent of input order.
    """
    snapshots = list(snapshots)
    logs = list(logs)
    if not snapshots or not logs:
        raise ValueError("cross-validation needs at least one snapshot and one log")
    rows = []
    fuse = "we" in methods
    for name, payload in snapshots:
        for lf in logs:
            if not lf.measured.any():
                continue
            errs = errors(replay(payload, lf, cfg, fuse=fuse, mode=mode), lf)
            for m in methods:
                e = errs[m]
                e = e[~np.isnan(e)]
                if e.size:
                    rows.append(CrossValRow(name, lf.vehicle_id, lf.run_id, m,
                                            float(np.mean(np.abs(e))), float(np.mean(e * e)), e.size))
    rows.sort(key=lambda r: (r.snapshot, r.vehicle_id, r.run_id, r.method))
    return rows


def summarize(rows, metric: str = "mae") -> dict:
    by_method: dict[str, list] = {}
    for r in rows:
        by_method.setdefault(r.method, []).append(getattr(r, metric))
    return {m: distribution(v) for m, v in sorted(by_method.items())}


def pooled_mse(payload: dict, logs, cfg: EngineConfig, method: str = "ave",
               mode: str = "forward") -> float:
    sq, n = 0.0, 0
    for lf in logs:
        e = errors(replay(payload, lf, cfg, fuse=method == "we", mode=mode), lf)[method]
        e = e[~np.isnan(e)]
        sq += float(np.sum(e * e))
        n += e.size
    return sq / n if n else math.nan


def select_best(snapshots, own_logs, cfg: EngineConfig, method: str = "ave",
                mode: str = "forward") -> tuple[str, dict, float]:
    """Snapshot with the lowest self-validation MSE on the vehicle's own logs."""
    best = None
    for name, payload in snapshots:
        mse = pooled_mse(payload, own_logs, cfg, method, mode)
        if best is None or mse < best[2]:
            best = (name, payload, mse)
    if best is None:
        raise ValueError("no snapshots to choose from")
    return best


def cross_vehicle_matrix(best: dict, logs_by_vehicle: dict, cfg: EngineConfig,
                         method: str = "ave", mode: str = "forward") -> tuple[list, np.ndarray]:
    """Entry (i, j): MSE of vehicle i's best model over all of vehicle j's logs."""
    ids = sorted(best)
    missing = [v for v in ids if v not in logs_by_vehicle]
    if missing:
        raise ValueError(f"no logs for vehicles {missing}")
    M = np.empty((len(ids), len(ids)))
    for i, vi in enumerate(ids):
        for j, vj in enumerate(ids):
            M[i, j] = pooled_mse(best[vi], logs_by_vehicle[vj], cfg, method, mode)
    return ids, M


def batch_fusion(preds_list, lfs) -> dict:
    """Batch least-squares fusion over pooled replays, with component MSEs."""
    comps, ys = [], []
    for preds, lf in zip(preds_list, lfs):
        meas = lf.measured
        comps.append(np.stack([preds["aid"][meas], preds["rnn"][meas], preds["rls"][meas]], axis=1))
        ys.append(lf.v_meas[meas])
    V = np.concatenate(comps)
    y = np.concatenate(ys)
    c = np.linalg.lstsq(V, y, rcond=None)[0]
    mse = {name: float(np.mean((V[:, i] - y) ** 2)) for i, name in enumerate(("aid", "rnn", "rls"))}
    mse["fused"] = float(np.mean((V @ c - y) ** 2))
    return {"weights": c.tolist(), "mse": mse}


# -- output --------------------------------------------------------------

def _header(config: RunConfig | None, title: str) -> list[str]:
    lines = [f"# {title}"]
    if config is not None:
        lines.append("# config " + config.to_json())
    return lines


def write_crossval(rows, path, config: RunConfig | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = _header(config, "cross-validation")
    lines.append("snapshot,vehicle_id,run_id,method,mae,mse,n")
    lines += [f"{r.snapshot},{r.vehicle_id},{r.run_id},{r.method},{r.mae!r},{r.mse!r},{r.n}"
              for r in rows]
    lines.append("")
    lines.append("# distribution")
    lines.append("method,metric,min,q1,median,q3,max,n,outliers")
    for metric in ("mae", "mse"):
        for m, d in summarize(rows, metric).items():
            outl = " ".join(repr(x) for x in d["outliers"])
            lines.append(f"{m},{metric},{d['min']!r},{d['q1']!r},{d['median']!r},{d['q3']!r},"
                         f"{d['max']!r},{d['n']},{outl}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_matrix(ids, M, path, config: RunConfig | None = None, best_names: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = _header(config, "cross-vehicle MSE (rows: model, columns: data)")
    if best_names:
        lines.append("# best " + json.dumps(best_names, sort_keys=True))
    lines.append("model," + ",".join(ids))
    for vid, row in zip(ids, M):
        lines.append(vid + "," + ",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_matrix(path) -> tuple[list, np.ndarray]:
    rows = [l for l in Path(path).read_text().splitlines() if l and not l.startswith("#")]
    ids = rows[0].split(",")[1:]
    M = np.array([[float(x) for x in r.split(",")[1:]] for r in rows[1:]])
    return ids, M
