"""FastAPI app: each session is one long-running stream engine."""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from surgeid import snapshot
from surgeid.config import RunConfig
from surgeid.engine import StreamEngine
from surgeid.logs import Message
from surgeid.rnn import RnnWeights, certify, equilibria
from surgeid.service import schemas


class _Session:
    def __init__(self, engine: StreamEngine, sink: snapshot.DirectorySink):
        self.engine = engine
        self.sink = sink
        self.lock = threading.Lock()


def _certification(w: RnnWeights) -> schemas.CertificationOut:
    rep = certify(w)
    eq = equilibria(w)
    return schemas.CertificationOut(
        theorem3_ok=rep.theorem3_ok, gersgorin_ok=rep.gersgorin_ok, M_psd_ok=rep.M_psd_ok,
        min_eigenvalue_of_M=rep.min_eigenvalue_of_M,
        contraction_constant=rep.contraction_constant,
        violating_neurons=rep.violating_neurons,
        equilibria=[schemas.Equilibrium(x=e.x, slope=e.slope, kind=e.kind) for e in eq.equilibria],
        marginal_segments=[list(s) for s in eq.marginal_segments])


def create_app(cfg: RunConfig | None = None) -> FastAPI:
    cfg = cfg or RunConfig()
    cfg.engine.validate()
    snap_dir = Path(cfg.snapshots)
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()
    app = FastAPI(title="surgeid", version="0.1.0")
    app.state.sessions = sessions

    def get(session_id: str) -> _Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(404, f"no session {session_id}")
        return s

    def info(session_id: str, s: _Session, resumed=None) -> schemas.SessionInfo:
        e = s.engine
        return schemas.SessionInfo(session_id=session_id, vehicle_id=e.vehicle_id, run_id=e.run_id,
                                   resumed_from=resumed, stream_time=e.elapsed)

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", response_model=schemas.SessionInfo, status_code=201)
    def open_session(body: schemas.SessionCreate):
        sink = snapshot.DirectorySink(snap_dir)
        engine = StreamEngine(cfg.engine, body.vehicle_id, body.run_id, mass=body.mass,
                              learn=body.learn, snapshot_sink=sink)
        resumed = None
        if body.resume:
            found = snapshot.load_latest(snap_dir, body.vehicle_id)
            if found is not None:
                try:
                    engine.load_state(found[0])
                except (KeyError, ValueError) as exc:
                    raise HTTPException(409, f"latest snapshot unusable: {exc}") from exc
                resumed = found[1].name
        sid = uuid.uuid4().hex
        with registry_lock:
            sessions[sid] = _Session(engine, sink)
        return info(sid, sessions[sid], resumed)

    @app.get("/sessions")
    def list_sessions():
        return [info(k, s) for k, s in sorted(sessions.items())]

    @app.post("/sessions/{session_id}/messages", response_model=schemas.PredictionBatch)
    def push(session_id: str, body: schemas.MessageBatch):
        s = get(session_id)
        with s.lock:
            before = len(s.sink.written)
            records = []
            for m in sorted(body.messages, key=lambda m: m.timestamp):
                records.extend(s.engine.feed(Message(m.timestamp, m.channel, m.value)))
            written = [p.name for p in s.sink.written[before:]]
        return schemas.PredictionBatch(records=[schemas.Prediction.from_record(r) for r in records],
                                       snapshots_written=written)

    @app.get("/sessions/{session_id}/metrics", response_model=schemas.Metrics)
    def metrics(session_id: str):
        s = get(session_id)
        with s.lock:
            e = s.engine
            summ = e.session_metrics.summary()
            return schemas.Metrics(
                frames=e.session_metrics.frames, prediction_only=e.session_metrics.prediction_only,
                skipped=e.session_metrics.skipped, stale_cycles=e.gate.incomplete,
                methods={k: schemas.MethodSummary(
                    mae=None if np.isnan(v["mae"]) else v["mae"],
                    mse=None if np.isnan(v["mse"]) else v["mse"], count=v["count"])
                    for k, v in summ.items()},
                ensemble_weights=[float(c) for c in e.ensemble.c_bar], failures=dict(e.failures))

    @app.get("/sessions/{session_id}/certification", response_model=schemas.CertificationOut)
    def session_certification(session_id: str):
        s = get(session_id)
        with s.lock:
            return _certification(s.engine.rnn.weights)

    @app.post("/sessions/{session_id}/snapshot", response_model=schemas.SnapshotOut)
    def take_snapshot(session_id: str):
        s = get(session_id)
        with s.lock:
            path = snapshot.save(s.engine, snap_dir)
            return schemas.SnapshotOut(name=path.name, stream_time=s.engine.elapsed)

    @app.delete("/sessions/{session_id}", response_model=schemas.PredictionBatch)
    def close(session_id: str):
        s = get(session_id)
        with s.lock:
            before = len(s.sink.written)
            records = s.engine.close()
            written = [p.name for p in s.sink.written[before:]]
        with registry_lock:
            sessions.pop(session_id, None)
        return schemas.PredictionBatch(records=[schemas.Prediction.from_record(r) for r in records],
                                       snapshots_written=written)

    @app.post("/certify", response_model=schemas.CertificationOut)
    def certify_weights(body: schemas.RnnPayload):
        n, m = body.n, body.m
        if n < 2:
            raise HTTPException(422, "certification needs n > 1")
        if len(body.a) != n or len(body.w1) != n or len(body.b) != n or len(body.W2) != n * m:
            raise HTTPException(422, f"weight lengths do not match n={n}, m={m}")
        w = RnnWeights(body.a, body.w1, np.array(body.W2).reshape(n, m), body.b)
        return _certification(w)

    return app
