"""Command-line entry point: simulate, learn, certify, cross-validate, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from surgeid import harness, snapshot
from surgeid.config import ConfigError, RunConfig, load_config
from surgeid.engine import StreamEngine
from surgeid.logs import LogFormatError, read_log, write_log, write_records
from surgeid.rnn import RnnModel, certify, equilibria

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("surgeid")


class DataError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    for attr, key in (("snapshot_dir", "snapshots"), ("out", "out")):
        if getattr(args, attr, None) is not None:
            setattr(cfg, key, getattr(args, attr))
    return cfg


def _log_paths(spec) -> list[Path]:
    paths = []
    for item in spec:
        p = Path(item)
        if p.is_dir():
            paths += sorted(p.glob("*.log"))
        elif p.is_file():
            paths.append(p)
        else:
            raise DataError(f"no such log file or directory: {p}")
    if not paths:
        raise DataError("no mission logs found")
    return paths


def _read_logs(paths, vehicle=None):
    logs = []
    for p in paths:
        mlog = read_log(p)
        if mlog.bad_lines:
            print(f"{p}: skipped {mlog.bad_lines} malformed lines")
        if vehicle is None or mlog.vehicle_id == vehicle:
            logs.append(mlog)
    if not logs:
        raise DataError(f"no logs for vehicle {vehicle}")
    return logs


def _snapshots(directory, vehicle=None) -> list[tuple[str, dict]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"snapshot directory not found: {directory}")
    out = []
    for p in snapshot.list_snapshots(directory, vehicle):
        try:
            out.append((p.stem, snapshot.read(p)))
        except snapshot.SnapshotError as exc:
            print(f"{p}: skipped ({exc})")
    if not out:
        raise DataError(f"no readable snapshots in {directory}")
    return out


# -- commands ------------------------------------------------------------

def cmd_sim(args) -> int:
    cfg = _config(args)
    if args.duration is not None:
        cfg.sim.mission_duration = args.duration
    if args.fleet_size is not None:
        cfg.sim.fleet_size = args.fleet_size
    if not cfg.sim.mission_duration > 0:
        raise DataError("mission duration must be positive; refusing to write empty logs")
    out = Path(args.log or cfg.logs)
    fleet, logs = harness.simulate_fleet(cfg.sim, cfg.seed, cfg.engine.v_max, cfg.engine.xi_max)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for spec in fleet:
        if args.vehicle and spec.vehicle_id != args.vehicle:
            continue
        for mlog in logs[spec.vehicle_id]:
            write_log(mlog, out / f"{spec.vehicle_id}_{mlog.run_id}.log")
            n += 1
    (out / "fleet.json").write_text(json.dumps(
        {"config": cfg.to_dict(), "vehicles": [s.to_dict() for s in fleet]}, indent=1, sort_keys=True))
    print(f"wrote {n} mission logs to {out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _config(args)
    if not args.log:
        raise DataError("--log is required")
    paths = _log_paths(args.log)
    snap_dir = Path(cfg.snapshots)
    out = Path(cfg.out)
    for path in paths:
        mlog = read_log(path)
        vehicle = args.vehicle or mlog.vehicle_id
        engine = StreamEngine(cfg.engine, vehicle, mlog.run_id,
                              snapshot_sink=snapshot.DirectorySink(snap_dir))
        latest = snapshot.load_latest(snap_dir, vehicle)
        if latest is not None:
            engine.load_state(latest[0])
            print(f"{vehicle}: resumed from {latest[1].name}")
        else:
            print(f"{vehicle}: starting from defaults")
        records = engine.run(mlog.messages)
        rec_path = write_records(records, out / f"{vehicle}_{mlog.run_id}_records.csv")
        s = engine.session_metrics
        print(f"{path.name}: {s.frames} frames ({s.prediction_only} without velocity), "
              f"{mlog.bad_lines} malformed lines skipped, {engine.gate.incomplete} stale cycles")
        for m, d in s.summary().items():
            print(f"  {m:4s} MAE {d['mae']:.5f}  MSE {d['mse']:.6f}")
        print(f"  records -> {rec_path}")
    return EXIT_OK


def _certify_payload(payload: dict) -> str:
    if "rnn" not in payload:
        raise DataError("snapshot has no RNN payload")
    w = RnnModel.from_dict(payload["rnn"]).weights
    rep = certify(w)
    eq = equilibria(w)
    ok = lambda b: "pass" if b else "FAIL"  # noqa: E731
    lines = [f"vehicle {payload.get('vehicle_id', '?')}  stream time {payload.get('stream_time', 0):.1f} s",
             f"simplified neuron-wise certificate : {ok(rep.theorem3_ok)}",
             f"Gershgorin row conditions          : {ok(rep.gersgorin_ok)}",
             f"LMI matrix positive semidefinite   : {ok(rep.M_psd_ok)}",
             f"min eigenvalue of M                : {rep.min_eigenvalue_of_M:.6g}",
             f"contraction constant K             : {rep.contraction_constant:.6g}"]
    if rep.violating_neurons:
        lines.append(f"violating neurons                  : {rep.violating_neurons}")
    lines.append(f"equilibria at zero input ({len(eq.equilibria)}):")
    for e in eq.equilibria:
        lines.append(f"  x = {e.x:.6g}  slope {e.slope:.4g}  {e.kind}")
    for lo, hi in eq.marginal_segments:
        lines.append(f"  segment of fixed points [{lo:.6g}, {hi:.6g}]")
    return "\n".join(lines)


def cmd_certify(args) -> int:
    if args.snapshot:
        path = Path(args.snapshot)
        if not path.is_file():
            raise DataError(f"snapshot not found: {path}")
        payload = snapshot.read(path)
    else:
        cfg = _config(args)
        if not args.vehicle:
            raise DataError("give --snapshot PATH or --vehicle ID with --snapshot-dir")
        found = snapshot.load_latest(cfg.snapshots, args.vehicle)
        if found is None:
            raise DataError(f"no snapshots for {args.vehicle} in {cfg.snapshots}")
        payload = found[0]
    print(_certify_payload(payload))
    return EXIT_OK


def cmd_crossval(args) -> int:
    cfg = _config(args)
    snaps = _snapshots(cfg.snapshots, args.vehicle)
    logs = _read_logs(_log_paths(args.log or [cfg.logs]))
    lfs = [harness.log_frames(m, cfg.engine) for m in logs]
    rows = harness.cross_validate(snaps, lfs, cfg.engine)
    out = Path(cfg.out)
    path = out / "crossval.csv" if out.suffix == "" else out
    harness.write_crossval(rows, path, cfg)
    for m, d in harness.summarize(rows).items():
        print(f"{m:4s} MAE median {d['median']:.5f}  [{d['min']:.5f}, {d['max']:.5f}]  "
              f"{len(d['outliers'])} outliers")
    print(f"{len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_xveh(args) -> int:
    cfg = _config(args)
    snaps = _snapshots(cfg.snapshots)
    logs = _read_logs(_log_paths(args.log or [cfg.logs]))
    lfs: dict[str, list] = {}
    for m in logs:
        lfs.setdefault(m.vehicle_id, []).append(harness.log_frames(m, cfg.engine))
    by_vehicle: dict[str, list] = {}
    for name, payload in snaps:
        by_vehicle.setdefault(payload["vehicle_id"], []).append((name, payload))
    best, names = {}, {}
    for vid in sorted(by_vehicle):
        if vid not in lfs:
            print(f"{vid}: no logs, left out of the matrix")
            continue
        names[vid], best[vid], _ = harness.select_best(by_vehicle[vid], lfs[vid], cfg.engine)
    if not best:
        raise DataError("no vehicle has both snapshots and logs")
    ids, M = harness.cross_vehicle_matrix(best, lfs, cfg.engine)
    out = Path(cfg.out)
    path = out / "xveh.csv" if out.suffix == "" else out
    harness.write_matrix(ids, M, path, cfg, names)
    with np.printoptions(precision=5, linewidth=160):
        print(M)
    dom = [bool(M[i, i] < np.delete(M[i], i).min()) if len(ids) > 1 else True
           for i in range(len(ids))]
    print(f"diagonal smallest in {sum(dom)}/{len(ids)} rows -> {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from surgeid.service.app import create_app

    cfg = _config(args)
    uvicorn.run(create_app(cfg), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (default: built-in defaults)")
    common.add_argument("--seed", type=int, help="override the config seed (default 0)")
    common.add_argument("--vehicle", help="restrict to one vehicle id")
    common.add_argument("--snapshot-dir", help="snapshot directory (default runs/snapshots)")
    common.add_argument("--out", help="output directory or file (default runs/out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="surgeid", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sim", parents=[common], help="simulate a fleet and write mission logs")
    s.add_argument("--log", help="log output directory (default runs/logs)")
    s.add_argument("--duration", type=float, help="mission length in seconds (default 900)")
    s.add_argument("--fleet-size", type=int, help="number of vehicles (default 8)")
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("learn", parents=[common],
                       help="stream logs through the engine, resuming from the latest snapshot")
    s.add_argument("--log", nargs="+", help="log files or directories")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("certify", parents=[common], help="certificate and equilibrium report")
    s.add_argument("--snapshot", help="snapshot file (default: latest for --vehicle)")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("crossval", parents=[common],
                       help="frozen replay of every snapshot over every log")
    s.add_argument("--log", nargs="+", help="log files or directories (default runs/logs)")
    s.set_defaults(func=cmd_crossval)

    s = sub.add_parser("xveh", parents=[common], help="cross-vehicle MSE matrix of best snapshots")
    s.add_argument("--log", nargs="+", help="log files or directories (default runs/logs)")
    s.set_defaults(func=cmd_xveh)

    s = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LogFormatError, snapshot.SnapshotError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
