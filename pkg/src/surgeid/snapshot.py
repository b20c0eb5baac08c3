"""Parameter snapshots on disk.

One JSON file per snapshot, named ``<vehicle_id>_<stream time in ms, zero
padded>.json`` so that lexicographic order is chronological order.  Floats
are written with their shortest round-trip repr, so a snapshot re-serialises
to identical bytes.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

FORMAT = "surgeid-snapshot/1"
REQUIRED = ("vehicle_id", "stream_time", "aid", "rnn", "rls", "ensemble")

log = logging.getLogger(__name__)


class SnapshotError(ValueError):
    pass


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, allow_nan=True) + "\n"


def loads(text: str) -> dict:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"unreadable snapshot: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise SnapshotError("not a surgeid snapshot")
    missing = [k for k in REQUIRED if k not in payload]
    if missing:
        raise SnapshotError(f"snapshot lacks {missing}")
    return payload


def snapshot_name(vehicle_id: str, stream_time: float) -> str:
    return f"{vehicle_id}_{int(round(stream_time * 1000)):012d}.json"


def make_payload(engine, wall_time: float | None = None) -> dict:
    payload = engine.state_dict()
    payload["format"] = FORMAT
    payload["wall_time"] = time.time() if wall_time is None else wall_time
    return payload


def save(engine, directory, wall_time: float | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = make_payload(engine, wall_time)
    path = directory / snapshot_name(engine.vehicle_id, payload["stream_time"])
    tmp = path.with_suffix(".tmp")
    tmp.write_text(dumps(payload))
    tmp.replace(path)
    return path


def read(path) -> dict:
    return loads(Path(path).read_text())


def list_snapshots(directory, vehicle_id: str | None = None) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    pattern = f"{vehicle_id}_*.json" if vehicle_id else "*.json"
    return sorted(directory.glob(pattern))


def load_latest(directory, vehicle_id: str) -> tuple[dict, Path] | None:
    """Newest readable snapshot for the vehicle; corrupt files are skipped."""
    for path in reversed(list_snapshots(directory, vehicle_id)):
        try:
            return read(path), path
        except (SnapshotError, OSError, UnicodeDecodeError) as exc:
            log.warning("skipping snapshot %s: %s", path, exc)
    return None


class DirectorySink:
    """Snapshot sink for ``StreamEngine``; remembers what it wrote."""

    def __init__(self, directory, wall_time: float | None = None):
        self.directory = Path(directory)
        self.wall_time = wall_time
        self.written: list[Path] = []

    def __call__(self, engine) -> None:
        self.written.append(save(engine, self.directory, self.wall_time))
