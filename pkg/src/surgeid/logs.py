"""Mission log and prediction-record text formats.

Mission log::

    # vehicle_id=usv01,run_id=run0
    timestamp,channel,value
    0.0,heading,0.0
    ...

Malformed data lines are skipped and counted, never fatal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

CHANNELS = ("velocity", "heading", "heading_rate", "thrust_left", "thrust_right")

log = logging.getLogger(__name__)


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    timestamp: float
    channel: str
    value: float


@dataclass
class MissionLog:
    vehicle_id: str
    run_id: str
    messages: list = field(default_factory=list)
    bad_lines: int = 0
    n_outliers: int = 0

    def __len__(self):
        return len(self.messages)

    def split(self, t_split: float) -> tuple["MissionLog", "MissionLog"]:
        first = [m for m in self.messages if m.timestamp < t_split]
        second = [m for m in self.messages if m.timestamp >= t_split]
        return (MissionLog(self.vehicle_id, self.run_id, first),
                MissionLog(self.vehicle_id, self.run_id, second))


def write_log(mlog: MissionLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# vehicle_id={mlog.vehicle_id},run_id={mlog.run_id}",
             "timestamp,channel,value"]
    lines += [f"{float(m.timestamp)!r},{m.channel},{float(m.value)!r}" for m in mlog.messages]
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_header(line: str) -> dict:
    fields = {}
    for part in line.lstrip("#").strip().split(","):
        if "=" in part:
            k, v = part.split("=", 1)
            fields[k.strip()] = v.strip()
    return fields


def read_log(path) -> MissionLog:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise LogFormatError(f"{path}: missing '# vehicle_id=...,run_id=...' header")
    header = _parse_header(lines[0])
    if "vehicle_id" not in header:
        raise LogFormatError(f"{path}: header lacks vehicle_id")
    mlog = MissionLog(header["vehicle_id"], header.get("run_id", path.stem))
    for line in lines[1:]:
        if not line.strip() or line.startswith("timestamp"):
            continue
        parts = line.split(",")
        try:
            if len(parts) != 3 or parts[1] not in CHANNELS:
                raise ValueError(line)
            t, value = float(parts[0]), float(parts[2])
            if not (math.isfinite(t) and math.isfinite(value)):
                raise ValueError(line)
        except ValueError:
            mlog.bad_lines += 1
            continue
        mlog.messages.append(Message(t, parts[1], value))
    if mlog.bad_lines:
        log.warning("%s: skipped %d malformed lines", path, mlog.bad_lines)
    return mlog


RECORD_COLUMNS = ("t", "v_meas", "v_aid", "v_rnn", "v_rls", "v_ave", "v_we",
                  "err_aid", "err_rnn", "err_rls", "err_ave", "err_we")


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_records(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [",".join(RECORD_COLUMNS)]
    for r in records:
        rows.append(",".join(_fmt(getattr(r, c)) for c in RECORD_COLUMNS))
    path.write_text("\n".join(rows) + "\n")
    return path


def read_records(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    out = []
    for line in lines[1:]:
        vals = line.split(",")
        out.append({c: (float(v) if v else None) for c, v in zip(cols, vals)})
    return out
