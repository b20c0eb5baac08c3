"""Assembly of asynchronous messages into measurement frames."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from surgeid.logs import Message

INPUT_CHANNELS = ("heading", "thrust_left", "thrust_right")


@dataclass(frozen=True)
class MeasurementFrame:
    t: float
    v_meas: float | None
    theta: float
    thetadot: float
    xi_l: float
    xi_r: float


def quantize_velocity(v: float, step: float = 0.05) -> float:
    """Round to the nearest multiple of ``step``, ties away from zero.

    Decimal arithmetic on the shortest repr keeps ties such as 0.125 exact.
    """
    if step <= 0:
        return v
    q = (Decimal(repr(v)) / Decimal(repr(step))).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return float(q * Decimal(repr(step)))


def wrap_angle(a: float) -> float:
    return math.remainder(a, 2 * math.pi)


class FrameGate:
    """Staleness gate.

    Messages are consumed in timestamp order.  A cycle closes when an input
    channel repeats (or on ``flush``); at that point a frame is emitted if the
    latest heading and thruster messages all lie within ``window`` of each
    other.  The newest unused velocity is attached only if it also lies in
    the window, otherwise the frame is prediction-only.  Heading rate comes
    from a fresh ``heading_rate`` message if present, else from differencing
    consecutive frame headings (0 on the first frame or after a gap longer
    than ``max_gap``).
    """

    def __init__(self, window: float = 0.2, quant_step: float = 0.05, max_gap: float = 1.0):
        if not window > 0:
            raise ValueError("window must be positive")
        self.window = window
        self.quant_step = quant_step
        self.max_gap = max_gap
        self.latest: dict[str, tuple[float, float]] = {}
        self._cycle: set[str] = set()
        self._velocity_used_at: float | None = None
        self._prev_heading: tuple[float, float] | None = None
        self.incomplete = 0

    def push(self, msg: Message) -> MeasurementFrame | None:
        frame = None
        if msg.channel in INPUT_CHANNELS and msg.channel in self._cycle:
            frame = self._close_cycle()
        self.latest[msg.channel] = (msg.timestamp, msg.value)
        if msg.channel in INPUT_CHANNELS:
            self._cycle.add(msg.channel)
        return frame

    def continuity(self) -> dict:
        """State a resumed gate needs to carry on seamlessly after a flush."""
        return {"prev_heading": None if self._prev_heading is None else list(self._prev_heading),
                "velocity_used_at": self._velocity_used_at}

    def restore(self, d: dict) -> None:
        ph = d.get("prev_heading")
        self._prev_heading = None if ph is None else (ph[0], ph[1])
        self._velocity_used_at = d.get("velocity_used_at")

    def flush(self) -> MeasurementFrame | None:
        return self._close_cycle() if self._cycle else None

    def _close_cycle(self) -> MeasurementFrame | None:
        self._cycle = set()
        if any(c not in self.latest for c in INPUT_CHANNELS):
            self.incomplete += 1
            return None
        times = [self.latest[c][0] for c in INPUT_CHANNELS]
        t_new, t_old = max(times), min(times)
        if t_new - t_old > self.window:
            self.incomplete += 1
            return None

        v_meas = None
        if "velocity" in self.latest:
            t_v, v = self.latest["velocity"]
            fresh = t_v != self._velocity_used_at  # each velocity message is used once
            if fresh and max(t_new, t_v) - min(t_old, t_v) <= self.window:
                v_meas = quantize_velocity(v, self.quant_step)
                self._velocity_used_at = t_v

        t_h, theta = self.latest["heading"]
        thetadot = 0.0
        rate = self.latest.get("heading_rate")
        if rate is not None and abs(rate[0] - t_new) <= self.window:
            thetadot = rate[1]
        elif self._prev_heading is not None and 0 < t_h - self._prev_heading[0] <= self.max_gap:
            thetadot = wrap_angle(theta - self._prev_heading[1]) / (t_h - self._prev_heading[0])
        self._prev_heading = (t_h, theta)
        return MeasurementFrame(t_new, v_meas, theta, thetadot,
                                self.latest["thrust_left"][1], self.latest["thrust_right"][1])


def frames_from_messages(messages, window: float = 0.2, quant_step: float = 0.05,
                         max_gap: float = 1.0):
    gate = FrameGate(window, quant_step, max_gap)
    frames = []
    for msg in messages:
        f = gate.push(msg)
        if f is not None:
            frames.append(f)
    f = gate.flush()
    if f is not None:
        frames.append(f)
    return frames
