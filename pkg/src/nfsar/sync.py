"""
Position-synchronized triggering for a two-radar scanner.

A trapezoidal move produces a stepper pulse stream; the synchronizer counts
pulses and fires each radar when the platform reaches that radar's next
breakpoint. Triggering is based purely on pulse counts, so acceleration does
not distort the sampling grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

_TOL = 1e-9


@dataclass(frozen=True)
class DriveConfig:
    """Actuator lead (``mm_per_rev``) and driver microstepping (``pulses_per_rev``)."""

    mm_per_rev: float
    pulses_per_rev: int
    axis: str = "x"

    def __post_init__(self):
        if not self.mm_per_rev > 0:
            raise ValueError("mm_per_rev must be positive")
        if int(self.pulses_per_rev) != self.pulses_per_rev or self.pulses_per_rev < 1:
            raise ValueError("pulses_per_rev must be a positive integer")

    @property
    def mm_per_pulse(self) -> float:
        return mm_per_pulse(self)


def mm_per_pulse(drive: DriveConfig) -> float:
    return drive.mm_per_rev / drive.pulses_per_rev


@dataclass(frozen=True)
class MotionProfile:
    """Symmetric trapezoidal move; ``accel`` may be ``math.inf`` for constant velocity."""

    travel: float
    v_max: float
    accel: float
    direction: int = 1

    def __post_init__(self):
        if not (self.travel > 0 and self.v_max > 0 and self.accel > 0):
            raise ValueError("travel, v_max and accel must be positive")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    @property
    def peak_velocity(self) -> float:
        if math.isinf(self.accel):
            return self.v_max
        return min(self.v_max, math.sqrt(self.accel * self.travel))

    @property
    def ramp_time(self) -> float:
        return 0.0 if math.isinf(self.accel) else self.peak_velocity / self.accel

    @property
    def ramp_distance(self) -> float:
        return 0.5 * self.peak_velocity * self.ramp_time

    @property
    def duration(self) -> float:
        cruise = self.travel - 2 * self.ramp_distance
        return 2 * self.ramp_time + cruise / self.peak_velocity

    def position(self, t):
        """Distance travelled (mm) at time ``t`` (s)."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        ta, da, v, T = self.ramp_time, self.ramp_distance, self.peak_velocity, self.duration
        if ta == 0:
            return v * t
        return np.where(
            t <= ta,
            0.5 * self.accel * t**2,
            np.where(
                t <= T - ta,
                da + v * (t - ta),
                self.travel - 0.5 * self.accel * (T - t) ** 2,
            ),
        )

    def time_at(self, x):
        """Inverse of :meth:`position`: first time the distance ``x`` is reached."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.travel)
        ta, da, v, T = self.ramp_time, self.ramp_distance, self.peak_velocity, self.duration
        if ta == 0:
            return x / v
        with np.errstate(invalid="ignore"):
            return np.where(
                x <= da,
                np.sqrt(2 * x / self.accel),
                np.where(
                    x <= self.travel - da,
                    ta + (x - da) / v,
                    T - np.sqrt(np.maximum(2 * (self.travel - x) / self.accel, 0.0)),
                ),
            )


@dataclass(frozen=True, eq=False)
class PulseStream:
    """Pulse timestamps of one move.

    Platform position after pulse ``i`` (1-based) is
    ``start + direction * i * mm_per_pulse``.
    """

    times: np.ndarray
    direction: int
    mm_per_pulse: float
    start: float = 0.0

    def __len__(self):
        return len(self.times)

    def position(self, count) -> np.ndarray:
        return self.start + self.direction * np.asarray(count) * self.mm_per_pulse

    def retimed(self, times) -> "PulseStream":
        return PulseStream(np.asarray(times, float), self.direction, self.mm_per_pulse, self.start)


def generate_pulse_stream(profile: MotionProfile, drive: DriveConfig, start=None) -> PulseStream:
    """Emit one pulse each time the platform covers another ``mm_per_pulse``.

    A reverse move (``direction=-1``) starts by default at the last pulse
    position of the matching forward move, so both directions share one
    position lattice.
    """
    mpp = mm_per_pulse(drive)
    n = int(math.floor(profile.travel / mpp + _TOL))
    if start is None:
        start = 0.0 if profile.direction > 0 else n * mpp
    if n == 0:
        warnings.warn("travel is shorter than one pulse; empty pulse stream", stacklevel=2)
        return PulseStream(np.zeros(0), profile.direction, mpp, start)
    times = profile.time_at(mpp * np.arange(1, n + 1))
    return PulseStream(times, profile.direction, mpp, start)


@dataclass(frozen=True)
class TriggerPlan:
    """Breakpoints ``x_offset + n*step`` (n < count), in mm; radar 2 sits ``delta_x`` behind radar 1."""

    x_offset: float
    step: float
    count: int
    delta_x: float = 0.0
    periodicity: float = 0.0  # accepted for bookkeeping only

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("count must be a positive integer")
        if not self.x_offset >= 0:
            raise ValueError("x_offset must be >= 0")

    @property
    def breakpoints(self) -> np.ndarray:
        return self.x_offset + self.step * np.arange(self.count)


@dataclass(frozen=True)
class TriggerEvent:
    breakpoint: int
    pulse_index: int
    position: float
    time: float


@dataclass(frozen=True, eq=False)
class TriggerRecord:
    """Trigger events per radar, in firing order; ``position`` is the radar's own location."""

    radar1: tuple
    radar2: tuple
    direction: int
    mm_per_pulse: float
    delta_x: float
    start: float
    missed: tuple = (0, 0)

    def radar(self, which: int) -> tuple:
        return self.radar1 if which == 1 else self.radar2

    def as_rows(self):
        for which in (1, 2):
            for ev in self.radar(which):
                yield which, ev.breakpoint, ev.pulse_index, ev.position, ev.time


def _fire(stream: PulseStream, targets: np.ndarray, radar_offset: float) -> tuple:
    """Pulse counts at which each platform-coordinate target is first reached."""
    mpp, d, n = stream.mm_per_pulse, stream.direction, len(stream)
    # signed distance from the start, in pulses; the synchronizer stores these as integers
    need = d * (targets - stream.start) / mpp
    counts = np.ceil(need - _TOL).astype(np.int64)
    reachable = (need >= -_TOL) & (counts <= n)
    order = np.argsort(counts, kind="stable")
    events = []
    for b in order:
        if not reachable[b]:
            continue
        c = int(counts[b])
        t = 0.0 if c == 0 else float(stream.times[c - 1])
        events.append(TriggerEvent(int(b), c, float(stream.position(c)) - radar_offset, t))
    return tuple(events), int((~reachable).sum())


def run_synchronizer(pulses: PulseStream, plan: TriggerPlan, drive: DriveConfig) -> TriggerRecord:
    """Fire each radar on the first pulse at which it reaches its next breakpoint."""
    if not math.isclose(pulses.mm_per_pulse, mm_per_pulse(drive), rel_tol=1e-12):
        raise ValueError("pulse stream was generated for a different drive")
    bp = plan.breakpoints
    r1, miss1 = _fire(pulses, bp, 0.0)
    r2, miss2 = _fire(pulses, bp + plan.delta_x, plan.delta_x)
    if miss1 or miss2:
        warnings.warn(
            f"breakpoints out of reach: radar 1 missed {miss1}, radar 2 missed {miss2}",
            stacklevel=2,
        )
    return TriggerRecord(
        r1, r2, pulses.direction, pulses.mm_per_pulse, plan.delta_x, pulses.start, (miss1, miss2)
    )


@dataclass(frozen=True)
class GridReport:
    ok: bool
    max_position_error: float
    max_alignment_error: float
    triggers: tuple
    missed: tuple
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_position_error_mm": self.max_position_error,
            "max_alignment_error_mm": self.max_alignment_error,
            "triggers_radar1": self.triggers[0],
            "triggers_radar2": self.triggers[1],
            "missed_radar1": self.missed[0],
            "missed_radar2": self.missed[1],
            "message": self.message,
        }


def verify_uniform_grid(record: TriggerRecord, plan: TriggerPlan, drive: DriveConfig) -> GridReport:
    """Check trigger positions against the ideal grid and against each other."""
    mpp = mm_per_pulse(drive)
    counts = (len(record.radar1), len(record.radar2))
    if counts[0] == 0 and counts[1] == 0:
        return GridReport(False, math.inf, math.inf, counts, record.missed, "no triggers recorded")
    ideal = plan.breakpoints
    pos_err = 0.0
    for which in (1, 2):
        for ev in record.radar(which):
            pos_err = max(pos_err, abs(ev.position - ideal[ev.breakpoint]))
    by_bp = {ev.breakpoint: ev for ev in record.radar2}
    align = 0.0
    for ev in record.radar1:
        other = by_bp.get(ev.breakpoint)
        if other is None:
            continue
        # in pulse units first so on-lattice offsets cancel exactly
        diff = record.direction * (other.pulse_index - ev.pulse_index) * mpp - record.delta_x
        align = max(align, abs(diff))
    tol = mpp * (1 + 1e-9)
    ok = pos_err <= tol and align <= tol and record.missed == (0, 0)
    msg = "" if ok else "grid check failed"
    if record.missed != (0, 0):
        msg = f"missed triggers {record.missed}"
    return GridReport(ok, float(pos_err), float(align), counts, record.missed, msg)
