"""Post-processing metrics: RMSE, relative difference, marker angle, phases."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MODE_NAMES, ScalingContext
from .simulator import Trajectory


@dataclass(frozen=True)
class SignalSeries:
    """Time-stamped scalar samples; timestamps strictly increasing."""

    t: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        value = np.asarray(self.value, dtype=float)
        if t.ndim != 1 or t.shape != value.shape:
            raise ValueError("series needs matching 1-D time and value arrays")
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "value", value)

    @classmethod
    def from_csv(cls, path, t_column: str, value_column: str) -> "SignalSeries":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        try:
            ti = header.index(t_column)
            vi = header.index(value_column)
        except ValueError as exc:
            raise ValueError(f"column not found in {path}: {exc}") from exc
        t = np.array([float(r[ti]) for r in rows])
        v = np.array([float(r[vi]) for r in rows])
        return cls(t, v)


@dataclass(frozen=True)
class PhaseSegmentation:
    """Contiguous stick/slip intervals covering a trajectory."""

    intervals: tuple  # (t_start, t_end, mode) triples

    def durations(self) -> np.ndarray:
        return np.array([end - start for start, end, _ in self.intervals])

    def total(self) -> float:
        return float(sum(end - start for start, end, _ in self.intervals))

    def to_dict(self) -> dict:
        return {
            "intervals": [
                {"t_start": s, "t_end": e, "mode": MODE_NAMES[m]} for s, e, m in self.intervals
            ],
            "total": self.total(),
        }


def rmse(reference: SignalSeries, measured: SignalSeries) -> float:
    """Root mean square error with the measured signal interpolated onto
    the reference timestamps; samples outside the common support are dropped."""
    lo = max(reference.t[0], measured.t[0])
    hi = min(reference.t[-1], measured.t[-1])
    if lo >= hi:
        raise ValueError("signals share no time support")
    keep = (reference.t >= lo) & (reference.t <= hi)
    t = reference.t[keep]
    resampled = np.interp(t, measured.t, measured.value)
    diff = reference.value[keep] - resampled
    return float(np.sqrt(np.mean(diff * diff)))


def per_period_rmse(reference: SignalSeries, measured: SignalSeries, period: float):
    """RMSE per whole reference period starting at the reference origin."""
    if period <= 0:
        raise ValueError("period must be positive")
    t0 = reference.t[0]
    # a period is whole when its samples reach within one step of its end
    slack = reference.t[-1] - reference.t[-2]
    horizon = reference.t[-1] - t0
    n_periods = int(math.floor((horizon + slack) / period + 1e-12))
    out = []
    for i in range(n_periods):
        lo = t0 + i * period
        hi = lo + period
        keep = (reference.t >= lo) & (reference.t < hi)
        if not np.any(keep):
            continue
        t = reference.t[keep]
        resampled = np.interp(t, measured.t, measured.value)
        diff = reference.value[keep] - resampled
        out.append(float(np.sqrt(np.mean(diff * diff))))
    return out


def relative_difference(v_num: float, v_exp: float) -> float:
    """Percent difference of an experimental value from the numerical one."""
    if v_num == 0.0:
        raise ValueError("numerical reference value must be nonzero")
    return abs(v_num - v_exp) / abs(v_num) * 100.0


def marker_angle(o1, o2) -> float:
    """Pendulum angle from two tracked markers (bottom o1, top o2)."""
    x1, y1 = o1
    x2, y2 = o2
    if y2 == y1:
        raise ValueError("markers horizontally aligned")
    return math.atan((x1 - x2) / (y2 - y1))


def average_speed(distance: float, duration: float, scaling: ScalingContext | None = None) -> float:
    """distance/duration; with a scaling context the dimensionless inputs
    are converted and the speed is returned in cm/s."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    if scaling is None:
        return distance / duration
    meters = scaling.position_m(distance)
    seconds = scaling.to_seconds(duration)
    return meters * 100.0 / seconds


def stick_slip_segments(traj: Trajectory) -> PhaseSegmentation:
    """Merge consecutive same-mode records into contiguous intervals."""
    tau = traj.tau
    mode = traj.mode
    intervals = []
    start = tau[0]
    current = int(mode[0])
    for i in range(1, tau.size):
        if int(mode[i]) != current:
            intervals.append((float(start), float(tau[i]), current))
            start = tau[i]
            current = int(mode[i])
    intervals.append((float(start), float(tau[-1]), current))
    return PhaseSegmentation(tuple(intervals))
