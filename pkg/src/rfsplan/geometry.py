"""Ego-frame trajectory geometry.

Waypoints are 2-D positions relative to the vehicle pose at the current time
(x forward, y left), sampled on a fixed 0.25 s grid. Headings and speeds are
estimated from discrete displacements: central differences at interior steps,
one-sided at the ends, with the origin (0, 0) acting as the virtual point
before the first waypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractViolation

DT = 0.25
STATIONARY_EPS = 1e-6


class Waypoint2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class FrameError:
    """Absolute prediction error split along/across the reference heading."""

    delta_lat: float
    delta_lng: float


@dataclass(frozen=True)
class Trajectory:
    """Ordered future waypoints at fixed dt; points[i] is the position at
    time (i + 1) * dt after the current pose."""

    points: np.ndarray
    dt: float = DT

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ContractViolation(f"Trajectory: points must be (H, 2), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ContractViolation("Trajectory: non-finite waypoint")
        if not self.dt > 0:
            raise ContractViolation(f"Trajectory: dt must be positive, got {self.dt}")
        object.__setattr__(self, "points", pts)

    @property
    def horizon(self) -> int:
        return len(self.points)

    def point(self, index: int) -> np.ndarray:
        self._check_index(index)
        return self.points[index]

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.horizon:
            raise ContractViolation(
                f"trajectory index {index} out of range [0, {self.horizon})")


def _displacement(traj: Trajectory, index: int) -> tuple[np.ndarray, float]:
    """Discrete displacement at a waypoint and the time span it covers."""
    pts = traj.points
    last = traj.horizon - 1
    if index == 0:
        return pts[0] - np.zeros(2), traj.dt
    if index == last:
        return pts[last] - pts[last - 1], traj.dt
    return pts[index + 1] - pts[index - 1], 2.0 * traj.dt


def heading_at(traj: Trajectory, index: int) -> float:
    """Heading (radians, atan2 convention) of the trajectory at a waypoint.

    Near-zero displacements fall back to the nearest earlier waypoint with a
    valid displacement, then to 0.0 (ego forward).
    """
    traj._check_index(index)
    for j in range(index, -1, -1):
        d, _ = _displacement(traj, j)
        if math.hypot(d[0], d[1]) >= STATIONARY_EPS:
            return math.atan2(d[1], d[0])
    return 0.0


def speed_at(traj: Trajectory, index: int) -> float:
    """Speed (m/s) of the trajectory at a waypoint."""
    traj._check_index(index)
    d, span = _displacement(traj, index)
    return math.hypot(d[0], d[1]) / span


def frame_error(pred: Sequence[float], ref: Sequence[float], ref_heading: float) -> FrameError:
    """Decompose pred - ref into longitudinal/lateral magnitudes by rotating
    the difference into the reference-heading frame."""
    dx = float(pred[0]) - float(ref[0])
    dy = float(pred[1]) - float(ref[1])
    c = math.cos(ref_heading)
    s = math.sin(ref_heading)
    return FrameError(delta_lat=abs(-s * dx + c * dy), delta_lng=abs(c * dx + s * dy))
