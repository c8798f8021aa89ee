"""Rater Feedback Score and Average Distance Error.

A predicted waypoint earns the rater's full score while it stays inside the
trust region around the rater waypoint at a checkpoint time; outside, the
score decays by a factor of 10 per unit of normalized excess error. Trust
regions combine time-anchored thresholds with speed-based scaling of the
rater trajectory's own velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractViolation
from .geometry import Trajectory, frame_error, heading_at, speed_at

FULL_SCORE = 10.0

SCALE_LOW_SPEED = 1.4
SCALE_HIGH_SPEED = 11.0


@dataclass(frozen=True)
class ThresholdAnchors:
    """Raw (lateral, longitudinal) thresholds in meters at checkpoint times."""

    entries: dict[float, tuple[float, float]] = field(
        default_factory=lambda: {3.0: (1.0, 4.0), 5.0: (1.8, 7.2)})

    def __post_init__(self):
        cleaned: dict[float, tuple[float, float]] = {}
        for t in sorted(self.entries):
            lat, lng = self.entries[t]
            if not (t > 0 and lat > 0 and lng > 0):
                raise ContractViolation(
                    f"ThresholdAnchors: nonpositive entry at t={t}: ({lat}, {lng})")
            cleaned[float(t)] = (float(lat), float(lng))
        object.__setattr__(self, "entries", cleaned)

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(self.entries)

    def raw(self, t: float) -> tuple[float, float]:
        t = float(t)
        if t in self.entries:
            return self.entries[t]
        for anchor_t, raw in self.entries.items():
            if abs(anchor_t - t) < 1e-9:
                return raw
        raise ContractViolation(
            f"t={t} is not an anchor time (anchors at {self.times})")


DEFAULT_ANCHORS = ThresholdAnchors()


@dataclass(frozen=True)
class TrustRegion:
    tau_lat: float
    tau_lng: float

    def __post_init__(self):
        if not (self.tau_lat > 0 and self.tau_lng > 0):
            raise ContractViolation(
                f"TrustRegion: thresholds must be positive, got "
                f"({self.tau_lat}, {self.tau_lng})")


@dataclass(frozen=True)
class RaterTrajectory:
    """A reference trajectory endorsed with a score in (0, 10]."""

    traj: Trajectory
    score: float = FULL_SCORE

    def __post_init__(self):
        if not 0 < self.score <= FULL_SCORE:
            raise ContractViolation(f"rater score {self.score} outside (0, {FULL_SCORE}]")


def speed_scale(v: float) -> float:
    """Threshold scaling in [0.5, 1.0]: 0.5 below 1.4 m/s, 1.0 at/above 11 m/s,
    linear in between."""
    if v < 0:
        raise ContractViolation(f"speed_scale: negative speed {v}")
    if v < SCALE_LOW_SPEED:
        return 0.5
    if v >= SCALE_HIGH_SPEED:
        return 1.0
    return 0.5 + 0.5 * (v - SCALE_LOW_SPEED) / (SCALE_HIGH_SPEED - SCALE_LOW_SPEED)


def trust_region(anchors: ThresholdAnchors, t: float, v: float) -> TrustRegion:
    """Final thresholds at an anchor time: speed_scale(v) times the raw pair."""
    raw_lat, raw_lng = anchors.raw(t)
    s = speed_scale(v)
    return TrustRegion(tau_lat=s * raw_lat, tau_lng=s * raw_lng)


def checkpoint_index(t: float, dt: float, horizon: int) -> int:
    """0-based waypoint index for checkpoint time t; t/dt must be integral."""
    steps = t / dt
    if abs(steps - round(steps)) > 1e-9:
        raise ContractViolation(f"checkpoint t={t} is not a multiple of dt={dt}")
    index = int(round(steps)) - 1
    if not 0 <= index < horizon:
        raise ContractViolation(
            f"checkpoint t={t} maps to step {index + 1}, outside horizon {horizon}")
    return index


def waypoint_score(pred: Sequence[float], rater: RaterTrajectory, t: float,
                   anchors: ThresholdAnchors = DEFAULT_ANCHORS) -> float:
    """Score of one predicted waypoint against a rater at checkpoint time t."""
    index = checkpoint_index(t, rater.traj.dt, rater.traj.horizon)
    region = trust_region(anchors, t, speed_at(rater.traj, index))
    err = frame_error(pred, rater.traj.points[index], heading_at(rater.traj, index))
    delta = max(err.delta_lat / region.tau_lat, err.delta_lng / region.tau_lng)
    if delta <= 1.0:
        return rater.score
    return rater.score * 0.1 ** (delta - 1.0)


def rfs(pred: Trajectory, raters: Sequence[RaterTrajectory],
        checkpoints: Sequence[float] = (3.0, 5.0),
        anchors: ThresholdAnchors = DEFAULT_ANCHORS,
        combine_checkpoints: Callable[[Iterable[float]], float] = min,
        combine_raters: Callable[[Iterable[float]], float] = max) -> float:
    """Overall score: per rater the worst checkpoint score, then the best
    rater. Both combinators are injectable for sensitivity studies."""
    if not raters:
        raise ContractViolation("rfs: empty rater list")
    per_rater = []
    for rater in raters:
        per_rater.append(combine_checkpoints(
            waypoint_score(pred.point(checkpoint_index(t, pred.dt, pred.horizon)),
                           rater, t, anchors)
            for t in checkpoints))
    return combine_raters(per_rater)


def ade(pred: Trajectory, ref: Trajectory, upto: float) -> float:
    """Mean Euclidean distance between trajectories over steps 1..upto/dt."""
    if upto <= 0:
        raise ContractViolation(f"ade: upto must be positive, got {upto}")
    steps = upto / pred.dt
    if abs(steps - round(steps)) > 1e-9:
        raise ContractViolation(f"ade: upto={upto} is not a multiple of dt={pred.dt}")
    n = int(round(steps))
    if pred.horizon < n or ref.horizon < n:
        raise ContractViolation(
            f"ade: horizon too short for upto={upto}s "
            f"(pred {pred.horizon}, ref {ref.horizon}, need {n})")
    diff = pred.points[:n] - ref.points[:n]
    return float(np.hypot(diff[:, 0], diff[:, 1]).mean())
