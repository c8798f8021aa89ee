"""Differentiable training objective aligned with the rater-feedback metric.

Per waypoint the loss is the larger of the threshold-normalized lateral and
longitudinal errors, measured in the reference trajectory's heading frame;
the trajectory loss averages this over the horizon. Thresholds between the
metric's anchor times are interpolated: proportional growth from the origin
(floored) before the first anchor, linear between anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolation
from .geometry import Trajectory, heading_at, speed_at
from .metrics import DEFAULT_ANCHORS, ThresholdAnchors, TrustRegion, speed_scale


@dataclass(frozen=True)
class LossConfig:
    anchors: ThresholdAnchors = field(default_factory=lambda: DEFAULT_ANCHORS)
    lat_floor: float = 0.1
    lng_floor: float = 0.4
    use_speed_scaling: bool = True

    def __post_init__(self):
        if not (self.lat_floor > 0 and self.lng_floor > 0):
            raise ContractViolation("LossConfig: floors must be positive")
        min_lat = min(lat for lat, _ in self.anchors.entries.values())
        min_lng = min(lng for _, lng in self.anchors.entries.values())
        if self.lat_floor > min_lat or self.lng_floor > min_lng:
            raise ContractViolation(
                f"LossConfig: floors ({self.lat_floor}, {self.lng_floor}) exceed "
                f"smallest anchors ({min_lat}, {min_lng})")


def loss_thresholds(cfg: LossConfig, t: float, v: float) -> TrustRegion:
    """Per-waypoint thresholds at any time in (0, last-anchor]."""
    times = cfg.anchors.times
    first, last = times[0], times[-1]
    if not 0 < t <= last + 1e-9:
        raise ContractViolation(f"loss_thresholds: t={t} outside (0, {last}]")
    if t <= first:
        lat0, lng0 = cfg.anchors.entries[first]
        frac = t / first
        raw_lat = max(cfg.lat_floor, frac * lat0)
        raw_lng = max(cfg.lng_floor, frac * lng0)
    else:
        hi = next(a for a in times if a >= t - 1e-9)
        lo = max(a for a in times if a < hi)
        w = (t - lo) / (hi - lo)
        lat_lo, lng_lo = cfg.anchors.entries[lo]
        lat_hi, lng_hi = cfg.anchors.entries[hi]
        raw_lat = (1 - w) * lat_lo + w * lat_hi
        raw_lng = (1 - w) * lng_lo + w * lng_hi
    s = speed_scale(v) if cfg.use_speed_scaling else 1.0
    return TrustRegion(tau_lat=s * raw_lat, tau_lng=s * raw_lng)


def _component(pred_t: Tensor, j: int) -> Tensor:
    """Extract coordinate j from a 2-element waypoint tensor, (2,) or (1, 2)."""
    if pred_t.values.ndim == 2:
        if pred_t.shape != (1, 2):
            raise ContractViolation(f"waypoint tensor must be (1, 2) or (2,), got {pred_t.shape}")
        return ad.narrow(pred_t, 1, j, j + 1)
    if pred_t.shape != (2,):
        raise ContractViolation(f"waypoint tensor must be (1, 2) or (2,), got {pred_t.shape}")
    return ad.narrow(pred_t, 0, j, j + 1)


def waypoint_loss(pred_t: Tensor, ref: Trajectory, step: int, cfg: LossConfig) -> Tensor:
    """Normalized worst-axis error of one predicted waypoint.

    ``step`` is the 1-based future step, so its timestamp is step * dt. Ties
    between the lateral and longitudinal terms route the gradient laterally.
    """
    if not 1 <= step <= ref.horizon:
        raise ContractViolation(f"step {step} outside 1..{ref.horizon}")
    index = step - 1
    t = step * ref.dt
    region = loss_thresholds(cfg, t, speed_at(ref, index))
    theta = heading_at(ref, index)
    c, s = math.cos(theta), math.sin(theta)
    rx, ry = ref.points[index]

    px = _component(pred_t, 0)
    py = _component(pred_t, 1)

    def rotated_abs(cx: float, cy: float) -> Tensor:
        shift = Tensor(np.full(px.shape, -(cx * rx + cy * ry)))
        return ad.absolute(ad.add(ad.add(ad.scale(px, cx), ad.scale(py, cy)), shift))

    lng_term = ad.scale(rotated_abs(c, s), 1.0 / region.tau_lng)
    lat_term = ad.scale(rotated_abs(-s, c), 1.0 / region.tau_lat)
    return ad.max2(lat_term, lng_term)


def trajectory_loss(pred: Tensor, ref: Trajectory, cfg: LossConfig) -> Tensor:
    """Mean waypoint loss over the horizon; pred has shape (H, 2)."""
    if pred.values.ndim != 2 or pred.shape != (ref.horizon, 2):
        raise ContractViolation(
            f"trajectory_loss: pred shape {pred.shape} does not match "
            f"horizon ({ref.horizon}, 2)")
    per_step = [waypoint_loss(ad.narrow(pred, 0, i, i + 1), ref, i + 1, cfg)
                for i in range(ref.horizon)]
    return ad.mean_all(ad.concat(per_step, axis=0))
