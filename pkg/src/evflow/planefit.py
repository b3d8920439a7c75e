"""Local plane-fitting flow.

Fits t = a*x + b*y + c to the spatio-temporal neighborhood of each
event, validates the fit with an inlier gate, and converts the
timestamp gradient into speed and direction:

* speed is the reciprocal gradient magnitude, 1e6 / sqrt(a^2 + b^2)
  px/s, so that an edge tilted away from its motion reports the reduced
  normal-speed component rather than an inflated one;
* theta is the gradient direction atan2(b, a) folded into [0, 2pi) —
  the time surface always increases along the motion, so theta points
  with the motion.

The inlier tolerance is ``inlier_threshold_scale * sqrt(a^2 + b^2)``
with the plane evaluated about the center event, i.e. predicted
t_i = t_c + a*(x_i - x_c) + b*(y_i - y_c). The tolerance deliberately
scales with the gradient magnitude; see LocalFlowConfig.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import INVALID_FLOW, Event, LocalFlow, TimeSurface
from .errors import DegenerateGeometryError, InsufficientEventsError

# Gradients below 1 µs/px are indistinguishable from a simultaneity
# plane; the resulting >1e6 px/s speeds are treated as invalid.
SPEED_CAP = 1e6
MIN_GRADIENT = 1e6 / SPEED_CAP


@dataclass(frozen=True)
class PlaneParams:
    """Fitted plane t = a*x + b*y + c (a, b in µs/px, c in µs)."""

    a: float
    b: float
    c: float

    def gradient_magnitude(self) -> float:
        return math.hypot(self.a, self.b)

    def predict_about(self, cx: float, cy: float, ct: float, x, y):
        """Plane value anchored at the center event rather than the
        intercept: t_c + a*(x - cx) + b*(y - cy)."""
        return ct + self.a * (np.asarray(x) - cx) + self.b * (np.asarray(y) - cy)


@dataclass(frozen=True)
class LocalFlowConfig:
    """Parameters of the local flow stage.

    Defaults are the reference operating point: a 5x5 window
    (filter_radius 2), half the gathered events required as inliers,
    and a 5 ms temporal cutoff.
    """

    filter_radius: int = 2
    inlier_fraction: float = 0.5
    min_fit_events: int = 5
    refit_passes: int = 2
    t_past: int = 5000
    inlier_threshold_scale: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.inlier_fraction <= 1.0:
            raise ValueError("inlier_fraction must be in (0, 1]")
        if self.min_fit_events < 3:
            raise ValueError("min_fit_events must be >= 3")
        if self.filter_radius < 0:
            raise ValueError("filter_radius must be >= 0")
        if self.t_past < 0:
            raise ValueError("t_past must be >= 0")
        if self.refit_passes < 0:
            raise ValueError("refit_passes must be >= 0")


def _as_xyt(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = [(float(x), float(y), float(t)) for x, y, t in points]
    arr = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def fit_plane(points) -> PlaneParams:
    """Least-squares plane through (x, y, t) points.

    Raises InsufficientEventsError below 3 points and
    DegenerateGeometryError when the (x, y) support is collinear
    (detected via a conditioning threshold on the normal equations).
    """
    xs, ys, ts = _as_xyt(points)
    n = xs.shape[0]
    if n < 3:
        raise InsufficientEventsError(f"plane fit needs >= 3 points, got {n}")
    ok, a, b, c = _kernels.fit_plane_core(xs, ys, ts, n)
    if not ok:
        raise DegenerateGeometryError("fit points are collinear in (x, y)")
    return PlaneParams(a, b, c)


def count_inliers(plane: PlaneParams, center, points, cfg: LocalFlowConfig) -> int:
    """Number of points within the gradient-scaled tolerance of the
    plane evaluated about the center. The comparison is strict, so a
    flat plane (zero gradient) admits no inliers."""
    cx, cy, ct = (float(v) for v in center)
    xs, ys, ts = _as_xyt(points)
    thr = cfg.inlier_threshold_scale * plane.gradient_magnitude()
    pred = plane.predict_about(cx, cy, ct, xs, ys)
    return int(np.count_nonzero(np.abs(ts - pred) < thr))


def local_flow(center: Event, surface: TimeSurface, cfg: LocalFlowConfig,
               merged_polarity: bool = False) -> LocalFlow:
    """Plane-fit flow for one event already ingested into the surface.

    All failure modes (sparse window, degenerate fit, failed inlier
    gate, capped speed) collapse to the invalid zero sentinel.
    """
    win = 2 * cfg.filter_radius + 1
    cap = win * win
    xs = np.empty(2 * cap, dtype=np.float64)
    ys = np.empty(2 * cap, dtype=np.float64)
    ts = np.empty(2 * cap, dtype=np.float64)
    keep = np.empty(cap, dtype=np.uint8)
    speed, theta, valid = _kernels.local_flow_core(
        surface.last,
        int(center.x),
        int(center.y),
        int(center.t),
        int(center.p),
        1 if merged_polarity else 0,
        cfg.filter_radius,
        cfg.t_past,
        cfg.refit_passes,
        cfg.inlier_threshold_scale,
        cfg.inlier_fraction,
        cfg.min_fit_events,
        MIN_GRADIENT,
        xs,
        ys,
        ts,
        keep,
    )
    if not valid:
        return INVALID_FLOW
    return LocalFlow(speed, theta, True)
