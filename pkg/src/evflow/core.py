"""Core event types, time surfaces and flow surfaces.

Timestamps are integer microseconds throughout; speeds are double
precision px/s. Surfaces are single-writer state advanced in event
order: ingestion enforces non-decreasing timestamps and rejects
out-of-order events without mutating state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonMonotonicTimestampError, OutOfBoundsError

POL_OFF = 0
POL_ON = 1

# Sentinel for "pixel never fired"; far enough in the past that any
# age test against a real timestamp fails.
NEVER = np.int64(-(2**62))

# Stream record layout; matches the packed binary file format.
EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

# Flow record layout emitted by the pipeline, one record per input event.
FLOW_DTYPE = np.dtype(
    [
        ("t", "<i8"),
        ("x", "<u2"),
        ("y", "<u2"),
        ("p", "u1"),
        ("vx", "<f8"),
        ("vy", "<f8"),
        ("valid", "u1"),
        ("chosen_radius", "<i4"),
    ]
)


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor geometry must be at least 1x1")

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class Event:
    """One sensor event: time (µs), column, row, polarity (0=OFF, 1=ON)."""

    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class LocalFlow:
    """Per-event plane-fit flow estimate.

    ``valid=False`` is the zero sentinel: failed fits carry speed 0.
    ``theta`` is the motion direction in radians in [0, 2pi), pointing
    the way the time surface increases.
    """

    speed: float
    theta: float
    valid: bool

    def vector(self) -> "FlowVector":
        if not self.valid:
            return FlowVector(0.0, 0.0)
        return FlowVector(self.speed * math.cos(self.theta), self.speed * math.sin(self.theta))


INVALID_FLOW = LocalFlow(0.0, 0.0, False)


@dataclass(frozen=True)
class FlowVector:
    """Cartesian velocity in px/s."""

    vx: float
    vy: float

    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def angle(self) -> float:
        a = math.atan2(self.vy, self.vx)
        return a + 2.0 * math.pi if a < 0 else a


class TimeSurface:
    """Per-pixel, per-polarity most recent event timestamp.

    ``last[p, y, x]`` holds the latest timestamp written at that pixel
    and polarity, or NEVER. A single stream-head timestamp gates
    ordering across the whole surface.
    """

    def __init__(self, geometry: SensorGeometry):
        self.geometry = geometry
        self.last = np.full((2, geometry.height, geometry.width), NEVER, dtype=np.int64)
        self.head_t = NEVER

    def ingest(self, e: Event) -> None:
        """Write one event. Rejects out-of-bounds and out-of-order events
        without touching surface state."""
        if not self.geometry.contains(e.x, e.y):
            raise OutOfBoundsError(
                f"event at ({e.x}, {e.y}) outside {self.geometry.width}x{self.geometry.height}"
            )
        if e.p not in (POL_OFF, POL_ON):
            raise OutOfBoundsError(f"polarity must be 0 or 1, got {e.p}")
        if self.head_t != NEVER and e.t < self.head_t:
            raise NonMonotonicTimestampError(
                f"event t={e.t} is older than stream head t={self.head_t}"
            )
        self.last[e.p, e.y, e.x] = e.t
        self.head_t = np.int64(e.t)

    def neighborhood(
        self, center: Event, radius: int, t_past: int, merged_polarity: bool = False
    ) -> list[tuple[int, int, int]]:
        """Entries of the center's polarity within ``radius`` (Chebyshev)
        and within ``t_past`` µs before ``center.t``.

        The center event itself is always part of the result, whether or
        not it has been ingested. Windows are clipped at the borders,
        never wrapped. With ``merged_polarity`` the most recent event of
        either polarity is used per pixel.
        """
        if radius < 0:
            raise ValueError("radius must be >= 0")
        g = self.geometry
        x0, x1 = max(0, center.x - radius), min(g.width - 1, center.x + radius)
        y0, y1 = max(0, center.y - radius), min(g.height - 1, center.y + radius)
        if merged_polarity:
            patch = np.maximum(self.last[0, y0 : y1 + 1, x0 : x1 + 1],
                               self.last[1, y0 : y1 + 1, x0 : x1 + 1])
        else:
            patch = self.last[center.p, y0 : y1 + 1, x0 : x1 + 1]
        out: list[tuple[int, int, int]] = []
        ct = int(center.t)
        for yy in range(y0, y1 + 1):
            for xx in range(x0, x1 + 1):
                if xx == center.x and yy == center.y:
                    out.append((xx, yy, ct))
                    continue
                t = int(patch[yy - y0, xx - x0])
                if t == NEVER or t > ct or ct - t > t_past:
                    continue
                out.append((xx, yy, t))
        return out


class FlowSurface:
    """Per-pixel most recent valid local flow.

    A sequence counter disambiguates same-timestamp overwrites so that
    exactly the last writer per pixel is live. Entries older than the
    query's ``t_past`` are excluded from every neighborhood query.
    """

    def __init__(self, geometry: SensorGeometry):
        self.geometry = geometry
        h, w = geometry.height, geometry.width
        self.t = np.full((h, w), NEVER, dtype=np.int64)
        self.seq = np.full((h, w), -1, dtype=np.int64)
        self.speed = np.zeros((h, w), dtype=np.float64)
        self.vx = np.zeros((h, w), dtype=np.float64)
        self.vy = np.zeros((h, w), dtype=np.float64)
        self._next_seq = 0

    def record(self, e: Event, flow: LocalFlow) -> None:
        """Store a valid local flow for the event's pixel. Invalid flows
        are never stored (they would bias pooled means toward zero)."""
        if not flow.valid:
            return
        v = flow.vector()
        self.t[e.y, e.x] = e.t
        self.seq[e.y, e.x] = self._next_seq
        self.speed[e.y, e.x] = flow.speed
        self.vx[e.y, e.x] = v.vx
        self.vy[e.y, e.x] = v.vy
        self._next_seq += 1

    def window_mask(self, cx: int, cy: int, ct: int, radius: int, t_past: int):
        """Boolean mask plus array views for the valid entries of the
        (2*radius+1)^2 window around (cx, cy) at query time ct."""
        g = self.geometry
        x0, x1 = max(0, cx - radius), min(g.width - 1, cx + radius)
        y0, y1 = max(0, cy - radius), min(g.height - 1, cy + radius)
        sl = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        t = self.t[sl]
        ok = (self.seq[sl] >= 0) & (t <= ct) & (ct - t <= t_past)
        return ok, self.speed[sl], self.vx[sl], self.vy[sl]
