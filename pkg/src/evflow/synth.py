"""Synthetic event scenes with exact per-event velocity labels.

Objects are thin contours (segments or convex polygon outlines)
translating at constant velocity. A pixel emits an event at the exact
instant a contour crosses its integer center, quantized to 1 µs, so the
time surface of each edge is an exact plane and the normal-speed
relation of plane-fit flow is testable without sensor noise. Polygon
edges fire ON on the leading side and OFF on the trailing side;
segments fire ON. Edges parallel to the motion cross no pixel centers
and stay silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import EVENT_DTYPE, SensorGeometry
from .errors import EmptySceneError

LABELED_DTYPE = np.dtype(
    [
        ("t", "<i8"),
        ("x", "<u2"),
        ("y", "<u2"),
        ("p", "u1"),
        ("vx", "<f8"),
        ("vy", "<f8"),
        ("object_id", "<i4"),
    ]
)

_PARALLEL_EPS = 1e-9


@dataclass(frozen=True)
class SceneObject:
    """One moving contour.

    ``points`` holds the pose at absolute time 0: two endpoints for a
    segment, the vertex loop for a polygon. ``velocity`` is px/s.
    ``t_start``/``t_end`` bound the active interval in µs (None means
    unbounded on that side).
    """

    kind: str
    points: tuple
    velocity: tuple[float, float]
    t_start: int | None = None
    t_end: int | None = None

    def __post_init__(self):
        if self.kind not in ("segment", "polygon"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        n = len(self.points)
        if self.kind == "segment" and n != 2:
            raise ValueError("segment needs exactly 2 points")
        if self.kind == "polygon" and n < 3:
            raise ValueError("polygon needs at least 3 vertices")


@dataclass(frozen=True)
class SceneSpec:
    geometry: SensorGeometry
    objects: tuple[SceneObject, ...]
    event_rate: float = 1.0
    noise_rate: float = 0.0  # background events / pixel / second
    degenerate: bool = False  # some contour is parallel to its motion

    def __post_init__(self):
        if not 0.0 < self.event_rate <= 1.0:
            raise ValueError("event_rate must be in (0, 1]; crossings are thinned")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be >= 0")
        object.__setattr__(self, "objects", tuple(self.objects))


def _edge_crossings(a, d, vel_us, t_lo, t_hi, geometry):
    """Integer pixels crossed by segment a..a+d translating at vel_us
    (px/µs) during [t_lo, t_hi) µs. Returns (x, y, t_exact)."""
    det = d[0] * vel_us[1] - d[1] * vel_us[0]
    norm = math.hypot(d[0], d[1]) * math.hypot(vel_us[0], vel_us[1])
    if norm <= 0 or abs(det) <= _PARALLEL_EPS * norm:
        return None
    corners = np.array(
        [
            a + vel_us * t_lo,
            a + vel_us * t_hi,
            a + d + vel_us * t_lo,
            a + d + vel_us * t_hi,
        ]
    )
    x0 = max(0, int(math.floor(corners[:, 0].min())) - 1)
    x1 = min(geometry.width - 1, int(math.ceil(corners[:, 0].max())) + 1)
    y0 = max(0, int(math.floor(corners[:, 1].min())) - 1)
    y1 = min(geometry.height - 1, int(math.ceil(corners[:, 1].max())) + 1)
    if x1 < x0 or y1 < y0:
        return None
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    rx = gx - a[0]
    ry = gy - a[1]
    s = (rx * vel_us[1] - ry * vel_us[0]) / det
    t = (d[0] * ry - d[1] * rx) / det
    m = (s >= 0.0) & (s < 1.0) & (t >= t_lo) & (t < t_hi)
    if not m.any():
        return None
    return gx[m], gy[m], t[m]


def _object_edges(obj: SceneObject):
    """Yield (a, d, polarity) per firing edge; polarity follows the
    leading-ON / trailing-OFF rule for polygons."""
    pts = np.asarray(obj.points, dtype=np.float64)
    v = np.asarray(obj.velocity, dtype=np.float64)
    speed = math.hypot(v[0], v[1])
    if obj.kind == "segment":
        yield pts[0], pts[1] - pts[0], 1
        return
    centroid = pts.mean(axis=0)
    n = len(pts)
    for i in range(n):
        a = pts[i]
        b = pts[(i + 1) % n]
        d = b - a
        mid = 0.5 * (a + b)
        nx, ny = d[1], -d[0]
        if nx * (mid[0] - centroid[0]) + ny * (mid[1] - centroid[1]) < 0:
            nx, ny = -nx, -ny
        lead = nx * v[0] + ny * v[1]
        if speed > 0 and abs(lead) <= _PARALLEL_EPS * speed * math.hypot(nx, ny):
            continue  # edge parallel to motion: silent
        yield a, d, 1 if lead > 0 else 0


def generate(spec: SceneSpec, duration: int, seed: int = 0) -> np.ndarray:
    """All labeled events of the scene over [0, duration) µs, sorted by
    timestamp. Deterministic for a fixed seed."""
    if not spec.objects:
        raise EmptySceneError("scene has no objects")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    parts = []
    for oid, obj in enumerate(spec.objects):
        v = np.asarray(obj.velocity, dtype=np.float64)
        vel_us = v / 1e6
        t_lo = 0.0 if obj.t_start is None else float(max(0, obj.t_start))
        t_hi = float(duration) if obj.t_end is None else float(min(duration, obj.t_end))
        if t_hi <= t_lo or (v[0] == 0.0 and v[1] == 0.0):
            continue
        for a, d, pol in _object_edges(obj):
            hit = _edge_crossings(a, d, vel_us, t_lo, t_hi, spec.geometry)
            if hit is None:
                continue
            x, y, t = hit
            if spec.event_rate < 1.0:
                keep = rng.random(len(x)) < spec.event_rate
                x, y, t = x[keep], y[keep], t[keep]
            if len(x) == 0:
                continue
            rec = np.empty(len(x), dtype=LABELED_DTYPE)
            rec["t"] = np.floor(t + 0.5).astype(np.int64)
            rec["x"] = x
            rec["y"] = y
            rec["p"] = pol
            rec["vx"] = v[0]
            rec["vy"] = v[1]
            rec["object_id"] = oid
            parts.append(rec)

    if spec.noise_rate > 0:
        g = spec.geometry
        lam = spec.noise_rate * g.width * g.height * duration / 1e6
        n = int(rng.poisson(lam))
        if n > 0:
            rec = np.empty(n, dtype=LABELED_DTYPE)
            rec["t"] = rng.integers(0, duration, n)
            rec["x"] = rng.integers(0, g.width, n)
            rec["y"] = rng.integers(0, g.height, n)
            rec["p"] = rng.integers(0, 2, n)
            rec["vx"] = 0.0
            rec["vy"] = 0.0
            rec["object_id"] = -1
            parts.append(rec)

    if not parts:
        return np.empty(0, dtype=LABELED_DTYPE)
    out = np.concatenate(parts)
    order = np.lexsort((out["x"], out["y"], out["p"], out["object_id"], out["t"]))
    return out[order]


def events_view(labeled: np.ndarray) -> np.ndarray:
    """Strip labels down to the plain event record layout."""
    ev = np.empty(len(labeled), dtype=EVENT_DTYPE)
    for name in ("t", "x", "y", "p"):
        ev[name] = labeled[name]
    return ev


# ---------------------------------------------------------------------------
# Canned scenes
# ---------------------------------------------------------------------------

def rotated_bar_suite(
    angles_deg,
    speed: float,
    geometry: SensorGeometry | None = None,
    bar_length: float = 60.0,
    travel: float = 200.0,
) -> list[SceneSpec]:
    """One scene per angle: a bar tilted ``angle`` degrees away from the
    motion normal, translating along +x at ``speed`` px/s. At 90° the
    bar is parallel to its motion and the scene is flagged degenerate
    (near-zero event structure)."""
    if geometry is None:
        geometry = SensorGeometry(int(travel + 140), 240)
    scenes = []
    for ang in angles_deg:
        th = math.radians(ang)
        direction = np.array([math.sin(th), math.cos(th)])
        center = np.array([60.0, geometry.height / 2.0])
        a = center - 0.5 * bar_length * direction
        b = center + 0.5 * bar_length * direction
        bar = SceneObject("segment", (tuple(a), tuple(b)), (speed, 0.0))
        scenes.append(
            SceneSpec(
                geometry=geometry,
                objects=(bar,),
                degenerate=abs(math.cos(th)) < 1e-9,
            )
        )
    return scenes


def _diamond(cx: float, cy: float, half_diag: float) -> tuple:
    return (
        (cx, cy - half_diag),
        (cx + half_diag, cy),
        (cx, cy + half_diag),
        (cx - half_diag, cy),
    )


def _square(cx: float, cy: float, half_side: float) -> tuple:
    return (
        (cx - half_side, cy - half_side),
        (cx + half_side, cy - half_side),
        (cx + half_side, cy + half_side),
        (cx - half_side, cy + half_side),
    )


def bar_square_scene(speed: float = 1000.0, geometry: SensorGeometry | None = None):
    """Two horizontal bars flanking a 45°-rotated square, everything
    translating straight along +y (direction 90°). The square's oblique
    edges see only their normal-speed component; the bars carry the full
    speed, so pooling has a true-direction reference within reach.
    Returns (spec, duration_us)."""
    if geometry is None:
        geometry = SensorGeometry(304, 240)
    y0 = 60.0
    cx = geometry.width / 2.0
    vel = (0.0, speed)
    objects = (
        SceneObject("segment", ((cx - 80.0, y0 - 35.0), (cx + 80.0, y0 - 35.0)), vel),
        SceneObject("segment", ((cx - 80.0, y0 + 35.0), (cx + 80.0, y0 + 35.0)), vel),
        SceneObject("polygon", _diamond(cx, y0, 28.0), vel),
    )
    travel = 120.0
    duration = int(travel / speed * 1e6)
    return SceneSpec(geometry=geometry, objects=objects), duration


def crossing_squares_scene(
    speed: float = 1000.0,
    geometry: SensorGeometry | None = None,
    noise_rate: float = 0.2,
):
    """Two axis-aligned squares translating in opposite directions along
    x, passing close by mid-stream, over light background noise.
    Returns (spec, duration_us)."""
    if geometry is None:
        geometry = SensorGeometry(304, 240)
    objects = (
        SceneObject("polygon", _square(60.0, 110.0, 20.0), (speed, 0.0)),
        SceneObject("polygon", _square(244.0, 130.0, 20.0), (-speed, 0.0)),
    )
    travel = 184.0
    duration = int(travel / speed * 1e6)
    return SceneSpec(geometry=geometry, objects=objects, noise_rate=noise_rate), duration


def occlusion_scene(speed: float = 800.0, geometry: SensorGeometry | None = None):
    """A square and a vertical bar sharing the same lane and moving
    through each other in opposite directions, so their event structures
    interleave on shared pixels during the overlap.
    Returns (spec, duration_us)."""
    if geometry is None:
        geometry = SensorGeometry(304, 240)
    objects = (
        SceneObject("polygon", _square(70.0, 120.0, 18.0), (speed, 0.0)),
        SceneObject("segment", ((234.0, 90.0), (234.0, 150.0)), (-speed, 0.0)),
    )
    travel = 164.0
    duration = int(travel / speed * 1e6)
    return SceneSpec(geometry=geometry, objects=objects), duration


def bench_scene(
    speed: float = 300.0,
    geometry: SensorGeometry | None = None,
    waves: int = 1,
    pairs: int = 4,
):
    """Benchmark load: ``pairs`` bar+diamond pairs sweeping down a
    640x480 frame; ``waves`` repeats the sweep back to back to stretch
    stream length without changing the instantaneous event rate.
    Returns (spec, duration_us)."""
    if geometry is None:
        geometry = SensorGeometry(640, 480)
    travel = 120.0
    wave_us = int(travel / speed * 1e6)
    vel = (0.0, speed)
    objects = []
    for w in range(waves):
        t0, t1 = w * wave_us, (w + 1) * wave_us
        shift = -speed * (w * wave_us) / 1e6  # pose is defined at absolute t=0
        for cx in (80.0, 240.0, 400.0, 560.0)[:pairs]:
            objects.append(
                SceneObject(
                    "segment",
                    ((cx - 60.0, 50.0 + shift), (cx + 60.0, 50.0 + shift)),
                    vel,
                    t_start=t0,
                    t_end=t1,
                )
            )
            objects.append(
                SceneObject(
                    "polygon",
                    _diamond(cx, 110.0 + shift, 24.0),
                    vel,
                    t_start=t0,
                    t_end=t1,
                )
            )
    return SceneSpec(geometry=geometry, objects=tuple(objects)), waves * wave_us
