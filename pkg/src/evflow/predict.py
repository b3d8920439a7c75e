"""Event-by-event forward prediction from flow estimates.

Predicted coordinates are continuous; rasterization to integer pixels
happens only when rendering or comparing, to avoid quantizing twice.
Cluster windows are aligned to fixed multiples of the span in stream
time; a sliding stride is available as an option.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Event, FlowVector, SensorGeometry
from .errors import EmptyClusterError

PREDICTED_DTYPE = np.dtype(
    [
        ("t", "<i8"),  # predicted occurrence time: source t + horizon
        ("px", "<f8"),
        ("py", "<f8"),
        ("p", "u1"),
        ("horizon", "<i8"),
    ]
)


@dataclass(frozen=True)
class PredictedEvent:
    source: Event
    horizon: int
    px: float
    py: float
    out_of_frame: bool = False


@dataclass
class ClusterWindow:
    """Events of one [start_t, end_t) µs window with their flow vectors
    (rows of shape (n, 2), px/s)."""

    start_t: int
    end_t: int
    events: np.ndarray
    flows: np.ndarray


def predict_event(e: Event, flow: FlowVector, horizon: int,
                  geometry: SensorGeometry | None = None) -> PredictedEvent:
    """Linear extrapolation of one event by ``horizon`` µs. Coordinates
    may leave the sensor frame; they are flagged, never clipped."""
    px = e.x + flow.vx * horizon / 1e6
    py = e.y + flow.vy * horizon / 1e6
    oof = False
    if geometry is not None:
        oof = not (0.0 <= px <= geometry.width - 1 and 0.0 <= py <= geometry.height - 1)
    return PredictedEvent(e, horizon, px, py, oof)


def predict_records(records: np.ndarray, horizon: int) -> np.ndarray:
    """Vectorized prediction over valid flow records (see FLOW_DTYPE)."""
    valid = records[records["valid"] == 1]
    out = np.empty(len(valid), dtype=PREDICTED_DTYPE)
    out["t"] = valid["t"] + horizon
    out["px"] = valid["x"] + valid["vx"] * (horizon / 1e6)
    out["py"] = valid["y"] + valid["vy"] * (horizon / 1e6)
    out["p"] = valid["p"]
    out["horizon"] = horizon
    return out


def rasterize(px, py):
    """Nearest-pixel rounding used at render/compare time."""
    return np.rint(np.asarray(px)).astype(np.int64), np.rint(np.asarray(py)).astype(np.int64)


def cluster_windows(records: np.ndarray, span: int, stride: int | None = None):
    """Split flow records into ClusterWindows.

    Windows are aligned to absolute multiples of ``span`` (so two runs
    over the same stream agree on boundaries). Pass a ``stride`` smaller
    than the span for sliding windows.
    """
    if span <= 0:
        raise ValueError("span must be > 0")
    if stride is None:
        stride = span
    if stride <= 0:
        raise ValueError("stride must be > 0")
    valid = records[records["valid"] == 1]
    if len(valid) == 0:
        return
    t = valid["t"]
    t_min, t_max = int(t[0]), int(t[-1])
    w0 = (t_min // stride) * stride
    start = w0
    while start <= t_max:
        lo = np.searchsorted(t, start, side="left")
        hi = np.searchsorted(t, start + span, side="left")
        if hi > lo:
            ev = valid[lo:hi]
            flows = np.column_stack((ev["vx"], ev["vy"]))
            yield ClusterWindow(start, start + span, ev, flows)
        start += stride


def stream_cluster_windows(record_chunks, span: int):
    """Like :func:`cluster_windows` but over a stream of record chunks,
    buffering at most one window at a time."""
    if span <= 0:
        raise ValueError("span must be > 0")
    pending: list[np.ndarray] = []
    cur: int | None = None
    for chunk in record_chunks:
        valid = chunk[chunk["valid"] == 1]
        while len(valid):
            first = int(valid["t"][0]) // span
            if cur is None:
                cur = first
            elif first != cur:
                yield _finish_window(pending, cur, span)
                pending = []
                cur = first
            hi = int(np.searchsorted(valid["t"], (cur + 1) * span, side="left"))
            pending.append(valid[:hi])
            valid = valid[hi:]
            if len(valid):
                yield _finish_window(pending, cur, span)
                pending = []
                cur = None
    if pending:
        yield _finish_window(pending, cur, span)


def _finish_window(parts, idx, span) -> ClusterWindow:
    ev = np.concatenate(parts)
    return ClusterWindow(
        int(idx * span),
        int((idx + 1) * span),
        ev,
        np.column_stack((ev["vx"], ev["vy"])),
    )


def normalize_cluster_speeds(window: ClusterWindow) -> ClusterWindow:
    """Replace every member's speed with the cluster's arithmetic mean
    speed, keeping each member's direction. Members with zero flow have
    no direction and are left unchanged."""
    speeds = np.hypot(window.flows[:, 0], window.flows[:, 1])
    ok = speeds > 0
    if not ok.any():
        raise EmptyClusterError("cluster has no valid flow")
    mean_speed = float(speeds[ok].mean())
    flows = window.flows.copy()
    flows[ok] = flows[ok] * (mean_speed / speeds[ok])[:, None]
    return ClusterWindow(window.start_t, window.end_t, window.events, flows)


def predict_window(window: ClusterWindow, horizon: int) -> np.ndarray:
    """Predict every member of a cluster window by ``horizon`` µs."""
    ev = window.events
    out = np.empty(len(ev), dtype=PREDICTED_DTYPE)
    out["t"] = ev["t"] + horizon
    out["px"] = ev["x"] + window.flows[:, 0] * (horizon / 1e6)
    out["py"] = ev["y"] + window.flows[:, 1] * (horizon / 1e6)
    out["p"] = ev["p"]
    out["horizon"] = horizon
    return out
