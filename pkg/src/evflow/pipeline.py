"""Streaming pipeline: ingest -> local flow -> multi-scale correction.

Memory stays O(sensor pixels + recent-window flows): state is the two
surfaces plus a ring buffer of the valid local flows from the last
``t_past`` µs, so stream length never enters the footprint. Events are
processed strictly in order; one flow record is emitted per input
event, invalid fits included.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from ._accel import backend_name
from .core import EVENT_DTYPE, FLOW_DTYPE, NEVER, SensorGeometry
from .errors import ConfigError, NonMonotonicTimestampError, OutOfBoundsError
from .planefit import MIN_GRADIENT, LocalFlowConfig
from .pooling import ScaleSet

DEFAULT_GEOMETRY = SensorGeometry(304, 240)
_INITIAL_BUFFER = 1 << 14


@dataclass(frozen=True)
class PipelineConfig:
    geometry: SensorGeometry = DEFAULT_GEOMETRY
    local: LocalFlowConfig = field(default_factory=LocalFlowConfig)
    scales: ScaleSet = field(default_factory=ScaleSet)
    polarity_mode: str = "split"  # "split" | "merged"
    flow: str = "corrected"  # "corrected" | "local"
    horizons_us: tuple[int, ...] = (250_000, 500_000)
    cluster_span_us: int = 50_000
    input_path: str | None = None
    output_path: str | None = None

    def __post_init__(self):
        if self.polarity_mode not in ("split", "merged"):
            raise ConfigError(f"polarity_mode must be split or merged, got {self.polarity_mode!r}")
        if self.flow not in ("corrected", "local"):
            raise ConfigError(f"flow must be corrected or local, got {self.flow!r}")
        if self.cluster_span_us <= 0:
            raise ConfigError("cluster_span_us must be > 0")
        object.__setattr__(self, "horizons_us", tuple(int(h) for h in self.horizons_us))


class Pipeline:
    """Stateful per-event processor; feed chunks in stream order."""

    def __init__(self, cfg: PipelineConfig, backend: str | None = None,
                 initial_buffer: int = _INITIAL_BUFFER):
        self.cfg = cfg
        if backend is None:
            backend = backend_name()
        if backend not in _kernels.KERNEL_BACKENDS:
            raise ConfigError(f"backend {backend!r} unavailable")
        self.backend = backend
        self._kernel = _kernels.KERNEL_BACKENDS[backend]

        g = cfg.geometry
        h, w = g.height, g.width
        self.last = np.full((2, h, w), NEVER, dtype=np.int64)
        self.fs_t = np.full((h, w), NEVER, dtype=np.int64)
        self.fs_seq = np.full((h, w), -1, dtype=np.int64)
        self.fs_speed = np.zeros((h, w), dtype=np.float64)
        self.fs_vx = np.zeros((h, w), dtype=np.float64)
        self.fs_vy = np.zeros((h, w), dtype=np.float64)

        cap = max(2, int(initial_buffer))
        self.buf_t = np.empty(cap, dtype=np.int64)
        self.buf_x = np.empty(cap, dtype=np.int64)
        self.buf_y = np.empty(cap, dtype=np.int64)
        self.buf_speed = np.empty(cap, dtype=np.float64)
        self.buf_vx = np.empty(cap, dtype=np.float64)
        self.buf_vy = np.empty(cap, dtype=np.float64)
        self.buf_dead = np.zeros(cap, dtype=np.uint8)
        self.bstate = np.zeros(2, dtype=np.int64)

        self.radii = np.asarray(cfg.scales.radii, dtype=np.int64)
        self.ring_of = cfg.scales.ring_lookup()
        nr = len(self.radii)
        self._cnt = np.zeros(nr, dtype=np.int64)
        self._ssum = np.zeros(nr, dtype=np.float64)
        self._vxs = np.zeros(nr, dtype=np.float64)
        self._vys = np.zeros(nr, dtype=np.float64)

        win = 2 * cfg.local.filter_radius + 1
        self._pxs = np.empty(2 * win * win, dtype=np.float64)
        self._pys = np.empty(2 * win * win, dtype=np.float64)
        self._pts = np.empty(2 * win * win, dtype=np.float64)
        self._pkeep = np.empty(win * win, dtype=np.uint8)

        self._prev_t: int | None = None

    def _grow_buffer(self):
        cap = len(self.buf_t)
        new_cap = cap * 2
        tail, head = int(self.bstate[0]), int(self.bstate[1])
        idx = np.arange(tail, head, dtype=np.int64)
        old_slots = idx % cap
        new_slots = idx % new_cap
        for name in ("buf_t", "buf_x", "buf_y", "buf_speed", "buf_vx", "buf_vy", "buf_dead"):
            old = getattr(self, name)
            new = np.empty(new_cap, dtype=old.dtype)
            new[new_slots] = old[old_slots]
            setattr(self, name, new)

    def _validate(self, t, x, y, p):
        g = self.cfg.geometry
        if len(t) == 0:
            return
        if len(t) > 1 and (np.diff(t) < 0).any():
            raise NonMonotonicTimestampError("chunk timestamps decrease")
        if self._prev_t is not None and int(t[0]) < self._prev_t:
            raise NonMonotonicTimestampError("timestamps decrease across chunks")
        if int(x.max()) >= g.width or int(y.max()) >= g.height:
            raise OutOfBoundsError(f"event coordinates exceed {g.width}x{g.height}")
        if int(p.min()) < 0 or int(p.max()) > 1:
            raise OutOfBoundsError("polarity must be 0 or 1")

    def process(self, chunk) -> np.ndarray:
        """Run one chunk of events; returns one flow record per event."""
        n = len(chunk)
        out = np.empty(n, dtype=FLOW_DTYPE)
        if n == 0:
            return out
        t = np.ascontiguousarray(chunk["t"], dtype=np.int64)
        x = np.ascontiguousarray(chunk["x"], dtype=np.int64)
        y = np.ascontiguousarray(chunk["y"], dtype=np.int64)
        p = np.ascontiguousarray(chunk["p"], dtype=np.int64)
        self._validate(t, x, y, p)

        out_vx = np.empty(n, dtype=np.float64)
        out_vy = np.empty(n, dtype=np.float64)
        out_valid = np.empty(n, dtype=np.uint8)
        out_radius = np.empty(n, dtype=np.int32)

        cfg = self.cfg
        start = 0
        while True:
            done = self._kernel(
                t, x, y, p,
                start,
                self.last,
                self.fs_t, self.fs_seq, self.fs_speed, self.fs_vx, self.fs_vy,
                self.buf_t, self.buf_x, self.buf_y,
                self.buf_speed, self.buf_vx, self.buf_vy, self.buf_dead,
                self.bstate,
                self.radii, self.ring_of,
                self._cnt, self._ssum, self._vxs, self._vys,
                self._pxs, self._pys, self._pts, self._pkeep,
                out_vx, out_vy, out_valid, out_radius,
                cfg.local.filter_radius,
                cfg.local.t_past,
                cfg.local.refit_passes,
                cfg.local.inlier_threshold_scale,
                cfg.local.inlier_fraction,
                cfg.local.min_fit_events,
                MIN_GRADIENT,
                cfg.scales.t_past,
                cfg.scales.min_pool_count,
                1 if cfg.flow == "corrected" else 0,
                1 if cfg.polarity_mode == "merged" else 0,
            )
            if done >= n:
                break
            self._grow_buffer()
            start = done

        out["t"] = t
        out["x"] = x
        out["y"] = y
        out["p"] = p
        out["vx"] = out_vx
        out["vy"] = out_vy
        out["valid"] = out_valid
        out["chosen_radius"] = out_radius
        self._prev_t = int(t[-1])
        return out


def run_pipeline(cfg: PipelineConfig, chunks, backend: str | None = None):
    """Generator of flow-record chunks, one output record per event."""
    pl = Pipeline(cfg, backend)
    for chunk in chunks:
        yield pl.process(chunk)


def run_pipeline_array(cfg: PipelineConfig, events: np.ndarray,
                       backend: str | None = None,
                       chunk_size: int = 1 << 16) -> np.ndarray:
    """Convenience: process a preloaded event array, return all records."""
    pl = Pipeline(cfg, backend)
    parts = [pl.process(events[i : i + chunk_size]) for i in range(0, len(events), chunk_size)]
    if not parts:
        return np.empty(0, dtype=FLOW_DTYPE)
    return np.concatenate(parts)


def warmup(backend: str | None = None) -> float:
    """Push a few events through the kernel so JIT compilation cost is
    paid before anything is timed. Returns the time spent."""
    t0 = time.perf_counter()
    cfg = PipelineConfig(geometry=SensorGeometry(16, 16), scales=ScaleSet(radii=(0, 2, 4)))
    chunk = np.empty(16, dtype=EVENT_DTYPE)
    chunk["t"] = np.arange(16) * 100
    chunk["x"] = 8
    chunk["y"] = 8
    chunk["p"] = 0
    for flow in ("corrected", "local"):
        Pipeline(replace(cfg, flow=flow), backend).process(chunk)
    return time.perf_counter() - t0


# ---------------------------------------------------------------------------
# Config files: plain "key = value" lines, '#' comments
# ---------------------------------------------------------------------------

_CONFIG_KEYS = (
    "width", "height", "polarity_mode", "flow",
    "filter_radius", "inlier_fraction", "min_fit_events", "refit_passes",
    "local_t_past_us", "inlier_threshold_scale",
    "pool_radii", "pool_t_past_us", "min_pool_count",
    "horizons_us", "cluster_span_us",
)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "width": cfg.geometry.width,
        "height": cfg.geometry.height,
        "polarity_mode": cfg.polarity_mode,
        "flow": cfg.flow,
        "filter_radius": cfg.local.filter_radius,
        "inlier_fraction": cfg.local.inlier_fraction,
        "min_fit_events": cfg.local.min_fit_events,
        "refit_passes": cfg.local.refit_passes,
        "local_t_past_us": cfg.local.t_past,
        "inlier_threshold_scale": cfg.local.inlier_threshold_scale,
        "pool_radii": ",".join(str(r) for r in cfg.scales.radii),
        "pool_t_past_us": cfg.scales.t_past,
        "min_pool_count": cfg.scales.min_pool_count,
        "horizons_us": ",".join(str(h) for h in cfg.horizons_us),
        "cluster_span_us": cfg.cluster_span_us,
    }


def config_from_dict(d: dict) -> PipelineConfig:
    base = config_to_dict(PipelineConfig())
    unknown = set(d) - set(base)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**base, **d}
    try:
        geometry = SensorGeometry(int(merged["width"]), int(merged["height"]))
        local = LocalFlowConfig(
            filter_radius=int(merged["filter_radius"]),
            inlier_fraction=float(merged["inlier_fraction"]),
            min_fit_events=int(merged["min_fit_events"]),
            refit_passes=int(merged["refit_passes"]),
            t_past=int(merged["local_t_past_us"]),
            inlier_threshold_scale=float(merged["inlier_threshold_scale"]),
        )
        radii = tuple(int(v) for v in str(merged["pool_radii"]).split(",") if str(v).strip())
        scales = ScaleSet(
            radii=radii,
            t_past=int(merged["pool_t_past_us"]),
            min_pool_count=int(merged["min_pool_count"]),
        )
        horizons = tuple(
            int(v) for v in str(merged["horizons_us"]).split(",") if str(v).strip()
        )
        return PipelineConfig(
            geometry=geometry,
            local=local,
            scales=scales,
            polarity_mode=str(merged["polarity_mode"]),
            flow=str(merged["flow"]),
            horizons_us=horizons,
            cluster_span_us=int(merged["cluster_span_us"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str) -> PipelineConfig:
    d = {}
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            d[key.strip()] = value.strip()
    return config_from_dict(d)


def save_config(cfg: PipelineConfig, path: str) -> None:
    with open(path, "w", encoding="ascii") as f:
        for key, value in config_to_dict(cfg).items():
            f.write(f"{key} = {value}\n")
