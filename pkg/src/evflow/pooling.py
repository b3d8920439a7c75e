"""Multi-scale pooled correction of local flows.

Local plane-fit flow is edge-normal, so its magnitude shrinks with the
angle between edge and motion. Pooling over a spatial scale and picking
the scale whose mean speed is largest therefore selects the window best
aligned with the true motion; averaging the Cartesian flow vectors over
that window replaces the event's direction (and magnitude) with the
corrected estimate.

These functions are the readable window-scan route over a FlowSurface.
The streaming pipeline computes the identical sweep from ring sums in
:mod:`evflow._kernels`; tests hold the two routes together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import TIE_EPS
from .core import Event, FlowSurface, FlowVector
from .errors import NoValidCenterFlowError

DEFAULT_RADII = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)


@dataclass(frozen=True)
class ScaleSet:
    """Candidate pooling radii (Chebyshev; radius 0 is the center pixel
    alone) with the temporal cutoff applied to pooled flow entries."""

    radii: tuple[int, ...] = DEFAULT_RADII
    t_past: int = 5000
    min_pool_count: int = 1

    def __post_init__(self):
        r = tuple(int(v) for v in self.radii)
        if len(r) == 0:
            raise ValueError("need at least one radius")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be strictly increasing")
        if r[0] < 0:
            raise ValueError("radii must be >= 0")
        if self.min_pool_count < 1:
            raise ValueError("min_pool_count must be >= 1")
        object.__setattr__(self, "radii", r)

    def ring_lookup(self) -> np.ndarray:
        """ring_lookup()[d] = index of the smallest radius >= Chebyshev
        distance d, for the ring-sum sweep."""
        max_r = self.radii[-1]
        out = np.empty(max_r + 1, dtype=np.int64)
        k = 0
        for d in range(max_r + 1):
            while self.radii[k] < d:
                k += 1
            out[d] = k
        return out


@dataclass
class ScaleReport:
    """Per-radius pooling diagnostics plus the selected scale.

    ``errors[k]`` is the gap between the best observed pooled mean and
    the mean at radius k; it is zero at the chosen radius by
    construction.
    """

    radii: tuple[int, ...]
    mean_speeds: np.ndarray
    counts: np.ndarray
    circular_mean_dirs: np.ndarray
    chosen_radius: int
    chosen_index: int
    errors: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.errors is None:
            best = float(self.mean_speeds[self.chosen_index])
            # radii tied within TIE_EPS may carry an ulp-larger mean;
            # the gap is zero in substance, so never report a negative
            self.errors = np.maximum(best - self.mean_speeds, 0.0)

    @property
    def error_value(self) -> float:
        return float(self.errors[self.chosen_index])

    def rows(self):
        """One (radius, mean_speed, count, circular_mean_dir, error,
        chosen) tuple per radius, for the diagnostic dump."""
        for k, r in enumerate(self.radii):
            yield (
                r,
                float(self.mean_speeds[k]),
                int(self.counts[k]),
                float(self.circular_mean_dirs[k]),
                float(self.errors[k]),
                1 if k == self.chosen_index else 0,
            )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("radius,mean_speed,count,circular_mean_dir,error,chosen\n")
            for row in self.rows():
                f.write("%d,%r,%d,%r,%r,%d\n" % row)


def pooled_mean_speed(center: Event, flows: FlowSurface, radius: int, t_past: int):
    """Arithmetic mean of the speeds of valid flow entries within the
    (2*radius+1)^2 window and within ``t_past`` of the center time.
    Returns (mean_speed, count); (0.0, 0) when the window is empty."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    ok, speed, _, _ = flows.window_mask(center.x, center.y, int(center.t), radius, t_past)
    n = int(np.count_nonzero(ok))
    if n == 0:
        return 0.0, 0
    return float(speed[ok].sum() / n), n


def _window_stats(center: Event, flows: FlowSurface, radius: int, t_past: int):
    ok, speed, vx, vy = flows.window_mask(center.x, center.y, int(center.t), radius, t_past)
    n = int(np.count_nonzero(ok))
    if n == 0:
        return 0, 0.0, 0.0, 0.0, 0.0
    sp = float(speed[ok].sum())
    sx = float(vx[ok].sum())
    sy = float(vy[ok].sum())
    ang = np.arctan2(vy[ok], vx[ok])
    res = complex(np.exp(1j * ang).sum())
    cmean = math.atan2(res.imag, res.real)
    if cmean < 0:
        cmean += 2.0 * math.pi
    return n, sp, sx, sy, cmean


def _center_is_valid(center: Event, flows: FlowSurface, t_past: int) -> bool:
    ct = int(center.t)
    t = int(flows.t[center.y, center.x])
    return int(flows.seq[center.y, center.x]) >= 0 and t <= ct and ct - t <= t_past


def select_scale(center: Event, flows: FlowSurface, scales: ScaleSet) -> ScaleReport:
    """Evaluate the pooled mean speed at every radius and choose the
    smallest radius attaining the maximum among radii with at least
    ``min_pool_count`` entries (every nonempty radius when none reach
    the floor). Means within a relative TIE_EPS count as equal and the
    tie goes to the smaller radius. Requires a valid flow at the center
    pixel."""
    if not _center_is_valid(center, flows, scales.t_past):
        raise NoValidCenterFlowError(
            f"no valid flow at ({center.x}, {center.y}) within {scales.t_past} µs"
        )
    nr = len(scales.radii)
    counts = np.zeros(nr, dtype=np.int64)
    means = np.zeros(nr, dtype=np.float64)
    cdirs = np.zeros(nr, dtype=np.float64)
    for k, r in enumerate(scales.radii):
        n, sp, _, _, cmean = _window_stats(center, flows, r, scales.t_past)
        counts[k] = n
        means[k] = sp / n if n else 0.0
        cdirs[k] = cmean
    eligible = counts >= scales.min_pool_count
    if not eligible.any():
        eligible = counts > 0
    best = -1
    best_mean = -1.0
    for k in range(nr):
        if eligible[k] and means[k] > best_mean + best_mean * TIE_EPS:
            best_mean = means[k]
            best = k
    return ScaleReport(
        radii=scales.radii,
        mean_speeds=means,
        counts=counts,
        circular_mean_dirs=cdirs,
        chosen_radius=scales.radii[best],
        chosen_index=best,
    )


def corrected_flow(center: Event, flows: FlowSurface, scales: ScaleSet) -> FlowVector:
    """Component-wise mean of the flow vectors pooled at the selected
    scale: the event's corrected velocity."""
    report = select_scale(center, flows, scales)
    n, _, sx, sy, _ = _window_stats(center, flows, report.chosen_radius, scales.t_past)
    return FlowVector(sx / n, sy / n)
