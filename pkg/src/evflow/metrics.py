"""Evaluation metrics: endpoint error, zero-rotation affine fit of
predicted-to-actual clouds, and circular direction statistics.

Event clouds carry no point identities, so the affine fit is
distribution-level: translation from centroids, scale from the ratio of
RMS radii about the centroids, residual as the RMS nearest-neighbor
distance after applying the transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCloudError, EmptyInputError, LengthMismatchError


def aee(estimates, truths) -> float:
    """Mean Euclidean distance between estimated and true velocity
    vectors, one pair per event."""
    est = np.asarray(estimates, dtype=np.float64).reshape(-1, 2)
    tru = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    if len(est) != len(tru):
        raise LengthMismatchError(f"{len(est)} estimates vs {len(tru)} truths")
    if len(est) == 0:
        raise EmptyInputError("aee needs at least one pair")
    return float(np.linalg.norm(est - tru, axis=1).mean())


@dataclass(frozen=True)
class AffineFit:
    scale: float
    translation: tuple[float, float]
    residual: float


def affine_fit(predicted, actual) -> AffineFit:
    """Zero-rotation affine (scale about the centroid, then translation)
    mapping the predicted cloud onto the actual one. A perfect
    prediction fits with scale 1 and translation (0, 0)."""
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    act = np.asarray(actual, dtype=np.float64).reshape(-1, 2)
    if len(pred) < 2 or len(act) < 2:
        raise DegenerateCloudError("affine fit needs >= 2 points per cloud")
    cp = pred.mean(axis=0)
    ca = act.mean(axis=0)
    rp = float(np.sqrt(((pred - cp) ** 2).sum(axis=1).mean()))
    ra = float(np.sqrt(((act - ca) ** 2).sum(axis=1).mean()))
    if rp <= 0 or ra <= 0:
        raise DegenerateCloudError("cloud has zero spread")
    scale = ra / rp
    translation = ca - cp
    mapped = cp + scale * (pred - cp) + translation
    d, _ = cKDTree(act).query(mapped)
    residual = float(np.sqrt((d**2).mean()))
    return AffineFit(scale, (float(translation[0]), float(translation[1])), residual)


def circular_mean(angles) -> float:
    """Resultant-vector mean direction, folded into [0, 2pi)."""
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        raise EmptyInputError("no angles")
    z = np.exp(1j * a).sum()
    m = math.atan2(z.imag, z.real)
    return m + 2.0 * math.pi if m < 0 else m


def circular_std(angles) -> float:
    """sqrt(-2 ln R_bar); infinite when the resultant vanishes."""
    a = np.asarray(angles, dtype=np.float64)
    if a.size == 0:
        raise EmptyInputError("no angles")
    r = abs(np.exp(1j * a).sum()) / a.size
    if r <= 0.0:
        return math.inf
    if r >= 1.0:
        return 0.0
    return math.sqrt(-2.0 * math.log(r))


@dataclass
class DirectionHistogram:
    bin_edges: np.ndarray  # length bins+1 over [0, 2pi)
    counts: np.ndarray
    circ_mean: float
    circ_std: float

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("bin_center,count\n")
            for c, n in zip(self.bin_centers, self.counts):
                f.write(f"{c!r},{int(n)}\n")


def direction_stats(flows, bins: int = 36) -> DirectionHistogram:
    """Histogram of flow directions over [0, 2pi) with circular mean and
    standard deviation. Zero or non-finite vectors carry no direction
    and are ignored; at least one valid flow is required."""
    v = np.asarray(flows, dtype=np.float64).reshape(-1, 2)
    if len(v) == 0:
        raise EmptyInputError("no flows")
    ok = np.isfinite(v).all(axis=1) & ((v[:, 0] != 0.0) | (v[:, 1] != 0.0))
    v = v[ok]
    if len(v) == 0:
        raise EmptyInputError("no valid flows")
    ang = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2.0 * math.pi)
    counts, edges = np.histogram(ang, bins=bins, range=(0.0, 2.0 * math.pi))
    return DirectionHistogram(edges, counts, circular_mean(ang), circular_std(ang))


def angular_error(angle_a, angle_b):
    """Smallest absolute angle between two directions, in [0, pi]."""
    d = np.mod(np.asarray(angle_a) - np.asarray(angle_b), 2.0 * math.pi)
    return np.where(d > math.pi, 2.0 * math.pi - d, d)
