import math

import numpy as np
import pytest

from evflow.core import Event, FlowSurface, LocalFlow, SensorGeometry
from evflow.errors import NoValidCenterFlowError
from evflow.pooling import ScaleSet, corrected_flow, pooled_mean_speed, select_scale

GEOM = SensorGeometry(64, 64)


def surface_with(entries, geometry=GEOM):
    """entries: iterable of (t, x, y, speed, theta)."""
    fs = FlowSurface(geometry)
    for t, x, y, speed, theta in entries:
        fs.record(Event(int(t), int(x), int(y), 1), LocalFlow(speed, theta, True))
    return fs


def brute_force_pool(entries, cx, cy, ct, radius, t_past):
    """Oracle over a per-pixel last-writer dict model."""
    latest = {}
    for t, x, y, speed, theta in entries:
        latest[(x, y)] = (t, speed, theta)
    speeds = [
        s
        for (x, y), (t, s, _) in latest.items()
        if abs(x - cx) <= radius and abs(y - cy) <= radius and t <= ct and ct - t <= t_past
    ]
    if not speeds:
        return 0.0, 0
    return sum(speeds) / len(speeds), len(speeds)


class TestPooledMeanSpeed:
    def test_singleton_center(self):
        fs = surface_with([(100, 10, 10, 70.7, math.pi / 2)])
        mean, n = pooled_mean_speed(Event(100, 10, 10, 1), fs, 0, 5000)
        assert (mean, n) == (70.7, 1)

    def test_two_segment_closed_form(self):
        # equal event counts at +-45 degrees, both at |U| cos 45
        u, s = 100.0, 100.0 * math.cos(math.pi / 4)
        entries = [(100, 10 + i, 10, s, math.pi / 4) for i in range(5)]
        entries += [(100, 10 + i, 20, s, 3 * math.pi / 4) for i in range(5)]
        fs = surface_with(entries)
        mean, n = pooled_mean_speed(Event(100, 12, 15, 1), fs, 10, 5000)
        assert n == 10
        assert mean == pytest.approx(u * math.cos(math.pi / 4), rel=1e-12)

    def test_stale_entries_excluded(self):
        fs = surface_with([(100, 10, 10, 50.0, 0.0), (200, 12, 10, 60.0, 0.0)])
        mean, n = pooled_mean_speed(Event(10_000, 11, 10, 1), fs, 5, 1000)
        assert (mean, n) == (0.0, 0)

    def test_future_entries_excluded(self):
        fs = surface_with([(5000, 10, 10, 50.0, 0.0)])
        mean, n = pooled_mean_speed(Event(100, 10, 10, 1), fs, 5, 10_000)
        assert (mean, n) == (0.0, 0)

    def test_last_writer_wins_per_pixel(self):
        fs = surface_with([(100, 10, 10, 50.0, 0.0), (150, 10, 10, 90.0, 0.0)])
        mean, n = pooled_mean_speed(Event(150, 10, 10, 1), fs, 0, 5000)
        assert (mean, n) == (90.0, 1)

    def test_matches_brute_force(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 60))
            entries = [
                (
                    int(t),
                    int(rng.integers(0, GEOM.width)),
                    int(rng.integers(0, GEOM.height)),
                    float(rng.uniform(1, 500)),
                    float(rng.uniform(0, 2 * math.pi)),
                )
                for t in np.sort(rng.integers(0, 10_000, n))
            ]
            fs = surface_with(entries)
            ct = 10_000
            cx, cy = int(rng.integers(0, 64)), int(rng.integers(0, 64))
            radius = int(rng.integers(0, 30))
            t_past = int(rng.integers(100, 12_000))
            got = pooled_mean_speed(Event(ct, cx, cy, 1), fs, radius, t_past)
            want = brute_force_pool(entries, cx, cy, ct, radius, t_past)
            assert got[1] == want[1]
            assert got[0] == pytest.approx(want[0], rel=1e-12)

    def test_upper_bound_property(self, rng):
        # pooled mean speed never exceeds the largest pooled speed
        for _ in range(30):
            n = int(rng.integers(2, 40))
            entries = [
                (
                    int(t),
                    int(rng.integers(0, 40)),
                    int(rng.integers(0, 40)),
                    float(rng.uniform(1, 300)),
                    0.0,
                )
                for t in np.sort(rng.integers(0, 5000, n))
            ]
            fs = surface_with(entries)
            for radius in (0, 5, 10, 20, 40):
                mean, cnt = pooled_mean_speed(Event(5000, 20, 20, 1), fs, radius, 6000)
                if cnt:
                    top = max(s for _, x, y, s, _ in entries
                              if abs(x - 20) <= radius and abs(y - 20) <= radius)
                    assert mean <= top + 1e-9


class TestSelectScale:
    SCALES = ScaleSet(radii=(0, 2, 4, 8), t_past=5000)

    def test_requires_valid_center(self):
        fs = FlowSurface(GEOM)
        with pytest.raises(NoValidCenterFlowError):
            select_scale(Event(100, 10, 10, 1), fs, self.SCALES)

    def test_tie_breaks_to_smallest_radius(self):
        # identical speeds everywhere: every radius reports the same mean
        entries = [(100, x, y, 50.0, 0.0) for x in range(4, 17) for y in range(4, 17)]
        fs = surface_with(entries)
        rep = select_scale(Event(100, 10, 10, 1), fs, self.SCALES)
        assert rep.chosen_radius == 0
        assert rep.error_value == 0.0
        assert np.all(rep.errors == 0.0)

    def test_fixed_point_on_uniform_edge(self):
        entries = [(100, x, 10, 80.0, math.pi / 2) for x in range(5, 16)]
        fs = surface_with(entries)
        center = Event(100, 10, 10, 1)
        rep = select_scale(center, fs, self.SCALES)
        assert rep.chosen_radius == 0
        v = corrected_flow(center, fs, self.SCALES)
        assert v.vx == pytest.approx(0.0, abs=1e-12)
        assert v.vy == pytest.approx(80.0, rel=1e-12)

    def test_prefers_faster_window(self):
        # slow flow at the center, fast cluster 6 px away: radius 8 wins
        entries = [(100, 10, 10, 50.0, 0.0)]
        entries += [(100, 16, 10 + k, 100.0, 0.0) for k in range(-2, 3)]
        fs = surface_with(entries)
        rep = select_scale(Event(100, 10, 10, 1), fs, self.SCALES)
        assert rep.chosen_radius == 8
        assert rep.mean_speeds[-1] == pytest.approx((50.0 + 5 * 100.0) / 6)
        assert rep.counts.tolist() == [1, 1, 1, 6]

    def test_min_pool_count_floor(self):
        entries = [(100, 10, 10, 50.0, 0.0)]
        entries += [(100, 16, 10 + k, 100.0, 0.0) for k in range(-2, 3)]
        fs = surface_with(entries)
        scales = ScaleSet(radii=(0, 2, 4, 8), t_past=5000, min_pool_count=4)
        rep = select_scale(Event(100, 10, 10, 1), fs, scales)
        assert rep.chosen_radius == 8  # only radius meeting the floor
        # floor that nothing reaches: falls back to every nonempty radius
        scales = ScaleSet(radii=(0, 2, 4, 8), t_past=5000, min_pool_count=50)
        rep = select_scale(Event(100, 10, 10, 1), fs, scales)
        assert rep.chosen_radius == 8

    def test_error_values_are_gaps(self):
        entries = [(100, 10, 10, 50.0, 0.0)]
        entries += [(100, 13, 10, 90.0, 0.0)]
        fs = surface_with(entries)
        rep = select_scale(Event(100, 10, 10, 1), fs, self.SCALES)
        assert rep.chosen_radius == 4
        best = rep.mean_speeds[rep.chosen_index]
        assert np.allclose(rep.errors, best - rep.mean_speeds)
        assert rep.error_value == 0.0

    def test_report_csv(self, tmp_path):
        entries = [(100, 10, 10, 50.0, 0.25)]
        fs = surface_with(entries)
        rep = select_scale(Event(100, 10, 10, 1), fs, self.SCALES)
        path = tmp_path / "scales.csv"
        rep.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "radius,mean_speed,count,circular_mean_dir,error,chosen"
        assert len(lines) == 1 + len(self.SCALES.radii)
        assert lines[1].startswith("0,50.0,1,0.25,")


class TestCorrectedFlow:
    SCALES = ScaleSet(radii=(0, 4), t_past=5000)

    def test_identity_on_identical_vectors(self):
        v = (30.0, 40.0)
        theta = math.atan2(40.0, 30.0)
        entries = [(100, 10 + dx, 10 + dy, 50.0, theta) for dx in range(-2, 3) for dy in range(-2, 3)]
        fs = surface_with(entries)
        got = corrected_flow(Event(100, 10, 10, 1), fs, self.SCALES)
        assert got.vx == pytest.approx(v[0], rel=1e-12)
        assert got.vy == pytest.approx(v[1], rel=1e-12)

    def test_symmetric_pair_mean(self):
        # +-45 degrees at speed s: direction 0, magnitude s cos 45
        s = 120.0
        entries = [(100, 10, 9, s, math.pi / 4), (100, 10, 11, s, -math.pi / 4 + 2 * math.pi)]
        fs = surface_with(entries)
        fs.record(Event(100, 10, 10, 1), LocalFlow(s, math.pi / 4, True))
        got = corrected_flow(Event(100, 10, 10, 1), fs, ScaleSet(radii=(0, 2), t_past=5000))
        # window at radius 2 holds the two symmetric flows plus the center
        assert got.vy != 0.0  # center's own flow tilts it; use the pair-only window
        fs2 = surface_with(entries)
        fs2.record(Event(100, 12, 10, 1), LocalFlow(s, math.pi / 4, True))
        got2 = corrected_flow(Event(100, 12, 10, 1), fs2, ScaleSet(radii=(3,), t_past=5000))
        assert got2.vy == pytest.approx((s * math.sin(math.pi / 4) + s * math.sin(-math.pi / 4) + s * math.sin(math.pi / 4)) / 3, rel=1e-12)

    def test_pair_closed_form(self):
        s = 120.0
        entries = [(100, 10, 9, s, math.pi / 4), (100, 10, 11, s, 2 * math.pi - math.pi / 4)]
        fs = surface_with(entries)
        # query from a pixel whose own flow is one of the pair
        fs_q = surface_with(entries)
        rep_center = Event(100, 10, 9, 1)
        got = corrected_flow(rep_center, fs_q, ScaleSet(radii=(2,), t_past=5000))
        assert got.vx == pytest.approx((s * math.cos(math.pi / 4) * 2) / 2, rel=1e-12)
        assert abs(math.atan2(got.vy, got.vx)) < 1e-12
        assert math.hypot(got.vx, got.vy) == pytest.approx(s * math.cos(math.pi / 4), rel=1e-12)
