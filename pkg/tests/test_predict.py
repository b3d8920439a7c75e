import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from evflow.core import FLOW_DTYPE, Event, FlowVector, SensorGeometry
from evflow.errors import EmptyClusterError
from evflow.predict import (
    ClusterWindow,
    cluster_windows,
    normalize_cluster_speeds,
    predict_event,
    predict_records,
    predict_window,
    rasterize,
    stream_cluster_windows,
)
from evflow.synth import SceneObject, SceneSpec, generate


class TestPredictEvent:
    def test_zero_flow_is_stationary(self):
        p = predict_event(Event(0, 12, 34, 1), FlowVector(0.0, 0.0), 750_000)
        assert (p.px, p.py) == (12.0, 34.0)

    def test_quarter_second_displacement(self):
        p = predict_event(Event(0, 10, 20, 1), FlowVector(100.0, 0.0), 250_000)
        assert p.px == pytest.approx(35.0)
        assert p.py == pytest.approx(20.0)

    def test_out_of_frame_flag(self):
        g = SensorGeometry(304, 240)
        p = predict_event(Event(0, 300, 100, 1), FlowVector(100.0, 0.0), 500_000, g)
        assert p.px == pytest.approx(350.0)
        assert p.out_of_frame
        q = predict_event(Event(0, 100, 100, 1), FlowVector(100.0, 0.0), 500_000, g)
        assert not q.out_of_frame

    def test_vectorized_matches_scalar(self, rng):
        rec = np.zeros(20, dtype=FLOW_DTYPE)
        rec["t"] = np.sort(rng.integers(0, 1000, 20))
        rec["x"] = rng.integers(0, 100, 20)
        rec["y"] = rng.integers(0, 100, 20)
        rec["vx"] = rng.normal(0, 50, 20)
        rec["vy"] = rng.normal(0, 50, 20)
        rec["valid"] = 1
        out = predict_records(rec, 100_000)
        for r, o in zip(rec, out):
            p = predict_event(Event(int(r["t"]), int(r["x"]), int(r["y"]), 0),
                              FlowVector(float(r["vx"]), float(r["vy"])), 100_000)
            assert o["px"] == pytest.approx(p.px)
            assert o["py"] == pytest.approx(p.py)
            assert o["t"] == r["t"] + 100_000

    def test_rasterize_nearest(self):
        xs, ys = rasterize([1.4, 1.5, -0.4], [2.6, 2.4, 0.0])
        assert xs.tolist() == [1, 2, 0]
        assert ys.tolist() == [3, 2, 0]


def window_of(speeds, thetas, t0=0):
    n = len(speeds)
    ev = np.zeros(n, dtype=FLOW_DTYPE)
    ev["t"] = t0 + np.arange(n)
    ev["valid"] = 1
    flows = np.column_stack(
        [np.asarray(speeds) * np.cos(thetas), np.asarray(speeds) * np.sin(thetas)]
    )
    ev["vx"] = flows[:, 0]
    ev["vy"] = flows[:, 1]
    return ClusterWindow(t0, t0 + 50_000, ev, flows)


class TestNormalizeClusterSpeeds:
    def test_mean_replaces_speeds_directions_kept(self):
        w = normalize_cluster_speeds(window_of([80.0, 120.0], [0.0, math.pi / 2]))
        speeds = np.hypot(w.flows[:, 0], w.flows[:, 1])
        assert speeds == pytest.approx([100.0, 100.0])
        assert w.flows[0] == pytest.approx([100.0, 0.0])
        assert w.flows[1] == pytest.approx([0.0, 100.0])

    def test_fixed_point_when_equal(self):
        w0 = window_of([55.0, 55.0, 55.0], [0.1, 0.2, 0.3])
        w = normalize_cluster_speeds(w0)
        assert np.allclose(w.flows, w0.flows)

    def test_single_member_unchanged(self):
        w0 = window_of([70.0], [1.0])
        w = normalize_cluster_speeds(w0)
        assert np.allclose(w.flows, w0.flows)

    def test_empty_cluster_raises(self):
        w = window_of([0.0, 0.0], [0.0, 0.0])
        with pytest.raises(EmptyClusterError):
            normalize_cluster_speeds(w)


class TestClusterWindows:
    def _records(self):
        rec = np.zeros(10, dtype=FLOW_DTYPE)
        rec["t"] = [7_000, 12_000, 49_000, 50_000, 61_000, 99_000,
                    150_000, 151_000, 152_000, 260_000]
        rec["valid"] = 1
        rec["vx"] = 1.0
        return rec

    def test_absolute_alignment(self):
        wins = list(cluster_windows(self._records(), 50_000))
        starts = [w.start_t for w in wins]
        assert starts == [0, 50_000, 150_000, 250_000]
        assert [len(w.events) for w in wins] == [3, 3, 3, 1]

    def test_stream_matches_batch(self):
        rec = self._records()
        batch = list(cluster_windows(rec, 50_000))
        chunked = list(stream_cluster_windows([rec[:4], rec[4:7], rec[7:]], 50_000))
        assert [w.start_t for w in batch] == [w.start_t for w in chunked]
        for a, b in zip(batch, chunked):
            assert np.array_equal(a.events, b.events)
            assert np.allclose(a.flows, b.flows)

    def test_sliding_stride(self):
        wins = list(cluster_windows(self._records(), 50_000, stride=25_000))
        assert [w.start_t for w in wins][:3] == [0, 25_000, 50_000]

    def test_invalid_records_excluded(self):
        rec = self._records()
        rec["valid"][:3] = 0
        wins = list(cluster_windows(rec, 50_000))
        assert wins[0].start_t == 50_000


class TestRigidTranslationExactness:
    def test_truth_flow_prediction_lands_on_future_events(self):
        # with exact ground-truth flow the predicted cloud matches the
        # future events to within rasterization
        geom = SensorGeometry(360, 120)
        bar = SceneObject("segment", ((40.0, 30.0), (40.0, 80.0)), (400.0, 0.0))
        lab = generate(SceneSpec(geometry=geom, objects=(bar,)), 600_000)
        horizon = 250_000
        src = lab[(lab["t"] >= 100_000) & (lab["t"] < 150_000)]
        px = src["x"] + src["vx"] * horizon / 1e6
        py = src["y"] + src["vy"] * horizon / 1e6
        tgt = lab[(lab["t"] >= 350_000) & (lab["t"] < 400_000)]
        d, _ = cKDTree(np.column_stack([tgt["x"], tgt["y"]]).astype(float)).query(
            np.column_stack([px, py])
        )
        assert d.max() <= 1.0


class TestPredictWindow:
    def test_predicts_all_members(self):
        w = window_of([100.0, 200.0], [0.0, math.pi])
        out = predict_window(w, 500_000)
        assert len(out) == 2
        assert out["px"][0] == pytest.approx(0.0 + 50.0)
        assert out["px"][1] == pytest.approx(0.0 - 100.0)
        assert (out["horizon"] == 500_000).all()
