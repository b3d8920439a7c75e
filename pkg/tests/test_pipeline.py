import math
from dataclasses import replace

import numpy as np
import pytest

from evflow import metrics
from evflow.core import (
    EVENT_DTYPE,
    FLOW_DTYPE,
    Event,
    FlowSurface,
    SensorGeometry,
    TimeSurface,
)
from evflow.errors import NonMonotonicTimestampError, OutOfBoundsError
from evflow.pipeline import (
    Pipeline,
    PipelineConfig,
    config_to_dict,
    load_config,
    run_pipeline,
    run_pipeline_array,
    save_config,
)
from evflow.planefit import LocalFlowConfig, local_flow
from evflow.pooling import ScaleSet, corrected_flow, select_scale
from evflow.synth import SceneObject, SceneSpec, events_view, generate


def mini_scene():
    """Small bar+diamond scene sized so the pure-API replay stays fast."""
    geom = SensorGeometry(120, 100)
    vel = (0.0, 1000.0)
    objects = (
        SceneObject("segment", ((30.0, 12.0), (90.0, 12.0)), vel),
        SceneObject(
            "polygon",
            ((60.0, 18.0), (72.0, 30.0), (60.0, 42.0), (48.0, 30.0)),
            vel,
        ),
    )
    spec = SceneSpec(geometry=geom, objects=objects)
    return spec, 50_000


def mini_config(geom):
    return PipelineConfig(
        geometry=geom,
        scales=ScaleSet(radii=(0, 5, 10, 15, 20, 25, 30, 40), t_past=5000),
    )


def replay_with_api(cfg: PipelineConfig, events) -> np.ndarray:
    """Independent route: drive the event-level APIs one event at a time."""
    ts = TimeSurface(cfg.geometry)
    fs = FlowSurface(cfg.geometry)
    merged = cfg.polarity_mode == "merged"
    out = np.zeros(len(events), dtype=FLOW_DTYPE)
    for i, r in enumerate(events):
        e = Event(int(r["t"]), int(r["x"]), int(r["y"]), int(r["p"]))
        ts.ingest(e)
        lf = local_flow(e, ts, cfg.local, merged)
        rec = (e.t, e.x, e.y, e.p, 0.0, 0.0, 0, -1)
        if lf.valid:
            fs.record(e, lf)
            if cfg.flow == "corrected":
                rep = select_scale(e, fs, cfg.scales)
                v = corrected_flow(e, fs, cfg.scales)
                rec = (e.t, e.x, e.y, e.p, v.vx, v.vy, 1, rep.chosen_radius)
            else:
                vec = lf.vector()
                rec = (e.t, e.x, e.y, e.p, vec.vx, vec.vy, 1, -1)
        out[i] = rec
    return out


class TestPipelineBasics:
    def test_empty_stream(self):
        cfg = PipelineConfig()
        recs = list(run_pipeline(cfg, iter([])))
        assert recs == []
        out = run_pipeline_array(cfg, np.empty(0, dtype=EVENT_DTYPE))
        assert len(out) == 0

    def test_determinism(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = mini_config(spec.geometry)
        a = run_pipeline_array(cfg, ev)
        b = run_pipeline_array(cfg, ev)
        assert np.array_equal(a, b)

    def test_chunking_invariance(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = mini_config(spec.geometry)
        whole = run_pipeline_array(cfg, ev, chunk_size=1 << 20)
        tiny = run_pipeline_array(cfg, ev, chunk_size=311)
        assert np.array_equal(whole, tiny)

    def test_buffer_growth_identical(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = mini_config(spec.geometry)
        big = Pipeline(cfg).process(ev)
        small = Pipeline(cfg, initial_buffer=64)
        got = small.process(ev)
        assert len(small.buf_t) > 64  # growth actually happened
        assert np.array_equal(big, got)

    def test_rejects_out_of_order(self):
        cfg = PipelineConfig()
        ev = np.zeros(2, dtype=EVENT_DTYPE)
        ev["t"] = [100, 50]
        with pytest.raises(NonMonotonicTimestampError):
            Pipeline(cfg).process(ev)
        pl = Pipeline(cfg)
        pl.process(np.array([(100, 1, 1, 0)], dtype=EVENT_DTYPE))
        with pytest.raises(NonMonotonicTimestampError):
            pl.process(np.array([(50, 1, 1, 0)], dtype=EVENT_DTYPE))

    def test_rejects_out_of_bounds(self):
        cfg = PipelineConfig(geometry=SensorGeometry(32, 32))
        ev = np.array([(100, 32, 1, 0)], dtype=EVENT_DTYPE)
        with pytest.raises(OutOfBoundsError):
            Pipeline(cfg).process(ev)

    def test_invalid_records_are_zero(self):
        # isolated events never validate: zero vector, radius -1
        cfg = PipelineConfig(geometry=SensorGeometry(64, 64))
        ev = np.zeros(3, dtype=EVENT_DTYPE)
        ev["t"] = [0, 10_000_000, 20_000_000]
        ev["x"] = [10, 30, 50]
        ev["y"] = [10, 30, 50]
        out = Pipeline(cfg).process(ev)
        assert (out["valid"] == 0).all()
        assert (out["vx"] == 0.0).all() and (out["vy"] == 0.0).all()
        assert (out["chosen_radius"] == -1).all()


class TestDualRoute:
    def test_kernel_matches_api_replay(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = mini_config(spec.geometry)
        fused = run_pipeline_array(cfg, ev)
        api = replay_with_api(cfg, ev)
        assert np.array_equal(fused["valid"], api["valid"])
        assert np.array_equal(fused["chosen_radius"], api["chosen_radius"])
        assert np.allclose(fused["vx"], api["vx"], rtol=1e-9, atol=1e-9)
        assert np.allclose(fused["vy"], api["vy"], rtol=1e-9, atol=1e-9)

    def test_local_mode_matches_api_replay(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = replace(mini_config(spec.geometry), flow="local")
        fused = run_pipeline_array(cfg, ev)
        api = replay_with_api(cfg, ev)
        assert np.array_equal(fused["valid"], api["valid"])
        assert np.allclose(fused["vx"], api["vx"], rtol=1e-12)
        assert np.allclose(fused["vy"], api["vy"], rtol=1e-12)

    def test_backends_agree_exactly(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = mini_config(spec.geometry)
        a = run_pipeline_array(cfg, ev, backend="numba")
        b = run_pipeline_array(cfg, ev, backend="python")
        assert np.array_equal(a, b)

    def test_merged_polarity_mode(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        cfg = replace(mini_config(spec.geometry), polarity_mode="merged")
        fused = run_pipeline_array(cfg, ev)
        api = replay_with_api(cfg, ev)
        assert np.array_equal(fused["valid"], api["valid"])
        assert np.allclose(fused["vx"], api["vx"], rtol=1e-9, atol=1e-9)


class TestEndToEnd:
    def test_square_scene_corrected_direction(self):
        spec, dur = mini_scene()
        ev = events_view(generate(spec, dur))
        out = run_pipeline_array(mini_config(spec.geometry), ev)
        ok = out["valid"] == 1
        assert ok.mean() > 0.9
        flows = np.column_stack([out["vx"][ok], out["vy"][ok]])
        hist = metrics.direction_stats(flows)
        assert abs(math.degrees(hist.circ_mean) - 90.0) < 5.0
        assert hist.circ_std < 0.2


class TestConfigFiles:
    def test_roundtrip(self, tmp_path):
        cfg = PipelineConfig(
            geometry=SensorGeometry(128, 96),
            local=LocalFlowConfig(filter_radius=3, t_past=9000),
            scales=ScaleSet(radii=(0, 7, 14), t_past=7000, min_pool_count=2),
            polarity_mode="merged",
            flow="local",
            horizons_us=(100_000,),
            cluster_span_us=25_000,
        )
        path = str(tmp_path / "run.cfg")
        save_config(cfg, path)
        back = load_config(path)
        assert config_to_dict(back) == config_to_dict(cfg)

    def test_default_file_equals_builtin(self, tmp_path):
        path = str(tmp_path / "defaults.cfg")
        save_config(PipelineConfig(), path)
        assert config_to_dict(load_config(path)) == config_to_dict(PipelineConfig())

    def test_reference_defaults(self):
        # reference operating point: 5x5 window, 50% inliers, 5 ms
        # cutoffs, pooling radii 0..100 in steps of 10
        cfg = PipelineConfig()
        assert cfg.local.filter_radius == 2
        assert cfg.local.inlier_fraction == 0.5
        assert cfg.local.t_past == 5000
        assert cfg.scales.radii == (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
        assert cfg.scales.t_past == 5000

    def test_bad_key_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("widht = 10\n")
        from evflow.errors import ConfigError

        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_comments_and_blanks(self, tmp_path):
        p = tmp_path / "ok.cfg"
        p.write_text("# comment\n\nwidth = 64  # trailing\nheight = 48\n")
        cfg = load_config(str(p))
        assert cfg.geometry == SensorGeometry(64, 48)
