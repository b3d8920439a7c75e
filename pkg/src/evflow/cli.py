"""Command-line interface.

Subcommands: synth, flow, predict, eval-aee, eval-affine, hist, render,
bench. Algorithm flags mirror the pipeline config; ``--config`` loads a
key-value file whose defaults equal the built-in defaults. Exit codes:
0 success, 1 input error, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import bench as evbench
from . import io as evio
from . import metrics, predict, synth
from .core import SensorGeometry
from .errors import ConfigError, EvflowError
from .pipeline import (
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    run_pipeline,
)

_CHUNK = 1 << 16


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", help="key=value config file")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--polarity-mode", choices=("split", "merged"))
    g.add_argument("--flow", choices=("corrected", "local"),
                   help="emit multi-scale corrected flow (default) or raw local flow")
    g.add_argument("--filter-radius", type=int)
    g.add_argument("--inlier-fraction", type=float)
    g.add_argument("--min-fit-events", type=int)
    g.add_argument("--refit-passes", type=int)
    g.add_argument("--local-t-past", type=int, help="local-flow temporal cutoff (µs)")
    g.add_argument("--inlier-threshold-scale", type=float)
    g.add_argument("--pool-radii", help="comma-separated pooling radii (px)")
    g.add_argument("--pool-t-past", type=int, help="pooling temporal cutoff (µs)")
    g.add_argument("--min-pool-count", type=int)
    g.add_argument("--horizons", help="comma-separated prediction horizons (µs)")
    g.add_argument("--cluster-span", type=int, help="cluster window span (µs)")


def _build_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    d = config_to_dict(cfg)
    overrides = {
        "width": args.width,
        "height": args.height,
        "polarity_mode": args.polarity_mode,
        "flow": args.flow,
        "filter_radius": args.filter_radius,
        "inlier_fraction": args.inlier_fraction,
        "min_fit_events": args.min_fit_events,
        "refit_passes": args.refit_passes,
        "local_t_past_us": args.local_t_past,
        "inlier_threshold_scale": args.inlier_threshold_scale,
        "pool_radii": args.pool_radii,
        "pool_t_past_us": args.pool_t_past,
        "min_pool_count": args.min_pool_count,
        "horizons_us": args.horizons,
        "cluster_span_us": args.cluster_span,
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return config_from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _explicit_geometry(args) -> SensorGeometry | None:
    if args.width is not None or args.height is not None:
        if args.width is None or args.height is None:
            raise ConfigError("--width and --height must be given together")
        return SensorGeometry(args.width, args.height)
    return None


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    geometry = _explicit_geometry(args)
    if args.scene == "rotated-bar":
        spec = synth.rotated_bar_suite([args.angle], args.speed, geometry=geometry)[0]
        duration = int(200.0 / args.speed * 1e6)
    elif args.scene == "bar-square":
        spec, duration = synth.bar_square_scene(args.speed, geometry)
    elif args.scene == "crossing-squares":
        spec, duration = synth.crossing_squares_scene(args.speed, geometry)
    elif args.scene == "occlusion":
        spec, duration = synth.occlusion_scene(args.speed, geometry)
    else:
        spec, duration = synth.bench_scene(args.speed, geometry, waves=args.waves)
    if args.duration is not None:
        duration = args.duration
    if args.noise_rate is not None:
        spec = replace(spec, noise_rate=args.noise_rate)
    if args.event_rate is not None:
        spec = replace(spec, event_rate=args.event_rate)
    labeled = synth.generate(spec, duration, seed=args.seed)
    n = evio.write_events(args.output, synth.events_view(labeled), spec.geometry)
    if args.truth:
        evio.write_truth_csv(args.truth, labeled)
    print(f"wrote {n} events to {args.output}"
          + (f" (truth: {args.truth})" if args.truth else ""))
    return 0


# ---------------------------------------------------------------------------
# flow / predict
# ---------------------------------------------------------------------------

def _open_stream(args, cfg: PipelineConfig):
    explicit = _explicit_geometry(args)
    stream = evio.read_events(args.input, geometry=explicit or None)
    if stream.geometry is not None:
        cfg = replace(cfg, geometry=stream.geometry)
    return stream, cfg


def _cmd_flow(args) -> int:
    cfg = _build_config(args)
    stream, cfg = _open_stream(args, cfg)
    n = evio.write_flow_records(args.output, run_pipeline(cfg, stream))
    print(f"wrote {n} flow records to {args.output}")
    return 0


def _cmd_predict(args) -> int:
    cfg = _build_config(args)
    stream, cfg = _open_stream(args, cfg)
    records = run_pipeline(cfg, stream)

    def prediction_chunks():
        for window in predict.stream_cluster_windows(records, cfg.cluster_span_us):
            if args.normalize_speeds:
                window = predict.normalize_cluster_speeds(window)
            for horizon in cfg.horizons_us:
                yield predict.predict_window(window, horizon)

    n = evio.write_predicted_csv(args.output, prediction_chunks())
    print(f"wrote {n} predicted events to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _cmd_eval_aee(args) -> int:
    records = evio.read_flow_records(args.flow_records)
    truth = evio.read_truth_csv(args.truth)
    if len(records) != len(truth):
        raise EvflowError(
            f"record count {len(records)} != truth count {len(truth)}"
        )
    if not np.array_equal(records["t"], truth["t"]):
        raise EvflowError("flow records and truth rows are not aligned")
    ok = records["valid"] == 1
    if not ok.any():
        raise EvflowError("no valid flow records")
    est = np.column_stack((records["vx"][ok], records["vy"][ok]))
    tru = np.column_stack((truth["vx"][ok], truth["vy"][ok]))
    value = metrics.aee(est, tru)
    print(f"aee {value!r} over {int(ok.sum())} events")
    return 0


def _cmd_eval_affine(args) -> int:
    pred = evio.read_predicted_csv(args.predicted)
    horizons = np.unique(pred["horizon"])
    if args.horizon is not None:
        pred = pred[pred["horizon"] == args.horizon]
    elif len(horizons) > 1:
        raise ConfigError(
            f"file holds horizons {list(horizons)}; pick one with --horizon"
        )
    if len(pred) == 0:
        raise EvflowError("no predicted events selected")
    actual = evio.read_events_array(args.events)
    span = args.span
    t0 = (int(pred["t"].min()) // span) * span
    t1 = int(pred["t"].max())
    rows = []
    w = t0
    while w <= t1:
        pm = (pred["t"] >= w) & (pred["t"] < w + span)
        am = (actual["t"] >= w) & (actual["t"] < w + span)
        if int(pm.sum()) >= 2 and int(am.sum()) >= 2:
            p_pts = np.column_stack((pred["px"][pm], pred["py"][pm]))
            a_pts = np.column_stack((actual["x"][am], actual["y"][am]))
            try:
                fit = metrics.affine_fit(p_pts, a_pts)
                rows.append((w, fit.scale, fit.translation[0], fit.translation[1],
                             fit.residual))
            except EvflowError:
                pass
        w += span
    if not rows:
        raise EvflowError("no window had enough predicted and actual events")
    if args.output:
        with open(args.output, "w", encoding="ascii") as f:
            f.write("t_start,scale,dx,dy,residual\n")
            for r in rows:
                f.write(f"{r[0]},{r[1]!r},{r[2]!r},{r[3]!r},{r[4]!r}\n")
    scales = np.array([r[1] for r in rows])
    trans = np.array([[r[2], r[3]] for r in rows])
    resid = np.array([r[4] for r in rows])
    print(f"windows {len(rows)}")
    print(f"mean |scale-1| {np.abs(scales - 1.0).mean()!r}")
    print(f"mean translation {np.linalg.norm(trans, axis=1).mean()!r} px")
    print(f"mean residual {resid.mean()!r} px")
    return 0


def _cmd_hist(args) -> int:
    records = evio.read_flow_records(args.flow_records)
    ok = records["valid"] == 1
    flows = np.column_stack((records["vx"][ok], records["vy"][ok]))
    hist = metrics.direction_stats(flows, bins=args.bins)
    if args.output:
        hist.write_csv(args.output)
    print(f"valid flows {int(ok.sum())}")
    print(f"circular mean {hist.circ_mean!r} rad")
    print(f"circular std {hist.circ_std!r} rad")
    return 0


def _cmd_render(args) -> int:
    cfg = _build_config(args)
    records = evio.read_flow_records(args.flow_records)
    if len(records):
        if int(records["x"].max()) >= cfg.geometry.width or \
           int(records["y"].max()) >= cfg.geometry.height:
            raise ConfigError("records exceed the configured geometry; set --width/--height")
    t0 = args.t_start if args.t_start is not None else (int(records["t"].min()) if len(records) else 0)
    t1 = args.t_end if args.t_end is not None else (int(records["t"].max()) + 1 if len(records) else 1)
    evio.render_flow_image(records, t0, t1, cfg.geometry, args.output, args.speed_clip)
    print(f"wrote {args.output}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _build_config(args)
    explicit = _explicit_geometry(args)
    stream = evio.read_events(args.input, geometry=explicit or None)
    if stream.geometry is not None:
        cfg = replace(cfg, geometry=stream.geometry)
    import time

    t0 = time.perf_counter()
    events = stream.read_all()
    io_s = time.perf_counter() - t0
    if args.compare:
        for name, report in evbench.compare_backends(cfg, events).items():
            print(f"--- {name} ---")
            print(report.summary())
    else:
        report = evbench.bench_events(cfg, events, io_s=io_s)
        print(report.summary())
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evflow",
                                 description="event-camera optical flow toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--scene", required=True,
                   choices=("rotated-bar", "bar-square", "crossing-squares",
                            "occlusion", "bench"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--truth", help="also write a ground-truth sidecar CSV")
    p.add_argument("--speed", type=float, default=1000.0, help="object speed (px/s)")
    p.add_argument("--angle", type=float, default=0.0,
                   help="bar tilt from the motion normal (degrees)")
    p.add_argument("--duration", type=int, help="override scene duration (µs)")
    p.add_argument("--noise-rate", type=float, help="background events/px/s")
    p.add_argument("--event-rate", type=float, help="crossing thinning in (0, 1]")
    p.add_argument("--waves", type=int, default=1, help="bench scene repetitions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("flow", help="run the flow pipeline over an event file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("predict", help="predict future event locations")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--normalize-speeds", action="store_true",
                   help="replace member speeds by the cluster mean speed")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval-aee", help="average endpoint error vs a truth sidecar")
    p.add_argument("flow_records")
    p.add_argument("truth")
    p.set_defaults(func=_cmd_eval_aee)

    p = sub.add_parser("eval-affine",
                       help="per-window scale/translation fit of predictions")
    p.add_argument("predicted")
    p.add_argument("events")
    p.add_argument("-o", "--output", help="per-window report CSV")
    p.add_argument("--span", type=int, default=50_000)
    p.add_argument("--horizon", type=int, help="select one horizon (µs)")
    p.set_defaults(func=_cmd_eval_affine)

    p = sub.add_parser("hist", help="direction histogram of flow records")
    p.add_argument("flow_records")
    p.add_argument("-o", "--output", help="histogram CSV")
    p.add_argument("--bins", type=int, default=36)
    p.set_defaults(func=_cmd_hist)

    p = sub.add_parser("render", help="render flow records to a PPM image")
    p.add_argument("flow_records")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--t-start", type=int)
    p.add_argument("--t-end", type=int)
    p.add_argument("--speed-clip", type=float)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("bench", help="pipeline throughput benchmark")
    p.add_argument("input")
    p.add_argument("--compare", action="store_true",
                   help="time every available kernel backend")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EvflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
