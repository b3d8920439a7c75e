"""Throughput benchmark for the full pipeline.

Reports the single-threaded event rate with a per-stage breakdown:
decode time (io), a local-flow-only pass (local), and the extra cost of
the multi-scale correction (pooling = full - local). The compiled and
plain-Python kernel backends can be timed side by side; the Python path
is orders of magnitude slower, so it runs on a capped prefix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import io as evio
from ._accel import backend_name
from ._kernels import KERNEL_BACKENDS
from .pipeline import Pipeline, PipelineConfig, warmup

_CHUNK = 1 << 16


@dataclass
class BenchReport:
    n_events: int
    wall_s: float  # full-pipeline compute time
    throughput: float  # events / second, full pipeline
    stage_s: dict  # io / local / pooling
    backend: str

    def summary(self) -> str:
        lines = [
            f"backend      {self.backend}",
            f"events       {self.n_events}",
            f"wall         {self.wall_s:.3f} s",
            f"throughput   {self.throughput:,.0f} events/s",
        ]
        for stage, secs in self.stage_s.items():
            lines.append(f"  {stage:<10} {secs:.3f} s")
        return "\n".join(lines)


def _timed_pass(cfg: PipelineConfig, events: np.ndarray, backend: str) -> float:
    pl = Pipeline(cfg, backend)
    t0 = time.perf_counter()
    for i in range(0, len(events), _CHUNK):
        pl.process(events[i : i + _CHUNK])
    return time.perf_counter() - t0


def bench_events(cfg: PipelineConfig, events: np.ndarray,
                 backend: str | None = None, io_s: float = 0.0) -> BenchReport:
    """Benchmark a preloaded event array (compile cost excluded)."""
    backend = backend or backend_name()
    warmup(backend)
    t_local = _timed_pass(replace(cfg, flow="local"), events, backend)
    t_full = _timed_pass(replace(cfg, flow="corrected"), events, backend)
    return BenchReport(
        n_events=len(events),
        wall_s=t_full,
        throughput=len(events) / t_full if t_full > 0 else 0.0,
        stage_s={"io": io_s, "local": t_local, "pooling": max(0.0, t_full - t_local)},
        backend=backend,
    )


def bench_file(cfg: PipelineConfig, path: str, fmt: str | None = None,
               backend: str | None = None) -> BenchReport:
    t0 = time.perf_counter()
    events = evio.read_events(path, fmt, cfg.geometry).read_all()
    io_s = time.perf_counter() - t0
    return bench_events(cfg, events, backend, io_s=io_s)


def compare_backends(cfg: PipelineConfig, events: np.ndarray,
                     python_cap: int = 20_000) -> dict[str, BenchReport]:
    """Run every available kernel backend over the same stream. The
    plain-Python backend is limited to ``python_cap`` events; its report
    carries the reduced count."""
    out = {}
    for backend in sorted(KERNEL_BACKENDS):
        ev = events[:python_cap] if backend == "python" else events
        out[backend] = bench_events(cfg, ev, backend)
    return out
