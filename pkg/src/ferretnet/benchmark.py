"""Inference throughput measurement."""
from __future__ import annotations

import os
import platform
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .lpd import NeighborhoodSpec, lpd_map
from .nn import Tensor, no_grad

DEFAULT_WARMUP = 10


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else FERRET_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("FERRET_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return int(threads)


def benchmark_throughput(model, input_shape=(3, 256, 256), batch_size: int = 128, duration_seconds: float = 10.0,
                         spec: NeighborhoodSpec | None = NeighborhoodSpec(), warmup: int = DEFAULT_WARMUP,
                         threads: int | None = None, seed: int = 0) -> dict:
    """Steady-state images/second of LPD extraction plus an eval-mode forward pass.

    Random images are drawn once; every timed batch recomputes the LPD maps
    (unless `spec` is None) and runs the model. `warmup` batches run first
    and are not timed. Timing stops at the first batch that ends after
    `duration_seconds`.
    """
    if batch_size < 1 or duration_seconds <= 0 or warmup < 0:
        raise ValueError("batch_size and duration_seconds must be positive, warmup non-negative")
    threads = resolve_threads(threads)
    rng = np.random.default_rng(seed)
    images = rng.random((batch_size, *input_shape), dtype=np.float32)
    model.eval()

    def run_batch():
        x = images if spec is None else lpd_map(images, spec).astype(np.float32, copy=False)
        model(Tensor(x))

    latencies = []
    with threadpool_limits(limits=threads), no_grad():
        for _ in range(warmup):
            run_batch()
        start = time.perf_counter()
        while True:
            t0 = time.perf_counter()
            run_batch()
            t1 = time.perf_counter()
            latencies.append(t1 - t0)
            if t1 - start >= duration_seconds:
                break
        elapsed = time.perf_counter() - start
    lat_ms = np.array(latencies) * 1e3
    n_images = len(latencies) * batch_size
    return {
        "fps": n_images / elapsed,
        "images": n_images,
        "batches": len(latencies),
        "seconds": elapsed,
        "batch_size": batch_size,
        "input_shape": list(input_shape),
        "latency_ms": {"p50": float(np.percentile(lat_ms, 50)), "p95": float(np.percentile(lat_ms, 95))},
        "warmup_batches": warmup,
        "lpd": None if spec is None else spec.to_dict(),
        "threads": threads,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "machine": platform.machine(), "cpu_count": os.cpu_count()},
    }


def format_table(rows: dict) -> str:
    """Aligned two-column text rendering of a flat or one-level nested dict."""
    flat = []
    for k, v in rows.items():
        if isinstance(v, dict):
            flat.extend((f"{k}.{kk}", vv) for kk, vv in v.items())
        else:
            flat.append((k, v))
    width = max(len(k) for k, _ in flat) if flat else 0
    fmt = lambda v: f"{v:.4f}" if isinstance(v, float) else str(v)  # noqa: E731
    return "\n".join(f"{k.ljust(width)}  {fmt(v)}" for k, v in flat)
