"""Long-stream stability run with memory and latency probes."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..adaptor import AdaptorConfig
from ..codebook import Codebook
from ..errors import InvalidConfig, ResourceBudgetExceeded
from ..hopfield import HopfieldParams
from .harness import CheckpointMetrics, run_lifelong
from .routers import HorenRouter
from .stream import StreamConfig, generate_stream

DEFAULT_CHECKPOINTS = (1_000, 10_000, 20_000, 50_000)


def match_latency(keys: np.ndarray, queries: np.ndarray, c: float = 0.85, repeats: int = 7) -> float:
    """Seconds per single-query match (score all keys, argmax, threshold); best of ``repeats``."""
    keys = np.ascontiguousarray(keys)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for q in queries:
            s = keys @ q
            i = int(np.argmax(s))
            _ = s[i] > c
        best = min(best, (time.perf_counter() - t0) / len(queries))
    return float(best)


def linear_fit(x: Sequence[float], y: Sequence[float]):
    """Least-squares ``y ~ a*x + b``; returns ``(a, b, r_squared, max_relative_deviation)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([a, b])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    dev = float(np.max(np.abs(y - pred) / np.abs(pred)))
    return float(a), float(b), r2, dev


@dataclass
class ScalingRow:
    metrics: CheckpointMetrics
    elapsed_s: float
    parameter_count: int
    stored_bytes: int


@dataclass
class ScalingReport:
    dim: int
    rows: list[ScalingRow]
    latency_half_s: float
    latency_full_s: float
    memory_max_deviation: float
    config: dict = field(default_factory=dict)

    @property
    def latency_ratio(self) -> float:
        return self.latency_full_s / self.latency_half_s

    @property
    def memory_linear(self) -> bool:
        return self.memory_max_deviation <= 0.05

    @property
    def latency_linear(self) -> bool:
        return 1.7 <= self.latency_ratio <= 2.3


def scaling_stress(
    d: int = 64,
    max_edits: int = 50_000,
    checkpoints: Sequence[int] = DEFAULT_CHECKPOINTS,
    paraphrase_angle: float = 0.15,
    c: float = 0.85,
    seed: int = 0,
    params: Optional[HopfieldParams] = None,
    adaptor_cfg: AdaptorConfig = AdaptorConfig(),
    time_ceiling_s: float = 1800.0,
    latency_queries: int = 200,
) -> ScalingReport:
    """Edit ``max_edits`` times, recording metrics, memory and wall time per checkpoint.

    Raises:
        ResourceBudgetExceeded: when a checkpoint is reached after ``time_ceiling_s``.
    """
    cps = sorted(checkpoints)
    if cps[-1] > max_edits:
        raise InvalidConfig("max_edits must cover the largest checkpoint")
    params = params or HopfieldParams(c=c)
    stream = generate_stream(StreamConfig(n_edits=max_edits, dim=d, paraphrase_angle=paraphrase_angle, seed=seed))
    rows: list[ScalingRow] = []
    holder: dict[str, Codebook] = {}
    t0 = time.perf_counter()

    def probe(book: Codebook, m: CheckpointMetrics) -> None:
        elapsed = time.perf_counter() - t0
        if elapsed > time_ceiling_s:
            raise ResourceBudgetExceeded(f"{elapsed:.0f}s elapsed at {m.n_edits} edits (ceiling {time_ceiling_s:.0f}s)")
        stored = book.keys.nbytes + book.payload_matrix().nbytes
        rows.append(ScalingRow(m, elapsed, book.parameter_count(), stored))
        holder["book"] = book

    run_lifelong(stream, params=params, adaptor_cfg=adaptor_cfg, checkpoints=cps, router=HorenRouter(), on_checkpoint=probe)

    keys = holder["book"].keys
    rng = np.random.default_rng(seed + 1)
    queries = rng.standard_normal((latency_queries, d))
    half = match_latency(keys[: len(keys) // 2], queries, params.c)
    full = match_latency(keys, queries, params.c)
    _, _, _, dev = linear_fit([r.metrics.codebook_size for r in rows], [r.stored_bytes for r in rows])
    cfg = {"dim": d, "max_edits": max_edits, "checkpoints": cps, "paraphrase_angle": paraphrase_angle,
           "seed": seed, "beta": params.beta, "gamma": params.gamma, "max_steps": params.max_steps,
           "epsilon": params.epsilon, "c": params.c}
    return ScalingReport(d, rows, half, full, dev, cfg)
