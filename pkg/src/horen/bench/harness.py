"""Sequential editing loop, checkpoint metrics and parameter sweeps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..adaptor import AdaptorConfig, EditTarget
from ..codebook import Codebook, EditKind, apply_edit
from ..errors import InvalidConfig
from ..hopfield import HopfieldParams
from .routers import make_router
from .stream import EditStream, StreamConfig, generate_stream


def overall(reliability: float, generalization: float, locality: float) -> float:
    """Geometric mean of the three editing metrics."""
    return (reliability * generalization * locality) ** (1.0 / 3.0)


@dataclass
class CheckpointMetrics:
    n_edits: int
    reliability: float
    generalization: float
    locality: float
    op: float
    codebook_size: int
    mean_unrelated_displacement: float


@dataclass
class MetricsReport:
    router: str
    reliability: float
    generalization: float
    locality: float
    op: float
    per_checkpoint: list[CheckpointMetrics]
    counts: dict[str, int]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate_checkpoint(
    book: Codebook,
    stream: EditStream,
    n: int,
    router,
    params: HopfieldParams,
    adaptor_cfg: AdaptorConfig,
) -> CheckpointMetrics:
    """Score the first ``n`` samples of ``stream`` against the current codebook.

    Reliability / generalization count a query as served when it matches an
    entry carrying the sample's label whose payload is within the loss
    threshold of the sample's target. Locality counts unmatched queries.
    """
    labels = np.empty(len(book), dtype=object)
    labels[:] = book.labels
    want = np.empty(n, dtype=object)
    want[:] = stream.labels[:n]
    payloads = book.payload_matrix()
    targets = stream.targets[:n]

    def served(queries: np.ndarray) -> float:
        r = router.route_batch(book, queries, params)
        ok = r.matched.copy()
        rows = np.flatnonzero(ok)
        idx = r.best_index[rows]
        ok[rows] = labels[idx] == want[rows]
        rows = np.flatnonzero(ok)
        diff = payloads[r.best_index[rows]] - targets[rows]
        ok[rows] = 0.5 * np.einsum("ij,ij->i", diff, diff) <= adaptor_cfg.loss_threshold
        return float(ok.mean())

    rel = served(stream.edit_queries[:n])
    gen = served(stream.paraphrase_queries[:n])
    loc_route = router.route_batch(book, stream.locality_queries[:n], params)
    loc = float(np.mean(~loc_route.matched))
    return CheckpointMetrics(
        n_edits=n,
        reliability=rel,
        generalization=gen,
        locality=loc,
        op=overall(rel, gen, loc),
        codebook_size=len(book),
        mean_unrelated_displacement=float(loc_route.displacement.mean()),
    )


def _checkpoints(n: int, checkpoints: Optional[Iterable[int]]) -> list[int]:
    cps = sorted(set(checkpoints)) if checkpoints else [n]
    if cps[0] < 1 or cps[-1] > n:
        raise InvalidConfig(f"checkpoints must lie in [1, {n}], got {cps}")
    return cps


def run_lifelong(
    stream: EditStream,
    router_kind: str = "horen",
    params: HopfieldParams = HopfieldParams(),
    adaptor_cfg: AdaptorConfig = AdaptorConfig(),
    checkpoints: Optional[Sequence[int]] = None,
    *,
    router=None,
    on_checkpoint=None,
) -> MetricsReport:
    """Apply every edit in order and evaluate at each checkpoint.

    ``on_checkpoint(book, metrics)`` is called after each evaluation; the
    scaling driver uses it for timing and memory probes.
    """
    router = router or make_router(router_kind)
    cps = _checkpoints(len(stream), checkpoints)
    book = Codebook(stream.config.dim, unit_keys=router.unit_keys)
    counts = {k.value: 0 for k in EditKind}
    results: list[CheckpointMetrics] = []
    pending = iter(cps)
    next_cp = next(pending)
    for t in range(len(stream)):
        target = EditTarget(stream.labels[t], stream.targets[t])
        outcome = apply_edit(book, stream.edit_queries[t], target, params, adaptor_cfg, router=router)
        counts[outcome.kind.value] += 1
        if t + 1 == next_cp:
            m = evaluate_checkpoint(book, stream, t + 1, router, params, adaptor_cfg)
            results.append(m)
            if on_checkpoint is not None:
                on_checkpoint(book, m)
            next_cp = next(pending, None)
            if next_cp is None:
                break
    last = results[-1]
    return MetricsReport(
        router=router.name,
        reliability=last.reliability,
        generalization=last.generalization,
        locality=last.locality,
        op=last.op,
        per_checkpoint=results,
        counts=counts,
    )


SWEEP_AXES = {
    "M": "max_steps",
    "steps": "max_steps",
    "gamma": "gamma",
    "beta": "beta",
    "threshold": "c",
    "c": "c",
    "paraphrase_angle": "paraphrase_angle",
    "theta_p": "paraphrase_angle",
}


@dataclass
class SweepRow:
    value: float
    reliability: float
    generalization: float
    locality: float
    op: float
    mean_unrelated_displacement: float
    counts: dict[str, int] = field(default_factory=dict)


@dataclass
class SweepReport:
    axis: str
    router: str
    rows: list[SweepRow]

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def sweep(
    base_config: StreamConfig,
    axis: str,
    values: Sequence[float],
    router_kind: str = "horen",
    params: HopfieldParams = HopfieldParams(),
    adaptor_cfg: AdaptorConfig = AdaptorConfig(),
) -> SweepReport:
    """Run ``run_lifelong`` once per value of one hyperparameter on a shared stream."""
    if axis not in SWEEP_AXES:
        raise InvalidConfig(f"unknown sweep axis {axis!r}; valid axes: {', '.join(SWEEP_AXES)}")
    if not values:
        raise InvalidConfig("sweep needs at least one value")
    attr = SWEEP_AXES[axis]
    shared = None if attr == "paraphrase_angle" else generate_stream(base_config)
    rows = []
    for v in values:
        if shared is None:
            stream = generate_stream(dataclasses.replace(base_config, paraphrase_angle=float(v)))
            p = params
        else:
            stream = shared
            p = dataclasses.replace(params, **{attr: int(v) if attr == "max_steps" else float(v)})
        rep = run_lifelong(stream, router_kind, p, adaptor_cfg)
        last = rep.per_checkpoint[-1]
        rows.append(
            SweepRow(v, rep.reliability, rep.generalization, rep.locality, rep.op,
                     last.mean_unrelated_displacement, rep.counts)
        )
    return SweepReport(axis, router_kind, rows)
