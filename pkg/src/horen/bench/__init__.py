"""Synthetic lifelong-editing benchmark."""

from .harness import (
    SWEEP_AXES,
    CheckpointMetrics,
    MetricsReport,
    SweepReport,
    SweepRow,
    evaluate_checkpoint,
    overall,
    run_lifelong,
    sweep,
)
from .routers import ROUTER_KINDS, BatchRouting, make_router
from .scaling import ScalingReport, linear_fit, match_latency, scaling_stress
from .stream import EditSample, EditStream, StreamConfig, generate_stream

__all__ = [
    "BatchRouting",
    "CheckpointMetrics",
    "EditSample",
    "EditStream",
    "MetricsReport",
    "ROUTER_KINDS",
    "SWEEP_AXES",
    "ScalingReport",
    "StreamConfig",
    "SweepReport",
    "SweepRow",
    "evaluate_checkpoint",
    "generate_stream",
    "linear_fit",
    "make_router",
    "match_latency",
    "overall",
    "run_lifelong",
    "scaling_stress",
    "sweep",
]
