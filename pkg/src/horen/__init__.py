"""Normalized key-value codebook with damped Hopfield query refinement."""

from .adaptor import AdaptorConfig, EditTarget, Payload, evaluate_payload, train_payload
from .codebook import (
    Codebook,
    CodebookEntry,
    EditKind,
    EditOutcome,
    RoutingDecision,
    apply_edit,
    load,
    match,
    route,
    save,
)
from .errors import (
    DimensionMismatch,
    EmptyCodebook,
    FormatError,
    HorenError,
    InvalidConfig,
    NonFiniteLoss,
    ResourceBudgetExceeded,
    ZeroNorm,
)
from .geometry import dot, lse, normalize, softmax
from .hopfield import (
    HopfieldParams,
    IterationTrace,
    damped_refine,
    energy,
    iterate_standard,
    refine_batch,
    standard_update,
)
from .theory import check_descent, check_residual_bound, demonstrate_over_attraction

__version__ = "0.1.0"

__all__ = [
    "AdaptorConfig",
    "Codebook",
    "CodebookEntry",
    "DimensionMismatch",
    "EditKind",
    "EditOutcome",
    "EditTarget",
    "EmptyCodebook",
    "FormatError",
    "HopfieldParams",
    "HorenError",
    "InvalidConfig",
    "IterationTrace",
    "NonFiniteLoss",
    "Payload",
    "ResourceBudgetExceeded",
    "RoutingDecision",
    "ZeroNorm",
    "apply_edit",
    "check_descent",
    "check_residual_bound",
    "damped_refine",
    "demonstrate_over_attraction",
    "dot",
    "energy",
    "evaluate_payload",
    "iterate_standard",
    "load",
    "lse",
    "match",
    "normalize",
    "refine_batch",
    "route",
    "save",
    "softmax",
    "standard_update",
    "train_payload",
]
