"""Synthetic lifelong-editing streams.

Each edit t has a unit edit direction k_t, a paraphrase direction at angle
``U[0, paraphrase_angle]`` from k_t along a random tangent, a locality
direction (uniform on the sphere, or at ``locality_angle`` from a random
earlier edit in hard mode), a label and a unit target vector. Raw queries are
the directions scaled by independent factors in ``[1, 1 + magnitude_jitter]``.

All random draws happen in a fixed order regardless of options, so two
configs differing only in jitter share the same directions.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..adaptor import EditTarget, Label
from ..errors import InvalidConfig


@dataclass(frozen=True)
class StreamConfig:
    n_edits: int = 1000
    dim: int = 64
    paraphrase_angle: float = 0.15
    hard_locality: bool = False
    locality_angle: Optional[float] = None  # defaults to 2 * paraphrase_angle
    seed: int = 0
    magnitude_jitter: float = 0.0
    reassert_fraction: float = 0.0
    conflict_fraction: float = 0.0

    def __post_init__(self):
        if self.n_edits < 1:
            raise InvalidConfig("n_edits must be >= 1")
        if self.dim < 2:
            raise InvalidConfig("dim must be >= 2")
        if not 0 <= self.paraphrase_angle < math.pi / 2:
            raise InvalidConfig(f"paraphrase_angle must lie in [0, pi/2), got {self.paraphrase_angle}")
        if self.magnitude_jitter < 0:
            raise InvalidConfig("magnitude_jitter must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        fr = (self.reassert_fraction, self.conflict_fraction)
        if min(fr) < 0 or sum(fr) > 1:
            raise InvalidConfig("replay fractions must be >= 0 and sum to at most 1")
        if self.locality_angle is not None and not 0 <= self.locality_angle <= math.pi:
            raise InvalidConfig("locality_angle must lie in [0, pi]")

    @property
    def resolved_locality_angle(self) -> float:
        if self.locality_angle is not None:
            return self.locality_angle
        return 2.0 * self.paraphrase_angle


@dataclass(frozen=True)
class EditSample:
    index: int
    edit_query: np.ndarray
    paraphrase_query: np.ndarray
    locality_query: np.ndarray
    label: Label
    target: EditTarget


@dataclass
class EditStream:
    """Column-oriented edit stream; indexing yields ``EditSample`` rows."""

    config: StreamConfig
    edit_queries: np.ndarray
    paraphrase_queries: np.ndarray
    locality_queries: np.ndarray
    labels: list
    targets: np.ndarray
    paraphrase_angles: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, t: int) -> EditSample:
        return EditSample(
            t,
            self.edit_queries[t],
            self.paraphrase_queries[t],
            self.locality_queries[t],
            self.labels[t],
            EditTarget(self.labels[t], self.targets[t]),
        )

    def __iter__(self):
        return (self[t] for t in range(len(self)))

    def to_bytes(self) -> bytes:
        """Canonical serialization: JSON config header + little-endian arrays."""
        head = json.dumps(dataclasses.asdict(self.config), sort_keys=True).encode()
        parts = [len(head).to_bytes(4, "little"), head, json.dumps(self.labels).encode()]
        for a in (self.edit_queries, self.paraphrase_queries, self.locality_queries, self.targets):
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return b"".join(parts)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _tangent(rng_draw: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Unit vectors orthogonal to each row of ``base``."""
    u = rng_draw - np.sum(rng_draw * base, axis=1, keepdims=True) * base
    return _unit_rows(u)


def generate_stream(cfg: StreamConfig) -> EditStream:
    n, d = cfg.n_edits, cfg.dim
    rng = np.random.default_rng(cfg.seed)
    keys = _unit_rows(rng.standard_normal((n, d)))
    targets = _unit_rows(rng.standard_normal((n, d)))
    para_angle = rng.uniform(0.0, cfg.paraphrase_angle, n)
    para_tangent = rng.standard_normal((n, d))
    loc_uniform = _unit_rows(rng.standard_normal((n, d)))
    loc_tangent = rng.standard_normal((n, d))
    loc_anchor_u = rng.random(n)
    scales = 1.0 + cfg.magnitude_jitter * rng.random((3, n))
    replay_u = rng.random(n)
    replay_src_u = rng.random(n)

    labels: list = list(range(n))
    next_label = n
    replay_src = np.minimum((replay_src_u * np.arange(n)).astype(np.int64), np.maximum(np.arange(n) - 1, 0))
    for t in range(1, n):
        u = replay_u[t]
        if u < cfg.reassert_fraction + cfg.conflict_fraction:
            j = int(replay_src[t])
            keys[t] = keys[j]
            if u < cfg.reassert_fraction:
                labels[t] = labels[j]
                targets[t] = targets[j]
            else:
                labels[t] = next_label
                next_label += 1

    para_dir = np.cos(para_angle)[:, None] * keys + np.sin(para_angle)[:, None] * _tangent(para_tangent, keys)
    if cfg.hard_locality:
        anchors = keys[np.minimum((loc_anchor_u * (np.arange(n) + 1)).astype(np.int64), np.arange(n))]
        theta = cfg.resolved_locality_angle
        loc_dir = np.cos(theta) * anchors + np.sin(theta) * _tangent(loc_tangent, anchors)
    else:
        loc_dir = loc_uniform

    return EditStream(
        config=cfg,
        edit_queries=keys * scales[0][:, None],
        paraphrase_queries=para_dir * scales[1][:, None],
        locality_queries=loc_dir * scales[2][:, None],
        labels=labels,
        targets=targets,
        paraphrase_angles=para_angle,
    )
