"""Routing rules compared by the benchmark.

``horen``                 normalize, one damped Hopfield step, cosine threshold
``cosine-only``           normalize, no refinement, cosine threshold
``euclidean``             raw activations, nearest key within a deferral radius
``hopfield-unnormalized`` Hopfield refinement and threshold on raw activations

Every router exposes the same three methods: ``key_for`` (what gets stored on
insertion), ``route`` (single query, used while editing) and ``route_batch``
(vectorized, used for evaluation).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..codebook import Codebook, RoutingDecision, match, route
from ..errors import InvalidConfig
from ..geometry import as_matrix, as_vector, normalize, normalize_rows, softmax
from ..hopfield import HopfieldParams, refine_batch

EVAL_CHUNK = 256


@dataclass
class BatchRouting:
    best_index: np.ndarray  # -1 where the codebook is empty
    best_score: np.ndarray
    matched: np.ndarray
    displacement: np.ndarray  # ||q - q0|| in the router's own query space


def _empty_batch(n: int) -> BatchRouting:
    return BatchRouting(
        np.full(n, -1, dtype=np.int64), np.full(n, -np.inf), np.zeros(n, dtype=bool), np.zeros(n)
    )


def _argmax_rows(Q: np.ndarray, K: np.ndarray):
    idx = np.empty(len(Q), dtype=np.int64)
    best = np.empty(len(Q))
    for lo in range(0, len(Q), EVAL_CHUNK):
        s = Q[lo : lo + EVAL_CHUNK] @ K.T
        i = np.argmax(s, axis=1)
        idx[lo : lo + EVAL_CHUNK] = i
        best[lo : lo + EVAL_CHUNK] = s[np.arange(len(s)), i]
    return idx, best


class HorenRouter:
    name = "horen"
    unit_keys = True

    def key_for(self, raw) -> np.ndarray:
        return normalize(raw)

    def effective(self, params: HopfieldParams) -> HopfieldParams:
        return params

    def route(self, book: Codebook, raw, params: HopfieldParams) -> RoutingDecision:
        return route(book, raw, self.effective(params))

    def route_batch(self, book: Codebook, raw_Q, params: HopfieldParams) -> BatchRouting:
        params = self.effective(params)
        Q0 = normalize_rows(raw_Q)
        if len(book) == 0:
            return _empty_batch(len(Q0))
        Q, _ = refine_batch(Q0, book.keys, params, chunk=EVAL_CHUNK)
        idx, best = _argmax_rows(Q, book.keys)
        return BatchRouting(idx, best, best > params.c, np.linalg.norm(Q - Q0, axis=1))


class CosineRouter(HorenRouter):
    """Normalized matching without refinement (``max_steps`` forced to 0)."""

    name = "cosine-only"

    def effective(self, params: HopfieldParams) -> HopfieldParams:
        return dataclasses.replace(params, max_steps=0)


class EuclideanRouter:
    """Nearest raw key by Euclidean distance, accepted within ``radius``.

    The default radius is the chord ``sqrt(2 - 2c)``, which is exactly the
    cosine threshold ``c`` when every activation has unit norm; any gap to
    the cosine router is then due to magnitude alone.
    """

    name = "euclidean"
    unit_keys = False

    def __init__(self, radius: Optional[float] = None):
        if radius is not None and not radius > 0:
            raise InvalidConfig(f"radius must be > 0, got {radius}")
        self.radius = radius

    def radius_for(self, params: HopfieldParams) -> float:
        if self.radius is not None:
            return self.radius
        return float(np.sqrt(max(2.0 - 2.0 * params.c, 0.0)))

    def key_for(self, raw) -> np.ndarray:
        return as_vector(raw).copy()

    def route(self, book: Codebook, raw, params: HopfieldParams) -> RoutingDecision:
        q = as_vector(raw)
        if len(book) == 0:
            return RoutingDecision(q, np.empty(0), None, float("-inf"), False)
        dist = np.linalg.norm(book.keys - q, axis=1)
        i = int(np.argmin(dist))
        return RoutingDecision(q, -dist, i, -float(dist[i]), bool(dist[i] <= self.radius_for(params)))

    def route_batch(self, book: Codebook, raw_Q, params: HopfieldParams) -> BatchRouting:
        Q = as_matrix(raw_Q)
        if len(book) == 0:
            return _empty_batch(len(Q))
        K = book.keys
        k2 = np.einsum("ij,ij->i", K, K)
        idx = np.empty(len(Q), dtype=np.int64)
        dist = np.empty(len(Q))
        for lo in range(0, len(Q), EVAL_CHUNK):
            q = Q[lo : lo + EVAL_CHUNK]
            d2 = k2[None, :] - 2.0 * (q @ K.T)
            i = np.argmin(d2, axis=1)
            idx[lo : lo + EVAL_CHUNK] = i
            dist[lo : lo + EVAL_CHUNK] = np.linalg.norm(q - K[i], axis=1)
        return BatchRouting(idx, -dist, dist <= self.radius_for(params), np.zeros(len(Q)))


def _raw_refine(Q: np.ndarray, K: np.ndarray, params: HopfieldParams) -> np.ndarray:
    """Damped Hopfield steps with every normalization removed."""
    Q = Q.copy()
    for lo in range(0, len(Q), EVAL_CHUNK):
        q = Q[lo : lo + EVAL_CHUNK]
        active = np.ones(len(q), dtype=bool)
        for _ in range(params.max_steps):
            if not active.any():
                break
            qa = q[active]
            proposal = softmax(qa @ K.T, params.beta) @ K
            moving = np.linalg.norm(proposal - qa, axis=1) > params.epsilon
            rows = np.flatnonzero(active)
            active[rows[~moving]] = False
            q[rows[moving]] = (1.0 - params.gamma) * qa[moving] + params.gamma * proposal[moving]
        Q[lo : lo + EVAL_CHUNK] = q
    return Q


class UnnormalizedHopfieldRouter:
    """Same dynamics and threshold as ``horen`` but on raw activations."""

    name = "hopfield-unnormalized"
    unit_keys = False

    def key_for(self, raw) -> np.ndarray:
        return as_vector(raw).copy()

    def route(self, book: Codebook, raw, params: HopfieldParams) -> RoutingDecision:
        q0 = as_vector(raw)
        if len(book) == 0:
            return RoutingDecision(q0, np.empty(0), None, float("-inf"), False)
        q = _raw_refine(q0[None, :], book.keys, params)[0]
        return match(book, q, params.c)

    def route_batch(self, book: Codebook, raw_Q, params: HopfieldParams) -> BatchRouting:
        Q0 = as_matrix(raw_Q)
        if len(book) == 0:
            return _empty_batch(len(Q0))
        Q = _raw_refine(Q0, book.keys, params)
        idx, best = _argmax_rows(Q, book.keys)
        return BatchRouting(idx, best, best > params.c, np.linalg.norm(Q - Q0, axis=1))


ROUTERS = {
    cls.name: cls for cls in (HorenRouter, CosineRouter, EuclideanRouter, UnnormalizedHopfieldRouter)
}
ROUTER_KINDS = tuple(ROUTERS)


def make_router(kind: str, **kwargs):
    try:
        return ROUTERS[kind](**kwargs)
    except KeyError:
        raise InvalidConfig(f"unknown router {kind!r}; choose from {', '.join(ROUTER_KINDS)}") from None
