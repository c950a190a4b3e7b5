"""Key-value-label codebook with cosine-threshold matching and online updates.

A ``Codebook`` stores entries ``(key, payload, label, created_at)``. Keys are
unit vectors captured from the *pre-refinement* query when the entry is
inserted and never change afterwards. Routing normalizes the raw query,
refines it with damped Hopfield steps over the stored keys and matches the
refined query against the keys by inner product.
"""

from __future__ import annotations

import enum
import logging
import os
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import BinaryIO, Optional, Union

import numpy as np

from .adaptor import AdaptorConfig, EditTarget, Label, Payload, train_payload
from .errors import DimensionMismatch, FormatError, InvalidConfig
from .geometry import UNIT_NORM_TOL, as_vector, normalize
from .hopfield import HopfieldParams, refine_batch

log = logging.getLogger(__name__)


@dataclass
class CodebookEntry:
    key: np.ndarray
    payload: Payload
    label: Label
    created_at: int


@dataclass
class RoutingDecision:
    refined_query: np.ndarray
    scores: np.ndarray
    best_index: Optional[int]
    best_score: float
    matched: bool
    hopfield_steps_taken: int = 0


class Codebook:
    """Ordered, append-only store of edits.

    Args:
        dim: key dimension d.
        unit_keys: reject keys that are not unit-norm. Baseline routers that
            store raw activations construct their codebooks with ``False``.
    """

    def __init__(self, dim: int, *, unit_keys: bool = True):
        if dim < 1:
            raise InvalidConfig(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.unit_keys = unit_keys
        self.entries: list[CodebookEntry] = []
        self.n_edits = 0
        self._keys = np.empty((16, self.dim))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def keys(self) -> np.ndarray:
        """Read-only ``C x d`` view of the stored keys."""
        view = self._keys[: len(self.entries)]
        view.flags.writeable = False
        return view

    @property
    def labels(self) -> list[Label]:
        return [e.label for e in self.entries]

    def add(self, key, payload: Payload, label: Label, created_at: int) -> int:
        key = as_vector(key, "key")
        if key.shape[0] != self.dim:
            raise DimensionMismatch(f"key has dimension {key.shape[0]}, codebook has {self.dim}")
        if self.unit_keys and abs(float(np.linalg.norm(key)) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("codebook requires unit-norm keys")
        n = len(self.entries)
        if n == self._keys.shape[0]:
            grown = np.empty((2 * n, self.dim))
            grown[:n] = self._keys[:n]
            self._keys = grown
        self._keys[n] = key
        frozen = key.copy()
        frozen.flags.writeable = False
        self.entries.append(CodebookEntry(frozen, payload, label, int(created_at)))
        return n

    def payload_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, self.dim))
        return np.stack([e.payload.value for e in self.entries])

    def parameter_count(self) -> int:
        """Stored floats: one key and one payload vector per entry."""
        return 2 * self.dim * len(self.entries)

    def info(self) -> dict:
        created = [e.created_at for e in self.entries]
        return {
            "dim": self.dim,
            "size": len(self),
            "unit_keys": self.unit_keys,
            "n_edits": self.n_edits,
            "created_at_range": [min(created), max(created)] if created else None,
            "label_histogram": dict(Counter(str(e.label) for e in self.entries).most_common()),
        }


def _empty_decision(q: np.ndarray) -> RoutingDecision:
    return RoutingDecision(q, np.empty(0), None, float("-inf"), False, 0)


def match(book: Codebook, q, c: float) -> RoutingDecision:
    """Score ``q`` against every key; match iff the best score is strictly above ``c``.

    Ties go to the lowest index.
    """
    q = as_vector(q, "q")
    if q.shape[0] != book.dim:
        raise DimensionMismatch(f"query has dimension {q.shape[0]}, codebook has {book.dim}")
    if len(book) == 0:
        return _empty_decision(q)
    scores = book.keys @ q
    i = int(np.argmax(scores))
    best = float(scores[i])
    return RoutingDecision(q, scores, i, best, best > c)


def route(book: Codebook, raw_query, params: HopfieldParams) -> RoutingDecision:
    """Normalize, refine over the stored keys, then ``match`` the refined query."""
    q0 = normalize(raw_query)
    if q0.shape[0] != book.dim:
        raise DimensionMismatch(f"query has dimension {q0.shape[0]}, codebook has {book.dim}")
    if len(book) == 0:
        return _empty_decision(q0)
    Q, steps = refine_batch(q0[None, :], book.keys, params)
    decision = match(book, Q[0], params.c)
    decision.hopfield_steps_taken = int(steps[0])
    return decision


class EditKind(enum.Enum):
    INSERTED = "inserted"
    REFINED = "refined"
    CONFLICT_INSERTED = "conflict_inserted"


@dataclass
class EditOutcome:
    kind: EditKind
    index: int
    decision: RoutingDecision
    payload: Payload
    training_failed: bool = False


def apply_edit(
    book: Codebook,
    raw_query,
    target: EditTarget,
    params: HopfieldParams = HopfieldParams(),
    adaptor_cfg: AdaptorConfig = AdaptorConfig(),
    *,
    router=None,
) -> EditOutcome:
    """Apply one edit with the three-case policy.

    * no match: insert ``(q0, fresh payload, label)``;
    * match with the same label: keep the key, fine-tune the matched payload;
    * match with a different label: insert a new entry, leave the old one.

    The stored key is always the pre-refinement query ``q0``. ``router``
    swaps in a baseline routing rule (see ``horen.bench.routers``); by default
    the normalized Hopfield router of this module is used.
    """
    if router is None:
        key = normalize(raw_query)
        decision = route(book, raw_query, params)
    else:
        key = router.key_for(raw_query)
        decision = router.route(book, raw_query, params)
    if target.target_vector.shape[0] != book.dim:
        raise DimensionMismatch("target vector dimension differs from codebook dimension")

    t = book.n_edits
    book.n_edits += 1
    if decision.matched and book.entries[decision.best_index].label == target.label:
        entry = book.entries[decision.best_index]
        entry.payload = train_payload(entry.payload, target, adaptor_cfg)
        kind, index, payload = EditKind.REFINED, decision.best_index, entry.payload
    else:
        payload = train_payload(Payload.zeros(book.dim), target, adaptor_cfg)
        index = book.add(key, payload, target.label, created_at=t)
        kind = EditKind.CONFLICT_INSERTED if decision.matched else EditKind.INSERTED
    if not payload.trained:
        log.warning("payload for edit %d did not reach the loss threshold (loss=%.3g)", t, payload.final_loss)
    return EditOutcome(kind, index, decision, payload, training_failed=not payload.trained)


# Binary container, little-endian throughout:
#   magic(8) version:u16 flags:u8 dim:u32 count:u64 n_edits:u64
#   per entry: key f8[d] | payload f8[d] | trained:u8 final_loss:f8 steps:u32
#              | label_tag:u8 label_len:u32 label:utf8 | created_at:i64
#   crc32:u32 over everything before it
MAGIC = b"HORENCB\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<HBIQQ")
_PAYLOAD_META = struct.Struct("<BdI")
_LABEL_HEAD = struct.Struct("<BI")
_CREATED = struct.Struct("<q")
_CRC = struct.Struct("<I")
_LABEL_STR, _LABEL_INT = 0, 1


def _encode_label(label: Label) -> bytes:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean labels are not supported")
    if isinstance(label, (int, np.integer)):
        raw, tag = str(int(label)).encode(), _LABEL_INT
    elif isinstance(label, str):
        raw, tag = label.encode("utf-8"), _LABEL_STR
    else:
        raise TypeError(f"labels must be str or int, got {type(label).__name__}")
    return _LABEL_HEAD.pack(tag, len(raw)) + raw


def dumps(book: Codebook) -> bytes:
    f8 = np.dtype("<f8")
    parts = [MAGIC, _HEADER.pack(FORMAT_VERSION, int(book.unit_keys), book.dim, len(book), book.n_edits)]
    for e in book.entries:
        parts.append(np.asarray(e.key, dtype=f8).tobytes())
        parts.append(np.asarray(e.payload.value, dtype=f8).tobytes())
        parts.append(_PAYLOAD_META.pack(int(e.payload.trained), e.payload.final_loss, e.payload.steps_used))
        parts.append(_encode_label(e.label))
        parts.append(_CREATED.pack(e.created_at))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def save(book: Codebook, destination: Union[str, os.PathLike, BinaryIO]) -> None:
    data = dumps(book)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated codebook: need {n} bytes at offset {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))


def loads(data: bytes, expected_dim: Optional[int] = None) -> Codebook:
    if len(data) < len(MAGIC) + _HEADER.size + _CRC.size:
        raise FormatError("file too short to be a codebook")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic header")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size :])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch: file truncated or corrupted")

    r = _Reader(body)
    r.take(len(MAGIC))
    version, flags, dim, count, n_edits = r.unpack(_HEADER)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if dim < 1:
        raise FormatError("dimension must be >= 1")
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"dimension mismatch: file has {dim}, expected {expected_dim}")

    book = Codebook(dim, unit_keys=bool(flags & 1))
    vec_bytes = 8 * dim
    for _ in range(count):
        key = np.frombuffer(r.take(vec_bytes), dtype="<f8").astype(np.float64)
        value = np.frombuffer(r.take(vec_bytes), dtype="<f8").astype(np.float64)
        trained, final_loss, steps = r.unpack(_PAYLOAD_META)
        tag, n = r.unpack(_LABEL_HEAD)
        try:
            text = r.take(n).decode("utf-8")
            label: Label = int(text) if tag == _LABEL_INT else text
        except (UnicodeDecodeError, ValueError) as exc:
            raise FormatError(f"malformed label: {exc}") from exc
        if tag not in (_LABEL_STR, _LABEL_INT):
            raise FormatError(f"unknown label tag {tag}")
        (created_at,) = r.unpack(_CREATED)
        try:
            book.add(key, Payload(value, bool(trained), final_loss, steps), label, created_at)
        except ValueError as exc:
            raise FormatError(f"invalid entry: {exc}") from exc
    if r.pos != len(body):
        raise FormatError(f"{len(body) - r.pos} trailing bytes after last entry")
    book.n_edits = n_edits
    return book


def load(source: Union[str, os.PathLike, BinaryIO], expected_dim: Optional[int] = None) -> Codebook:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    return loads(bytes(data), expected_dim)


__all__ = [
    "Codebook",
    "CodebookEntry",
    "EditKind",
    "EditOutcome",
    "RoutingDecision",
    "apply_edit",
    "dumps",
    "load",
    "loads",
    "match",
    "route",
    "save",
]
