import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horen.adaptor import AdaptorConfig, EditTarget, Payload
from horen.codebook import Codebook, EditKind, apply_edit, match, route
from horen.errors import DimensionMismatch, InvalidConfig, ZeroNorm
from horen.hopfield import HopfieldParams, random_unit

PARAMS = HopfieldParams()


def book_with(keys, labels=None):
    keys = np.atleast_2d(np.asarray(keys, dtype=float))
    b = Codebook(keys.shape[1])
    for i, k in enumerate(keys):
        b.add(k, Payload.zeros(keys.shape[1]), labels[i] if labels else i, created_at=i)
    return b


def test_match_examples():
    b = book_with([[1.0, 0.0]])
    d = match(b, [1.0, 0.0], 0.85)
    assert d.matched and d.best_score == 1.0 and d.best_index == 0
    d = match(b, [0.0, 1.0], 0.85)
    assert not d.matched and d.best_score == 0.0

    b = book_with([[1.0, 0.0], [0.0, 1.0]])
    d = match(b, np.array([1.0, 1.0]) / np.sqrt(2), 0.85)
    assert not d.matched and d.best_index == 0
    assert d.best_score == pytest.approx(np.sqrt(2) / 2, abs=1e-15)


def test_match_threshold_is_strict():
    b = book_with([[1.0, 0.0]])
    assert not match(b, [1.0, 0.0], 1.0).matched
    q = np.array([0.85, np.sqrt(1 - 0.85**2)])
    d = match(b, q, float(q[0]))
    assert not d.matched


def test_match_empty_and_mismatch():
    b = Codebook(3)
    d = match(b, [1.0, 0.0, 0.0], 0.85)
    assert not d.matched and d.best_index is None
    with pytest.raises(DimensionMismatch):
        match(book_with([[1.0, 0.0]]), [1.0, 0.0, 0.0], 0.85)


def test_route_examples():
    assert not route(Codebook(4), [1.0, 2.0, 3.0, 4.0], PARAMS).matched

    k = np.array([0.0, 0.6, 0.8])
    d = route(book_with([k]), 5 * k, PARAMS)
    assert d.matched and d.best_index == 0
    assert d.best_score == pytest.approx(1.0, abs=1e-12)

    b = book_with([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    d = route(b, [0.0, 1.0, 0.0], HopfieldParams(beta=20, gamma=0.1, max_steps=1))
    assert d.best_score <= 0.2 and not d.matched


def test_route_zero_query():
    with pytest.raises(ZeroNorm):
        route(book_with([[1.0, 0.0]]), [0.0, 0.0], PARAMS)


def test_codebook_rejects_bad_keys():
    b = Codebook(2)
    with pytest.raises(ValueError):
        b.add([2.0, 0.0], Payload.zeros(2), "A", 0)
    with pytest.raises(DimensionMismatch):
        b.add([1.0, 0.0, 0.0], Payload.zeros(2), "A", 0)
    with pytest.raises(InvalidConfig):
        Codebook(0)


def test_keys_view_is_read_only():
    b = book_with([[1.0, 0.0]])
    with pytest.raises(ValueError):
        b.keys[0, 0] = 0.5
    with pytest.raises(ValueError):
        b.entries[0].key[0] = 0.5


def test_growth_beyond_initial_capacity(rng):
    K = random_unit(rng, 100, 3)
    b = book_with(K)
    np.testing.assert_array_equal(b.keys, K)
    assert b.parameter_count() == 2 * 3 * 100


def test_three_edit_outcomes():
    cfg = AdaptorConfig()
    k = np.array([0.0, 1.0, 0.0])
    target = EditTarget("A", np.array([1.0, 0.0, 0.0]))
    b = Codebook(3)

    out = apply_edit(b, 3 * k, target, PARAMS, cfg)
    assert out.kind is EditKind.INSERTED and len(b) == 1 and out.index == 0
    np.testing.assert_array_equal(b.entries[0].key, k)
    key_bytes = b.entries[0].key.tobytes()
    before = b.entries[0].payload.final_loss

    out = apply_edit(b, k, target, PARAMS, cfg)
    assert out.kind is EditKind.REFINED and out.index == 0 and len(b) == 1
    assert b.entries[0].payload.final_loss <= before
    assert b.entries[0].key.tobytes() == key_bytes

    out = apply_edit(b, k, EditTarget("B", np.array([0.0, 0.0, 1.0])), PARAMS, cfg)
    assert out.kind is EditKind.CONFLICT_INSERTED and len(b) == 2 and out.index == 1
    np.testing.assert_array_equal(b.entries[1].key, b.entries[0].key)
    assert b.entries[0].label == "A" and b.entries[1].label == "B"
    assert b.entries[0].key.tobytes() == key_bytes
    assert [e.created_at for e in b.entries] == [0, 2]
    assert b.n_edits == 3


def test_stored_key_is_pre_refinement_query():
    # Two nearby keys pull the query; the stored key must still be normalize(raw).
    rng = np.random.default_rng(1)
    b = Codebook(8)
    cfg = AdaptorConfig()
    first = random_unit(rng, 1, 8)[0]
    apply_edit(b, first, EditTarget(0, first), PARAMS, cfg)
    raw = 4.0 * random_unit(rng, 1, 8)[0]
    out = apply_edit(b, raw, EditTarget(1, first), PARAMS, cfg)
    assert out.kind is EditKind.INSERTED
    assert not np.allclose(out.decision.refined_query, raw / np.linalg.norm(raw))
    np.testing.assert_allclose(b.entries[1].key, raw / np.linalg.norm(raw), atol=0)


def test_training_failure_is_non_fatal(caplog):
    b = Codebook(2)
    out = apply_edit(b, [1.0, 0.0], EditTarget("A", [0.0, 1.0]), PARAMS, AdaptorConfig(learning_rate=2.5))
    assert out.kind is EditKind.INSERTED and out.training_failed and len(b) == 1
    assert "did not reach" in caplog.text


def test_conflicting_older_entry_wins_ties():
    b = Codebook(2)
    cfg = AdaptorConfig()
    apply_edit(b, [1.0, 0.0], EditTarget("A", [1.0, 0.0]), PARAMS, cfg)
    apply_edit(b, [1.0, 0.0], EditTarget("B", [0.0, 1.0]), PARAMS, cfg)
    assert route(b, [1.0, 0.0], PARAMS).best_index == 0


def test_info_summary():
    b = book_with([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]], labels=["x", "y", "x"])
    info = b.info()
    assert info["dim"] == 2 and info["size"] == 3
    assert info["label_histogram"] == {"x": 2, "y": 1}
    assert info["created_at_range"] == [0, 2]


@st.composite
def streams(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, 25))
    d = draw(st.integers(2, 6))
    rng = np.random.default_rng(seed)
    raws = rng.standard_normal((n, d)) * rng.uniform(0.1, 10, (n, 1))
    labels = rng.integers(0, 3, n)
    return d, raws, labels


@settings(max_examples=60, deadline=None)
@given(streams())
def test_growth_is_monotone_and_keys_immutable(stream):
    d, raws, labels = stream
    b = Codebook(d)
    captured = []
    for raw, y in zip(raws, labels):
        size = len(b)
        out = apply_edit(b, raw, EditTarget(int(y), np.ones(d)), PARAMS, AdaptorConfig())
        if out.kind is EditKind.REFINED:
            assert len(b) == size
        else:
            assert len(b) == size + 1
            captured.append((raw / np.linalg.norm(raw)).tobytes())
    assert [e.key.tobytes() for e in b.entries] == captured


@settings(max_examples=60, deadline=None)
@given(streams(), st.sampled_from([0.01, 1.0, 100.0]))
def test_route_is_scale_invariant(stream, alpha):
    d, raws, labels = stream
    b = Codebook(d)
    for raw, y in zip(raws, labels):
        apply_edit(b, raw, EditTarget(int(y), np.ones(d)), PARAMS, AdaptorConfig())
    rng = np.random.default_rng(len(raws))
    for x in rng.standard_normal((10, d)):
        a, s = route(b, x, PARAMS), route(b, alpha * x, PARAMS)
        assert (a.matched, a.best_index) == (s.matched, s.best_index)


def test_identical_streams_give_identical_books():
    rng = np.random.default_rng(9)
    raws = rng.standard_normal((50, 4))
    books = []
    for _ in range(2):
        b = Codebook(4)
        for i, raw in enumerate(raws):
            apply_edit(b, raw, EditTarget(i % 5, raw), PARAMS, AdaptorConfig())
        books.append(b)
    np.testing.assert_array_equal(books[0].keys, books[1].keys)
    np.testing.assert_array_equal(books[0].payload_matrix(), books[1].payload_matrix())
    assert books[0].labels == books[1].labels
