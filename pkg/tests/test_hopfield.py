import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horen.errors import DimensionMismatch, EmptyCodebook, InvalidConfig, NonFiniteLoss
from horen.hopfield import (
    HopfieldParams,
    damped_refine,
    energy,
    energy_lower_bound,
    iterate_standard,
    random_unit,
    refine_batch,
    standard_update,
)

mpmath.mp.dps = 50


def mp_standard_update(q, K, beta):
    scores = [mpmath.fsum(mpmath.mpf(a) * mpmath.mpf(b) for a, b in zip(k, q)) for k in K]
    w = [mpmath.exp(beta * s) for s in scores]
    z = mpmath.fsum(w)
    return [float(mpmath.fsum(w[i] / z * mpmath.mpf(K[i][j]) for i in range(len(K)))) for j in range(len(q))]


@st.composite
def instances(draw, max_c=16, max_d=12):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    c = draw(st.integers(1, max_c))
    d = draw(st.integers(2, max_d))
    beta = draw(st.sampled_from([1.0, 5.0, 20.0]))
    return random_unit(rng, c, d), random_unit(rng, 1, d)[0], beta


def test_params_validation():
    HopfieldParams(gamma=1.0, max_steps=0, epsilon=0.0)
    for bad in ({"beta": 0}, {"gamma": 0}, {"gamma": 1.5}, {"max_steps": -1}, {"epsilon": -1e-3}):
        with pytest.raises(InvalidConfig):
            HopfieldParams(**bad)


def test_standard_update_singleton_returns_key(rng):
    k = random_unit(rng, 1, 5)
    np.testing.assert_array_equal(standard_update(random_unit(rng, 1, 5)[0], k, 20.0), k[0])


def test_standard_update_antipodal_cancels():
    K = np.array([[1.0, 0.0], [-1.0, 0.0]])
    for beta in (0.5, 1.0, 20.0, 1e4):
        np.testing.assert_allclose(standard_update([0.0, 1.0], K, beta), [0.0, 0.0], atol=1e-300)


def test_standard_update_matches_high_precision():
    K = np.eye(2)
    got = standard_update([1.0, 0.0], K, 20.0)
    np.testing.assert_allclose(got, mp_standard_update([1, 0], K.tolist(), 20), rtol=1e-12)
    assert got[1] == pytest.approx(2.0611536e-9, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(instances(max_c=6, max_d=5))
def test_standard_update_random_against_mpmath(inst):
    K, q, beta = inst
    np.testing.assert_allclose(standard_update(q, K, beta), mp_standard_update(q, K.tolist(), beta),
                               rtol=1e-10, atol=1e-13)


def test_standard_update_errors():
    with pytest.raises(EmptyCodebook):
        standard_update([1.0, 0.0], np.empty((0, 2)), 1.0)
    with pytest.raises(DimensionMismatch):
        standard_update([1.0, 0.0], np.eye(3), 1.0)


def test_energy_examples():
    k = np.array([[0.6, 0.8]])
    assert energy(k[0], k, 20.0) == pytest.approx(-0.5, abs=1e-15)
    K = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert energy([0.0, 1.0], K, 1.0) == pytest.approx(0.5 - float(mpmath.log(2)), abs=1e-15)
    assert energy_lower_bound(8, 20.0) == pytest.approx(-0.5 - float(mpmath.log(8)) / 20)
    assert energy_lower_bound(8, 20.0) == pytest.approx(-0.60397, abs=1e-5)
    with pytest.raises(EmptyCodebook):
        energy([1.0], np.empty((0, 1)), 1.0)


@settings(max_examples=200, deadline=None)
@given(instances(max_c=64, max_d=32))
def test_energy_lower_bound_on_unit_inputs(inst):
    K, q, beta = inst
    assert energy(q, K, beta) >= energy_lower_bound(len(K), beta) - 1e-12


def test_damped_refine_fixed_point_stops_early(rng):
    k = random_unit(rng, 1, 6)
    q, tr = damped_refine(k[0], k, HopfieldParams(max_steps=5))
    np.testing.assert_array_equal(q, k[0])
    assert tr.stopped_early and tr.steps_taken == 0
    assert tr.residuals[0] == pytest.approx(0.0, abs=1e-15)


def test_damped_refine_single_step_closed_form():
    k = np.array([[1.0, 0.0, 0.0]])
    q0 = np.array([0.0, 1.0, 0.0])
    q, tr = damped_refine(q0, k, HopfieldParams(beta=20, gamma=0.1, max_steps=1, epsilon=1e-4))
    expected = np.array([0.1, 0.9, 0.0]) / np.sqrt(0.82)
    np.testing.assert_allclose(q, expected, atol=1e-15)
    assert float(q @ k[0]) == pytest.approx(0.1 / np.sqrt(0.82), abs=1e-15)
    assert float(q @ k[0]) == pytest.approx(0.11043, abs=1e-5)
    assert tr.steps_taken == 1 and len(tr.iterates) == 2


def test_damped_refine_early_stop_happens_before_the_move():
    # q_new is within epsilon of q, so q must come back bit-identical.
    K = np.array([[1.0, 0.0], [0.0, 1.0]])
    q0 = np.array([1.0, 1e-6])
    q0 = q0 / np.linalg.norm(q0)
    q, tr = damped_refine(q0, K, HopfieldParams(beta=20, gamma=0.5, max_steps=3, epsilon=1e-4))
    np.testing.assert_array_equal(q, q0)
    assert tr.stopped_early and tr.steps_taken == 0


def test_damped_refine_zero_steps_is_identity(rng):
    K = random_unit(rng, 7, 4)
    q0 = random_unit(rng, 1, 4)[0]
    q, tr = damped_refine(q0, K, HopfieldParams(max_steps=0))
    np.testing.assert_array_equal(q, q0)
    assert tr.steps_taken == 0 and not tr.stopped_early


def test_damped_refine_degenerate_proposal_is_flagged():
    K = np.array([[1.0, 0.0], [-1.0, 0.0]])
    q, tr = damped_refine([0.0, 1.0], K, HopfieldParams(max_steps=3))
    np.testing.assert_array_equal(q, [0.0, 1.0])
    assert tr.degenerate


def test_damped_refine_degenerate_mix_is_flagged():
    # Single key antipodal to q0 with gamma = 0.5: the mix is exactly zero.
    K = np.array([[-1.0, 0.0]])
    q, tr = damped_refine([1.0, 0.0], K, HopfieldParams(gamma=0.5, max_steps=1))
    np.testing.assert_array_equal(q, [1.0, 0.0])
    assert tr.degenerate and tr.steps_taken == 0


@settings(max_examples=150, deadline=None)
@given(instances(), st.sampled_from([0.05, 0.1, 0.5, 1.0]), st.integers(0, 6))
def test_damped_iterates_stay_unit_and_batch_agrees(inst, gamma, steps):
    K, q0, beta = inst
    params = HopfieldParams(beta=beta, gamma=gamma, max_steps=steps)
    q, tr = damped_refine(q0, K, params)
    assert len(tr.iterates) == len(tr.energies) == len(tr.residuals) == tr.steps_taken + 1
    for it in tr.iterates:
        assert abs(np.linalg.norm(it) - 1) <= 1e-9
    Q, s = refine_batch(np.stack([q0, q0]), K, params)
    np.testing.assert_allclose(Q[0], q, atol=1e-12)
    assert s[0] == tr.steps_taken


@settings(max_examples=200, deadline=None)
@given(instances(max_c=64, max_d=32), st.sampled_from([0.05, 0.1, 0.5]))
def test_one_damped_step_moves_at_most_four_gamma(inst, gamma):
    K, q0, beta = inst
    q, _ = damped_refine(q0, K, HopfieldParams(beta=beta, gamma=gamma, max_steps=1, epsilon=0.0))
    assert np.linalg.norm(q - q0) <= 4 * gamma


def test_iterate_standard_singleton_converges_in_one_step(rng):
    k = random_unit(rng, 1, 5)
    tr = iterate_standard(random_unit(rng, 1, 5)[0], k, 20.0)
    assert tr.steps_taken == 1 and tr.stopped_early
    np.testing.assert_array_equal(tr.final, k[0])
    assert tr.residuals[-1] == 0.0


def test_iterate_standard_random_reaches_hull_fixed_point():
    rng = np.random.default_rng(7)
    K = random_unit(rng, 16, 8)
    tr = iterate_standard(random_unit(rng, 1, 8)[0], K, 20.0, max_steps=500, tol=1e-8)
    assert tr.residuals[-1] <= 1e-8
    w = np.exp(20.0 * (K @ tr.final - (K @ tr.final).max()))
    w /= w.sum()
    assert np.linalg.norm(w @ K - tr.final) <= 1e-6
    assert np.all(np.diff(tr.energies) <= 1e-9)


def test_iterate_standard_fixed_point_closure():
    rng = np.random.default_rng(3)
    K = random_unit(rng, 5, 4)
    tr = iterate_standard(random_unit(rng, 1, 4)[0], K, 5.0, tol=1e-14)
    fp = tr.final
    np.testing.assert_allclose(standard_update(fp, K, 5.0), fp, atol=1e-10)


def test_iterate_standard_trace_shapes(rng):
    K = random_unit(rng, 10, 6)
    tr = iterate_standard(random_unit(rng, 1, 6)[0], K, 1.0, max_steps=3, tol=0.0)
    assert tr.steps_taken == 3 and not tr.stopped_early
    assert len(tr.iterates) == len(tr.energies) == len(tr.residuals) == 4


def test_naive_softmax_overflow_is_surfaced():
    rng = np.random.default_rng(0)
    K = random_unit(rng, 8, 8)
    with pytest.raises(NonFiniteLoss):
        iterate_standard(random_unit(rng, 1, 8)[0], K, 1e6, stable=False)
    iterate_standard(random_unit(rng, 1, 8)[0], K, 1e6)
