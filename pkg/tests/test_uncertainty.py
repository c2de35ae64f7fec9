import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cascade_roi.errors import NegativeUncertainty, TooFewSamples, ValueOutOfRange
from cascade_roi.uncertainty import adaptive_loss, alpha_map, dice_ce_loss, variance_map
from cascade_roi.volume import GridMeta, Volume

import oracles

META = GridMeta((4, 4, 4))


def vols(*arrs):
    return [Volume(META, a) for a in arrs]


def test_variance_examples():
    same = np.full((4, 4, 4), 0.3)
    U = variance_map(vols(same, same, same))
    assert not U.data.any()

    U = variance_map(vols(np.zeros((4, 4, 4)), np.ones((4, 4, 4))))
    assert np.all(U.data == 0.25)


def test_variance_two_pass_oracle():
    rng = np.random.default_rng(9)
    s = rng.random((6, 4, 4, 4)).astype(np.float32)
    U = variance_map(vols(*s))
    flat = s.reshape(6, -1).astype(np.float64)
    expect = []
    for j in range(flat.shape[1]):
        col = flat[:, j].tolist()
        mean = math.fsum(col) / len(col)
        expect.append(math.fsum((c - mean) ** 2 for c in col) / len(col))
    np.testing.assert_allclose(U.data.ravel(), expect, rtol=1e-6, atol=1e-9)


def test_variance_errors():
    with pytest.raises(TooFewSamples):
        variance_map(vols(np.zeros((4, 4, 4))))
    with pytest.raises(ValueOutOfRange):
        variance_map(vols(np.zeros((4, 4, 4)), np.full((4, 4, 4), 1.2)))


def test_alpha_examples():
    U = Volume(META, np.zeros((4, 4, 4)))
    assert np.all(alpha_map(U).data == 1.0)
    a = alpha_map(Volume(META, np.full((4, 4, 4), 0.25)), 1.0)
    assert a.data[0, 0, 0] == pytest.approx(0.778801, abs=1e-6)
    with pytest.raises(NegativeUncertainty):
        alpha_map(np.full((2, 2, 2), -0.1))
    with pytest.raises(ValueError):
        alpha_map(U, 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(0, 1)), st.floats(0.1, 10))
def test_uncertainty_ranges(samples, scale):
    U = variance_map(samples)
    assert np.all(U >= 0) and np.all(U <= 0.25 + 1e-7)
    a = alpha_map(U, scale)
    assert np.all(a > 0) and np.all(a <= 1)


def _random_case(rng, shape=(8, 8, 8)):
    p = rng.uniform(0.01, 0.99, shape)
    g = (rng.random(shape) < 0.4).astype(np.float64)
    alpha = np.exp(-rng.uniform(0, 0.25, shape))
    return p, g, alpha


def test_alpha_one_collapses_to_dice():
    rng = np.random.default_rng(0)
    p, g, _ = _random_case(rng)
    res = adaptive_loss(p, g, np.ones_like(p))
    assert res.ce_term == 0.0
    base = dice_ce_loss(p, g, 1.0, 0.0)
    assert res.dice_term == pytest.approx(base.value, abs=1e-12)


def test_perfect_prediction_is_zero():
    g = (np.random.default_rng(1).random((5, 5, 5)) < 0.5).astype(np.float64)
    assert adaptive_loss(g, g, np.ones_like(g)).value == 0.0
    assert dice_ce_loss(g, g).dice_term == 0.0


def test_loss_matches_formula():
    rng = np.random.default_rng(3)
    p, g, alpha = _random_case(rng)
    got = adaptive_loss(p, g, alpha, eps=1e-5).value
    assert got == pytest.approx(oracles.soft_dice_ce(p, g, alpha, 1e-5, 1 - alpha), rel=1e-12)
    got = dice_ce_loss(p, g, 1.0, 1.0).value
    assert got == pytest.approx(oracles.soft_dice_ce(p, g, 1.0, 1e-5, 1.0), rel=1e-12)


def test_gradient_small_case():
    rng = np.random.default_rng(6)
    p, g, alpha = _random_case(rng, (3, 3, 3))
    an = adaptive_loss(p, g, alpha).gradient
    fd = oracles.central_difference(lambda x: oracles.soft_dice_ce(x, g, alpha, 1e-5, 1 - alpha), p.copy())
    np.testing.assert_allclose(an, fd, rtol=1e-4)


def test_bce_clamp_has_flat_gradient():
    p = np.array([0.0, 1.0, 0.5]).reshape(3, 1, 1)
    g = np.array([1.0, 0.0, 1.0]).reshape(3, 1, 1)
    res = dice_ce_loss(p, g, w_dice=0.0, w_ce=1.0)
    assert res.gradient[0, 0, 0] == 0.0 and res.gradient[1, 0, 0] == 0.0
    assert math.isfinite(res.value)


def test_loss_input_checks():
    p = np.full((2, 2, 2), 0.5)
    with pytest.raises(ValueOutOfRange):
        adaptive_loss(p + 1, p, p)
    with pytest.raises(ValueError):
        dice_ce_loss(p, p, 0.0, 0.0)
    with pytest.raises(ValueError):
        adaptive_loss(p, p, np.ones((2, 2, 3)))
