from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantid.errors import InvalidInputError, ShapeError
from quantid.quantizer import (
    ChannelQuantizers,
    ErrorBudget,
    QuantizerSpec,
    budget_from_errors,
    budget_from_resolution,
    quantize_array,
    quantize_dataset,
    quantize_scalar,
    scale_dataset,
    scaling_factor,
)
from quantid.sysid import DataMatrices, build_data_matrices, identify


def exact_quantize(s, s_min, s_max, bits):
    """Rational-arithmetic oracle of the floor quantizer."""
    s, lo, hi = Fraction(s), Fraction(s_min), Fraction(s_max)
    eps = (hi - lo) / 2**bits
    if s <= lo:
        return lo
    k = min((s - lo) // eps, 2**bits)
    return lo + k * eps


SPEC = QuantizerSpec(0.0, 1.0, 2)


@pytest.mark.parametrize("s, expected", [(0.6, 0.5), (-0.3, 0.0), (1.7, 1.0)])
def test_scalar_examples(s, expected):
    assert SPEC.eps == 0.25
    assert quantize_scalar(s, SPEC) == expected


def test_levels_and_top():
    q = QuantizerSpec(-1.0, 2.0, 3)
    assert q.eps == 0.375
    assert q.top_level == 2.0


@pytest.mark.parametrize("kwargs", [dict(s_min=1.0, s_max=1.0, bits=3), dict(s_min=0.0, s_max=1.0, bits=0),
                                    dict(s_min=0.0, s_max=float("inf"), bits=3), dict(s_min=0.0, s_max=1.0, bits=2.5)])
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidInputError):
        QuantizerSpec(**kwargs)


def test_matches_rational_oracle():
    rng = np.random.default_rng(11)
    for _ in range(2000):
        lo = float(rng.uniform(-5, 0))
        hi = lo + float(rng.uniform(0.1, 10))
        b = int(rng.integers(1, 20))
        s = float(rng.uniform(lo - 1, hi + 1))
        got = quantize_scalar(s, QuantizerSpec(lo, hi, b))
        want = float(exact_quantize(s, lo, hi, b))
        assert got == pytest.approx(want, abs=4 * np.spacing(max(abs(lo), abs(hi))))


@settings(max_examples=300, deadline=None)
@given(
    s=st.floats(-1e3, 1e3),
    lo=st.floats(-100, 100),
    width=st.floats(1e-3, 100),
    bits=st.integers(1, 30),
)
def test_properties(s, lo, width, bits):
    q = QuantizerSpec(lo, lo + width, bits)
    y = quantize_scalar(s, q)
    assert quantize_scalar(y, q) == y
    assert q.s_min <= y <= q.s_max
    if q.s_min <= s <= q.s_max:
        assert 0.0 <= s - y < q.eps
    assert q.with_bits(bits + 1).eps == q.eps / 2


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10), bits=st.integers(1, 24))
def test_monotone(a, b, bits):
    q = QuantizerSpec(-3.0, 5.0, bits)
    lo, hi = sorted((a, b))
    assert quantize_scalar(lo, q) <= quantize_scalar(hi, q)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(2)
    vals = rng.uniform(-2, 3, size=500)
    q = QuantizerSpec(-1.0, 2.0, 5)
    np.testing.assert_array_equal(quantize_array(vals, -1.0, 2.0, 5), [quantize_scalar(v, q) for v in vals])


WORKED = [(np.array([[1.0, 1.5, -0.25]]), np.array([[1.0, -1.0]]))]


def worked_channels(bits):
    return ChannelQuantizers.uniform(bits, [(-1.0, 2.0)], [(-1.0, 1.0)])


def test_worked_dataset_b3():
    data = build_data_matrices(WORKED)
    out = quantize_dataset(data, worked_channels(3))
    # eps = 3/8 for the state, 1/4 for the input; oracle values by exact arithmetic
    np.testing.assert_array_equal(out.data.X, [[0.875, 1.25]])
    np.testing.assert_array_equal(out.data.Xplus, [[1.25, -0.25]])
    np.testing.assert_array_equal(out.data.U, [[1.0, -1.0]])
    np.testing.assert_array_equal(out.E_Xplus, [[0.25, 0.0]])
    np.testing.assert_array_equal(out.E_Psi, [[0.125, 0.25], [0.0, 0.0]])
    for arr, raw, (lo, hi) in ((out.data.X, data.X, (-1.0, 2.0)), (out.data.U, data.U, (-1.0, 1.0))):
        assert [float(exact_quantize(v, lo, hi, 3)) for v in raw.ravel()] == list(arr.ravel())
    assert out.budget.eps_x == pytest.approx(0.1875)
    assert out.budget.eps_u == pytest.approx(0.125)


def test_fine_resolution_is_identity():
    data = build_data_matrices(WORKED)
    out = quantize_dataset(data, worked_channels(52))
    np.testing.assert_allclose(out.data.Psi, data.Psi, atol=1e-12)
    assert np.abs(out.E_Psi).max() <= 1e-12


def test_zero_dataset_errors_within_resolution():
    data = DataMatrices(np.zeros((2, 5)), np.zeros((2, 5)), np.zeros((1, 5)))
    ch = ChannelQuantizers.uniform(4, [(-1.0, 1.0)] * 2, [(-1.0, 1.0)])
    out = quantize_dataset(data, ch)
    assert np.abs(out.E_Psi).max() <= 2.0 / 16


def test_dimension_mismatch():
    data = build_data_matrices(WORKED)
    ch = ChannelQuantizers.uniform(4, [(-1.0, 1.0)] * 2, [(-1.0, 1.0)])
    with pytest.raises(ShapeError):
        quantize_dataset(data, ch)


def test_budgets():
    ch = ChannelQuantizers.uniform(2, [(0.0, 1.0), (0.0, 2.0)], [(0.0, 4.0)])
    half, full = budget_from_resolution(ch), budget_from_resolution(ch, "full")
    np.testing.assert_allclose(half.e_x, [0.125, 0.25])
    np.testing.assert_allclose(full.e_u, [1.0])
    assert full.eps == pytest.approx(np.sqrt(0.25**2 + 0.5**2 + 1.0))
    with pytest.raises(InvalidInputError):
        budget_from_resolution(ch, "quarter")
    realized = budget_from_errors(np.array([[0.1, -0.3], [0.0, 0.2]]), np.array([[-0.5, 0.1]]))
    np.testing.assert_allclose(realized.e_x, [0.3, 0.2])
    assert ErrorBudget.zero(2, 1).eps == 0.0


def test_config_round_trip():
    ch = ChannelQuantizers.uniform(10, [(-1.0, 1.0), (-2.0, 2.0)], [(-0.5, 0.5)])
    cfg = ch.to_config("full")
    back = ChannelQuantizers.from_config(cfg)
    assert back == ch
    assert cfg["budget"] == "full"
    assert ch.with_bits(12).state_specs[0].bits == 12


def test_saturation_count():
    ch = worked_channels(3)
    assert ch.saturation_count(np.array([[3.0, 0.0, -2.0]]), np.array([[0.0, 0.5]])) == 2


class TestScaling:
    def test_unit_scale(self):
        data = build_data_matrices(WORKED)
        np.testing.assert_array_equal(scale_dataset(data, 1.0).Psi, data.Psi)

    def test_half_scale_keeps_model(self):
        data = build_data_matrices(WORKED)
        half = scale_dataset(data, 0.5)
        np.testing.assert_array_equal(half.X, [[0.5, 0.75]])
        np.testing.assert_allclose(identify(half).G_hat, [[0.5, 1.0]], atol=1e-13)

    def test_scaling_factor_from_extremes(self):
        data = build_data_matrices(WORKED)
        c = scaling_factor(data, s_max=1.0, margin=0.1)
        assert c == pytest.approx(0.9 / 1.5)
        scaled = scale_dataset(data, c)
        assert np.abs(scaled.Psi).max() <= 0.9 + 1e-15

    @pytest.mark.parametrize("c", [0.0, -1.0, float("nan")])
    def test_rejects_non_positive(self, c):
        with pytest.raises(InvalidInputError):
            scale_dataset(build_data_matrices(WORKED), c)
