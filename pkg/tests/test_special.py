import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sp
from scipy.integrate import quad

from ghztomo.special import (
    gaussian_tail_bound,
    halfline_moments,
    halfline_moments_faddeeva,
    laguerre,
    laguerre_coefficients,
    truncation_point,
)


class TestLaguerre:
    @pytest.mark.parametrize("alpha", [0, 1, 2, 5])
    @pytest.mark.parametrize("z", [-1.0, 0.0, 0.3, 7.0])
    def test_degree_zero(self, alpha, z):
        assert laguerre(0, alpha, z) == 1

    @pytest.mark.parametrize("z", [-2.0, 0.0, 0.5, 3.0])
    def test_degree_one(self, z):
        assert laguerre(1, 0, z) == pytest.approx(1 - z, abs=1e-15)

    def test_known_value(self):
        assert laguerre(2, 0, 2.0) == pytest.approx(-1.0, abs=1e-15)

    @settings(max_examples=80)
    @given(st.integers(0, 8), st.integers(0, 6), st.floats(-5, 20))
    def test_matches_scipy(self, n, alpha, z):
        assert laguerre(n, alpha, z) == pytest.approx(sp.eval_genlaguerre(n, alpha, z), rel=1e-10, abs=1e-10)

    def test_array_input(self):
        z = np.linspace(0, 4, 9)
        assert np.allclose(laguerre(3, 1, z), sp.eval_genlaguerre(3, 1, z), atol=1e-13)

    def test_coefficients(self):
        # L_2^1(z) = (z^2 - 6 z + 6)/2
        assert np.allclose(laguerre_coefficients(2, 1), [3, -3, 0.5])
        assert np.allclose(laguerre_coefficients(0, 3), [1])

    def test_negative_degree(self):
        with pytest.raises(ValueError):
            laguerre(-1, 0, 1.0)


def quad_moment(k, b):
    # QAWO on [0, 12]; the neglected tail is below exp(-140)
    f = lambda s: s**k * math.exp(-s * s)  # noqa: E731
    re = quad(f, 0, 12, weight="cos", wvar=2 * b, epsabs=1e-14, limit=400)[0]
    im = quad(f, 0, 12, weight="sin", wvar=2 * b, epsabs=1e-14, limit=400)[0]
    return re + 1j * im


class TestHalflineMoments:
    def test_b_zero_closed_form(self):
        orders = np.arange(8)
        got, ok = halfline_moments(np.array([0.0]), orders)
        assert ok.all()
        exact = 0.5 * sp.gamma((orders + 1) / 2)
        assert np.allclose(got[0], exact, atol=1e-13)

    @pytest.mark.parametrize("b", [-4.0, -1.3, 0.2, 0.9, 2.5, 6.0])
    def test_against_scipy_quad(self, b):
        orders = [0, 1, 2, 3, 5, 7]
        got, ok = halfline_moments(np.array([b]), orders)
        assert ok.all()
        for j, k in enumerate(orders):
            assert abs(got[0, j] - quad_moment(k, b)) < 1e-11

    def test_against_faddeeva(self):
        b = np.linspace(-3, 3, 41)
        got, ok = halfline_moments(b, np.arange(8))
        ref = halfline_moments_faddeeva(b, 7)
        assert ok.all()
        assert np.max(np.abs(got - ref)) < 1e-11

    def test_shape(self):
        got, ok = halfline_moments(np.zeros((2, 3)), [1, 3])
        assert got.shape == (2, 3, 2) and ok.shape == (2, 3)

    def test_conjugation_in_b(self):
        b = np.array([0.7, 1.9])
        plus, _ = halfline_moments(b, [1, 2, 3])
        minus, _ = halfline_moments(-b, [1, 2, 3])
        assert np.allclose(minus, plus.conj(), atol=1e-14)

    def test_non_convergence_flagged(self):
        _, ok = halfline_moments(np.array([40.0]), [1], max_depth=1, panel=3.0)
        assert not ok.all()


def test_tail_bound():
    for k in range(8):
        exact = quad(lambda s: s**k * math.exp(-s * s), 6, np.inf)[0]
        assert gaussian_tail_bound(k, 6.0) == pytest.approx(exact, rel=1e-8)
    s_max = truncation_point(7, 1e-20)
    assert max(gaussian_tail_bound(k, s_max) for k in range(8)) <= 1e-20
