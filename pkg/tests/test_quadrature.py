import numpy as np
import pytest

from contactmoc.quadrature import QuadratureError, adaptive_gauss_kronrod


def test_sin_integral():
    out = adaptive_gauss_kronrod(lambda x, src: np.sin(x), 0.0, np.pi)
    assert float(out) == pytest.approx(2.0, abs=1e-13)


def test_per_element_intervals_and_sign():
    a = np.array([0.0, 1.0, 2.0])
    b = np.array([1.0, 0.0, 2.0])
    out = adaptive_gauss_kronrod(lambda x, src: np.exp(x), a, b)
    expect = np.array([np.e - 1.0, 1.0 - np.e, 0.0])
    assert np.allclose(out, expect, atol=1e-12)


def test_src_indexing_carries_parameters():
    coef = np.array([1.0, 2.0, 3.0])
    out = adaptive_gauss_kronrod(lambda x, src: coef[src] * x, 0.0, np.ones(3))
    assert np.allclose(out, coef / 2.0, atol=1e-13)


def test_integrable_endpoint_steepness_resolves():
    # near-singular 1/sqrt growth toward the left endpoint
    out = adaptive_gauss_kronrod(lambda x, src: 1.0 / np.sqrt(x), 1e-9, 1.0, tol=1e-10)
    assert float(out) == pytest.approx(2.0 - 2.0 * np.sqrt(1e-9), abs=1e-8)


def test_unresolvable_raises():
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(QuadratureError):
            adaptive_gauss_kronrod(lambda x, src: 1.0 / np.sqrt(np.abs(x)), -1.0, 1.0,
                                   tol=1e-14, max_depth=3)
