import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bido.kernels import (
    KernelDescriptor,
    ParameterError,
    default_sigma,
    gaussian_gram,
    gram_gradient_wrt_samples,
    linear_gram,
)
from bido.numerics import DimensionError, finite_diff_check


def test_gaussian_gram_examples():
    np.testing.assert_allclose(gaussian_gram([[0.3, 0.1], [0.3, 0.1]], 1.0).matrix,
                               np.ones((2, 2)), atol=1e-12)
    sigma = 0.7
    K = gaussian_gram([[0.0], [sigma * np.sqrt(2)]], sigma).matrix
    assert K[0, 1] == pytest.approx(np.exp(-1), rel=1e-12)
    assert K[0, 1] == pytest.approx(0.367879, abs=1e-6)
    x = np.random.default_rng(0).uniform(size=(9, 4))
    np.testing.assert_array_equal(np.diag(gaussian_gram(x, 0.5).matrix), np.ones(9))


def test_gaussian_gram_errors():
    with pytest.raises(ParameterError):
        gaussian_gram([[0.0], [1.0]], 0.0)
    with pytest.raises(DimensionError):
        gaussian_gram([[0.0, 1.0], [1.0]], 1.0)


def test_linear_gram_examples():
    eye = np.eye(3)
    onehot = eye[[0, 0, 2]]
    L = linear_gram(onehot).matrix
    assert L[0, 1] == 1.0 and L[0, 2] == 0.0
    assert linear_gram([[1.0, 2.0], [3.0, -1.0]]).matrix[0, 1] == pytest.approx(1.0)
    np.testing.assert_array_equal(linear_gram(np.zeros((3, 2))).matrix, np.zeros((3, 3)))


@pytest.mark.parametrize("dim, expected", [(1, 5.0), (4, 10.0), (784, 140.0)])
def test_default_sigma(dim, expected):
    assert default_sigma(dim) == pytest.approx(expected, rel=1e-15)


def test_descriptor_validation():
    with pytest.raises(ParameterError):
        KernelDescriptor("gaussian")
    with pytest.raises(ParameterError):
        KernelDescriptor("linear", 1.0)
    with pytest.raises(ParameterError):
        KernelDescriptor("laplace", 1.0)
    assert KernelDescriptor.gaussian_for_dim(16).sigma == 20.0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 10), d=st.integers(1, 6), scale=st.floats(0.1, 10.0),
       seed=st.integers(0, 2**31 - 1))
def test_gaussian_gram_properties(n, d, scale, seed):
    x = np.random.default_rng(seed).uniform(size=(n, d))
    sigma = 0.4
    K = gaussian_gram(x, sigma).matrix
    assert np.all(K > 0) and np.all(K <= 1)
    off = K[~np.eye(n, dtype=bool)]
    assert np.all(off < 1 - 1e-12)  # distinct continuous points
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.testing.assert_allclose(gaussian_gram(x * scale, sigma * scale).matrix, K, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 10), d=st.integers(1, 6), seed=st.integers(0, 2**31 - 1))
def test_linear_gram_symmetric_psd(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    L = linear_gram(x).matrix
    np.testing.assert_allclose(L, L.T, atol=1e-12)
    assert np.linalg.eigvalsh(L).min() >= -1e-8


def test_gram_gradient_trivial_cases():
    x = np.random.default_rng(0).normal(size=(4, 3))
    for g in (gaussian_gram(x, 1.0), linear_gram(x)):
        np.testing.assert_array_equal(gram_gradient_wrt_samples(g, x, np.zeros((4, 4))), 0.0)
    same = np.tile([[0.2, 0.5, 0.1]], (4, 1))
    U = np.random.default_rng(1).normal(size=(4, 4))
    np.testing.assert_array_equal(
        gram_gradient_wrt_samples(gaussian_gram(same, 1.0), same, U), 0.0)
    with pytest.raises(DimensionError):
        gram_gradient_wrt_samples(gaussian_gram(x, 1.0), x, np.zeros((3, 3)))


def _check_gram_gradient(kind, n, d, seed, tol):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    U = rng.normal(size=(n, n))  # deliberately non-symmetric
    sigma = 1.3

    def build(z):
        return gaussian_gram(z, sigma) if kind == "gaussian" else linear_gram(z)

    rep = finite_diff_check(
        lambda z: np.sum(U * build(z).matrix),
        lambda z: gram_gradient_wrt_samples(build(z), z, U),
        x, step=1e-5, tolerance=tol,
    )
    return rep


def test_gram_gradient_random_probe():
    for kind in ("gaussian", "linear"):
        assert _check_gram_gradient(kind, 4, 3, 0, 1e-5).passed


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(["gaussian", "linear"]), n=st.integers(2, 8), d=st.integers(1, 6),
       seed=st.integers(0, 2**31 - 1))
def test_gram_gradient_matches_finite_differences(kind, n, d, seed):
    rep = _check_gram_gradient(kind, n, d, seed, 1e-5)
    assert rep.passed, rep
