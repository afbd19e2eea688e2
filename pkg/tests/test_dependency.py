import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bido.dependency import (
    DependencyMeasureConfig,
    coco,
    dependency_and_gradient_wrt_z,
    dependency_gradient_wrt_z,
    hsic,
    hsic_population_mc,
)
from bido.kernels import KernelDescriptor, ParameterError, gaussian_gram, linear_gram
from bido.numerics import DimensionError, center_gram, finite_diff_check, top_singular_pair
from bido.oracles import central_interval_contains, coco_svd, hsic_naive, permutation_null


def random_gram_pair(rng, n=8):
    x = rng.normal(size=(n, 3))
    y = np.tanh(x[:, :2]) + 0.3 * rng.normal(size=(n, 2))
    return gaussian_gram(x, 1.5).matrix, gaussian_gram(y, 1.0).matrix


def test_coco_constant_labels_is_zero():
    x = np.random.default_rng(0).normal(size=(6, 2))
    L = linear_gram(np.tile([[0, 1, 0]], (6, 1))).matrix
    assert coco(gaussian_gram(x, 1.0), L).value == 0.0


def test_coco_identity_pair():
    # H I H = H, H H = H and sigma_max(H) = 1 for n = 2, so COCO = sqrt(1) / 2
    assert coco_svd(np.eye(2), np.eye(2)) == pytest.approx(0.5, rel=1e-12)
    assert coco(np.eye(2), np.eye(2)).value == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_coco_matches_svd_oracle(seed):
    K, L = random_gram_pair(np.random.default_rng(seed))
    assert coco(K, L).value == pytest.approx(coco_svd(K, L), rel=1e-9)


def test_hsic_constant_inputs_is_zero():
    x = np.tile([[0.5, 0.2]], (5, 1))
    L = linear_gram(np.eye(3)[[0, 1, 2, 0, 1]]).matrix
    assert hsic(gaussian_gram(x, 1.0), L).value == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_hsic_matches_naive_expansion(seed):
    K, L = random_gram_pair(np.random.default_rng(seed))
    assert hsic(K, L).value == pytest.approx(hsic_naive(K, L), rel=1e-12)


def test_hsic_detects_deterministic_dependence():
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(64, 1))
    y = np.sin(3 * x)
    K, L = gaussian_gram(x, 0.5).matrix, gaussian_gram(y, 0.5).matrix
    null = permutation_null(K, L, 500, rng)
    assert hsic(K, L).value > np.quantile(null, 0.95)


@pytest.mark.parametrize("n", [32, 64, 128])
def test_hsic_calibrated_under_independence(n):
    rng = np.random.default_rng(100 + n)
    x = rng.normal(size=(n, 2))
    y = rng.normal(size=(n, 2))[rng.permutation(n)]
    K, L = gaussian_gram(x, 1.0).matrix, gaussian_gram(y, 1.0).matrix
    null = permutation_null(K, L, 1000, rng, statistic=lambda a, b: hsic(a, b).value)
    assert central_interval_contains(hsic(K, L).value, null, 0.99)


def test_errors():
    with pytest.raises(DimensionError):
        hsic(np.eye(3), np.eye(4))
    with pytest.raises(ParameterError):
        coco(np.eye(1), np.eye(1))
    with pytest.raises(ParameterError):
        DependencyMeasureConfig("kcc")


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**31 - 1))
def test_symmetry_permutation_and_sign(n, seed):
    rng = np.random.default_rng(seed)
    K, L = random_gram_pair(rng, n)
    assert hsic(K, L).value == pytest.approx(hsic(L, K).value, rel=1e-12, abs=1e-15)
    p = rng.permutation(n)
    Kp, Lp = K[np.ix_(p, p)], L[np.ix_(p, p)]
    assert hsic(Kp, Lp).value == pytest.approx(hsic(K, L).value, abs=1e-10)
    assert coco(Kp, Lp).value == pytest.approx(coco(K, L).value, abs=1e-10)
    assert hsic(K, L).value >= -1e-9
    assert coco(K, L).value >= 0.0


# -- gradients ------------------------------------------------------------

def test_hsic_gradient_zero_for_single_class_batch():
    z = np.random.default_rng(0).normal(size=(6, 4))
    Ky = linear_gram(np.tile([[1.0, 0.0]], (6, 1)))
    g = dependency_gradient_wrt_z(DependencyMeasureConfig("hsic"), Ky, z, z_first=True)
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_gradient_zero_for_degenerate_z():
    z = np.ones((5, 3))
    Kx = gaussian_gram(np.random.default_rng(0).normal(size=(5, 2)), 1.0)
    for measure in ("hsic", "coco"):
        g = dependency_gradient_wrt_z(DependencyMeasureConfig(measure), Kx, z)
        np.testing.assert_array_equal(g, 0.0)


def _measure_fd(measure, other, z, z_first, step, tol):
    cfg = DependencyMeasureConfig(measure, kernel_z=KernelDescriptor("gaussian", 2.0))

    def f(zz):
        Kz = cfg.gram_z(zz).matrix
        K, L = (Kz, other.matrix) if z_first else (other.matrix, Kz)
        return cfg.value(K, L).value

    def g(zz):
        return dependency_gradient_wrt_z(cfg, other, zz, z_first=z_first)

    return finite_diff_check(f, g, z, step=step, tolerance=tol)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("z_first", [False, True])
def test_hsic_gradient_finite_differences(seed, z_first):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(6, 4))
    other = gaussian_gram(z[:, :2] + 0.5 * rng.normal(size=(6, 2)), 1.0)
    assert _measure_fd("hsic", other, z, z_first, 1e-5, 1e-4).passed


def _gap_ok(other, z, z_first):
    Kz = gaussian_gram(z, 2.0).matrix
    A = center_gram(Kz) @ center_gram(other.matrix) if z_first else \
        center_gram(other.matrix) @ center_gram(Kz)
    s = np.linalg.svd(A, compute_uv=False)
    return s[0] - s[1] > 0.1 * s[0]


@pytest.mark.parametrize("z_first", [False, True])
def test_coco_gradient_finite_differences(z_first):
    checked = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(6, 4))
        other = linear_gram(np.eye(3)[rng.integers(0, 3, 6)]) if z_first else \
            gaussian_gram(rng.normal(size=(6, 3)), 1.0)
        if not _gap_ok(other, z, z_first):
            continue
        rep = _measure_fd("coco", other, z, z_first, 1e-6, 1e-3)
        assert rep.passed, (seed, rep)
        checked += 1
    assert checked >= 10


def test_coco_value_agrees_with_gradient_path():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(7, 3))
    Kx = gaussian_gram(rng.normal(size=(7, 2)), 1.0)
    cfg = DependencyMeasureConfig("coco")
    v, _ = dependency_and_gradient_wrt_z(cfg, Kx, z, z_first=False)
    assert v == pytest.approx(coco(Kx, cfg.gram_z(z)).value, rel=1e-12)


# -- population HSIC by Monte Carlo ----------------------------------------

KX = KernelDescriptor("gaussian", 1.0)
KY = KernelDescriptor("gaussian", 1.0)


def independent_sampler(n, rng):
    return rng.normal(size=(n, 1)), rng.normal(size=(n, 1))


def dependent_sampler(n, rng):
    x = rng.normal(size=(n, 1))
    return x, x + 0.5 * rng.normal(size=(n, 1))


def identity_sampler(n, rng):
    x = rng.normal(size=(n, 1))
    return x, x.copy()


def test_population_hsic_independent_is_zero():
    est, se = hsic_population_mc(independent_sampler, KX, KY, 100_000, np.random.default_rng(0))
    assert abs(est) < 3 * se


def test_population_hsic_identical_is_positive():
    est, se = hsic_population_mc(identity_sampler, KX, KY, 100_000, np.random.default_rng(1))
    assert est > 3 * se


def test_population_hsic_needs_enough_draws():
    with pytest.raises(ParameterError):
        hsic_population_mc(identity_sampler, KX, KY, 10, np.random.default_rng(0))


def _empirical(n, rng):
    x, y = dependent_sampler(n, rng)
    return hsic(gaussian_gram(x, 1.0), gaussian_gram(y, 1.0)).value


def test_empirical_hsic_consistent_with_population():
    pop, pop_se = hsic_population_mc(dependent_sampler, KX, KY, 200_000, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    vals = np.array([_empirical(512, rng) for _ in range(10)])
    se = np.sqrt(vals.var(ddof=1) / len(vals) + pop_se**2)
    assert abs(vals.mean() - pop) < 3 * se


def test_empirical_hsic_error_shrinks_with_n():
    pop, _ = hsic_population_mc(dependent_sampler, KX, KY, 1_000_000, np.random.default_rng(4))
    rng = np.random.default_rng(5)
    med = [np.median([abs(_empirical(n, rng) - pop) for _ in range(20)]) for n in (64, 256, 1024)]
    assert med[0] > med[1] > med[2], med
