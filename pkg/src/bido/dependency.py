"""Kernel dependency measures (COCO and HSIC) on a batch, with gradients.

Both estimators take two Gram matrices computed over the same ``N`` samples:

* COCO: ``sqrt(||K~ L~||_2) / N`` with ``K~ = HKH`` and ``||.||_2`` the
  spectral norm.
* HSIC: ``Tr(K H L H) / (N - 1)^2`` (the biased estimator).
"""

from dataclasses import dataclass

import numpy as np

from .kernels import GramMatrix, KernelDescriptor, ParameterError, gram_gradient_wrt_samples
from .numerics import DimensionError, center_gram, top_singular_pair

MEASURES = ("coco", "hsic")


@dataclass(frozen=True)
class DependencyValue:
    value: float
    measure: str
    sample_count: int

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class DependencyMeasureConfig:
    """Which measure to use and how to build the Gram matrices for X, Z and Y.

    ``kernel_x``/``kernel_z`` may be ``None``, meaning "Gaussian with the
    ``5 sqrt(d)`` bandwidth for whatever dimension shows up".
    """

    measure: str = "hsic"
    kernel_x: KernelDescriptor = None
    kernel_y: KernelDescriptor = KernelDescriptor("linear")
    kernel_z: KernelDescriptor = None

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ParameterError(f"measure must be one of {MEASURES}, got {self.measure!r}")

    def gram_x(self, x):
        return _gram(self.kernel_x, x)

    def gram_y(self, y):
        return _gram(self.kernel_y, y)

    def gram_z(self, z):
        return _gram(self.kernel_z, z)

    def value(self, K, L):
        return MEASURE_FUNCS[self.measure](K, L)


def _gram(descriptor, samples):
    samples = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    if descriptor is None:
        descriptor = KernelDescriptor.gaussian_for_dim(samples.shape[1])
    return descriptor.gram(samples)


def _check_pair(K, L):
    K = K.matrix if isinstance(K, GramMatrix) else np.asarray(K, dtype=np.float64)
    L = L.matrix if isinstance(L, GramMatrix) else np.asarray(L, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
        raise DimensionError(f"Gram shapes must match and be square: {K.shape} vs {L.shape}")
    n = K.shape[0]
    if n < 2:
        raise ParameterError(f"need at least 2 samples, got {n}")
    return K, L, n


def coco(K, L):
    K, L, n = _check_pair(K, L)
    sigma = top_singular_pair(center_gram(K) @ center_gram(L))[0]
    return DependencyValue(np.sqrt(max(sigma, 0.0)) / n, "coco", n)


def hsic(K, L):
    K, L, n = _check_pair(K, L)
    # Tr(K H L H) = sum_ij K_ij (HLH)_ij since both are symmetric
    value = float(np.sum(K * center_gram(L))) / (n - 1) ** 2
    return DependencyValue(value, "hsic", n)


MEASURE_FUNCS = {"coco": coco, "hsic": hsic}


def hsic_upstream(L):
    """d HSIC(K, L) / d K, i.e. ``H L H / (N - 1)^2``."""
    L = L.matrix if isinstance(L, GramMatrix) else L
    n = L.shape[0]
    return center_gram(L) / (n - 1) ** 2


def coco_upstream(K_other, K_self, self_first):
    """d COCO / d K_self for ``COCO = sqrt(||A||_2) / N``.

    ``A = K~_self K~_other`` when ``self_first`` else ``K~_other K~_self``.
    Uses the (sub)gradient ``u v^T`` of the spectral norm at the converged
    top singular pair. Returns ``(value, upstream)``.
    """
    n = K_self.shape[0]
    Ct_self, Ct_other = center_gram(K_self), center_gram(K_other)
    A = Ct_self @ Ct_other if self_first else Ct_other @ Ct_self
    sigma, u, v = top_singular_pair(A)
    value = np.sqrt(max(sigma, 0.0)) / n
    if sigma <= 0.0:
        return value, np.zeros_like(K_self)
    if self_first:
        # d sigma / d C_self = u (C_other v)^T
        dC = np.outer(u, Ct_other @ v)
    else:
        # d sigma / d C_self = (C_other^T u) v^T
        dC = np.outer(Ct_other.T @ u, v)
    dC *= 1.0 / (2.0 * n * np.sqrt(sigma))
    # K~ = H K H, H symmetric  =>  dK = H dC H
    return value, center_gram(dC)


def dependency_and_gradient_wrt_z(config, other_gram, z_samples, z_first):
    """Value of ``d(Z, other)`` (or ``d(other, Z)``) and its gradient w.r.t. ``z_samples``.

    ``z_first`` only matters for COCO, where the product order inside the
    spectral norm is taken literally.
    """
    z = np.asarray(z_samples, dtype=np.float64)
    z2 = z.reshape(len(z), -1)
    Kz = config.gram_z(z2)
    Ko = other_gram.matrix if isinstance(other_gram, GramMatrix) else np.asarray(other_gram)
    _check_pair(Kz, Ko)
    if config.measure == "hsic":
        upstream = hsic_upstream(Ko)
        value = float(np.sum(Kz.matrix * upstream))
    else:
        value, upstream = coco_upstream(Ko, Kz.matrix, z_first)
    grad = gram_gradient_wrt_samples(Kz, z2, upstream)
    return float(value), grad.reshape(z.shape)


def dependency_gradient_wrt_z(config, x_or_y_gram, z_samples, z_first=False):
    return dependency_and_gradient_wrt_z(config, x_or_y_gram, z_samples, z_first)[1]


def hsic_population_mc(sampler, kernel_x, kernel_y, draws, rng):
    """Monte Carlo estimate of population HSIC with independent copies.

    ``E[k(X,X') l(Y,Y')] - 2 E[k(X,X') l(Y,Y'')] + E[k(X,X')] E[l(Y,Y')]``.
    ``sampler(n, rng)`` returns ``(x, y)`` arrays of ``n`` joint draws.
    Returns ``(estimate, standard_error)``; the standard error comes from the
    per-draw influence terms (delta method on the product term).
    """
    if draws < 1000:
        raise ParameterError(f"draws must be >= 1000, got {draws}")
    x, y = sampler(draws, rng)
    x1, y1 = sampler(draws, rng)
    x2, y2 = sampler(draws, rng)
    k = _pairwise(kernel_x, x, x1)
    l1 = _pairwise(kernel_y, y, y1)
    l2 = _pairwise(kernel_y, y, y2)
    a = k * l1
    b = k * l2
    ek, el = k.mean(), l1.mean()
    estimate = a.mean() - 2 * b.mean() + ek * el
    influence = a - 2 * b + el * k + ek * l1
    se = influence.std(ddof=1) / np.sqrt(draws)
    return float(estimate), float(se)


def _pairwise(descriptor, u, v):
    u = np.asarray(u, dtype=np.float64).reshape(len(u), -1)
    v = np.asarray(v, dtype=np.float64).reshape(len(v), -1)
    if descriptor.kind == "linear":
        return np.einsum("ij,ij->i", u, v)
    d2 = np.sum((u - v) ** 2, axis=1)
    return np.exp(-d2 / (2 * descriptor.sigma**2))
