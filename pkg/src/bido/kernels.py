"""Gaussian and linear Gram matrices plus their gradients w.r.t. the samples."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DimensionError


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class KernelDescriptor:
    kind: str  # "gaussian" or "linear"
    sigma: Optional[float] = None
    input_dim: Optional[int] = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ParameterError(f"gaussian kernel needs sigma > 0, got {self.sigma}")
        elif self.kind == "linear":
            if self.sigma is not None:
                raise ParameterError("linear kernel takes no sigma")
        else:
            raise ParameterError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian_for_dim(cls, dim):
        return cls("gaussian", default_sigma(dim), dim)

    def gram(self, samples):
        if self.kind == "gaussian":
            return gaussian_gram(samples, self.sigma)
        return linear_gram(samples)


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray
    descriptor: KernelDescriptor

    @property
    def sample_count(self):
        return self.matrix.shape[0]


def default_sigma(dim):
    """Bandwidth rule ``5 * sqrt(dim)`` for Gaussian kernels."""
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    return 5.0 * np.sqrt(dim)


def _as_samples(samples):
    try:
        x = np.asarray(samples, dtype=np.float64)
    except ValueError as exc:  # ragged input
        raise DimensionError(f"samples have mismatched dimensions: {exc}") from None
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"samples must be an (n, d) array, got shape {x.shape}")
    return x


def _sq_dists(x):
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    # symmetrize to remove round-off asymmetry from the matmul
    return 0.5 * (d2 + d2.T)


def gaussian_gram(samples, sigma):
    """``K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    x = _as_samples(samples)
    K = np.exp(-_sq_dists(x) / (2.0 * sigma**2))
    return GramMatrix(K, KernelDescriptor("gaussian", float(sigma), x.shape[1]))


def linear_gram(samples):
    x = _as_samples(samples)
    return GramMatrix(x @ x.T, KernelDescriptor("linear", None, x.shape[1]))


def gram_gradient_wrt_samples(gram, samples, upstream):
    """Gradient of ``sum_ij upstream_ij * K_ij`` with respect to every sample.

    ``upstream`` need not be symmetric. Returns an array shaped like ``samples``.
    """
    x = _as_samples(samples)
    U = np.asarray(upstream, dtype=np.float64)
    K = gram.matrix
    if U.shape != K.shape or K.shape[0] != x.shape[0]:
        raise DimensionError(
            f"upstream {U.shape}, gram {K.shape} and samples {x.shape} disagree"
        )
    S = U + U.T
    if gram.descriptor.kind == "linear":
        return S @ x
    W = S * K
    # sum_j W_ij (x_j - x_i) / sigma^2 is shift invariant; shifting by x_0
    # keeps coincident samples at exactly zero gradient
    xs = x - x[0]
    return (W @ xs - W.sum(axis=1)[:, None] * xs) / gram.descriptor.sigma**2
