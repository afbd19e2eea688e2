"""Dense matrix helpers: centering, spectral norm, and a finite-difference gradient checker."""

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not satisfy an operation's contract."""


class EvaluationError(ArithmeticError):
    """Raised when a function under gradient check returns a non-finite value."""


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def centering_matrix(n):
    """Return ``H = I - 11^T / n``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def center_gram(K):
    """Doubly center a square matrix, i.e. ``H K H``.

    Implemented by subtracting row, column and grand means, which equals the
    triple product exactly in exact arithmetic and costs O(n^2).
    """
    K = as_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise DimensionError(f"K must be square, got shape {K.shape}")
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def top_singular_pair(A, tol=1e-12, max_iter=10_000):
    """Largest singular value of ``A`` with its left/right singular vectors.

    Power iteration on ``G = A^T A``, started from the largest-norm column of
    ``G``. That start is deterministic and lies in the range of ``G``; the
    all-ones vector would not do, since centered matrices annihilate it.
    Stops once the eigen-residual ``||G v - s^2 v||`` drops below
    ``tol * s^2``; for a symmetric matrix that bounds the error of ``s^2``.

    Returns ``(sigma, u, v)`` with ``A v = sigma u``. For ``A = 0`` the vectors
    are arbitrary unit vectors and ``sigma = 0``.
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    G = A.T @ A
    col_norms = np.einsum("ij,ij->j", G, G)
    k = int(np.argmax(col_norms))
    if col_norms[k] == 0.0:
        return 0.0, np.eye(m)[0], np.eye(n)[0]
    w = G[:, k].copy()
    for _ in range(max_iter):
        v = w / np.linalg.norm(w)
        w = G @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * lam:
            break
    sigma = np.sqrt(max(lam, 0.0))
    Av = A @ v
    norm_av = np.linalg.norm(Av)
    u = Av / norm_av if norm_av > 0 else np.eye(m)[0]
    return float(sigma), u, v


def spectral_norm(A, tol=1e-12, max_iter=10_000):
    """Largest singular value of ``A``."""
    return top_singular_pair(A, tol=tol, max_iter=max_iter)[0]


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    probe_count: int
    tolerance: float

    @property
    def passed(self):
        return self.max_relative_error < self.tolerance


def finite_diff_check(f, grad_f, probe, step=1e-5, tolerance=1e-4):
    """Compare ``grad_f(probe)`` against central differences of ``f``.

    The per-coordinate relative error uses ``max(|analytic|, |numeric|, 1e-8)``
    as denominator. ``probe`` may have any shape; ``grad_f`` must return an
    array of the same shape.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step must lie in [1e-7, 1e-3], got {step}")
    x = np.array(probe, dtype=np.float64)
    analytic = np.asarray(grad_f(x.copy()), dtype=np.float64)
    if analytic.shape != x.shape:
        raise DimensionError(f"gradient shape {analytic.shape} != probe shape {x.shape}")
    numeric = np.empty_like(x)
    flat, num_flat = x.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x.copy()))
        flat[i] = orig - step
        fm = float(f(x.copy()))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite function value near coordinate {i}")
        num_flat[i] = (fp - fm) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    err = float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
    return GradientCheckReport(err, x.size, tolerance)
