"""Slow, independent reference computations used to validate the fast paths.

Nothing in the training or attack code imports this module; it backs the test
suite and the ``selftest`` command.
"""

import numpy as np


def hsic_naive(K, L):
    """``Tr(K H L H) / (N-1)^2`` by expanding the trace as an explicit quadruple sum."""
    K = np.asarray(K, dtype=np.float64).tolist()
    L = np.asarray(L, dtype=np.float64).tolist()
    n = len(K)
    H = [[(1.0 if i == j else 0.0) - 1.0 / n for j in range(n)] for i in range(n)]
    total = 0.0
    for i in range(n):
        Ki, Hi_col = K[i], [H[l][i] for l in range(n)]
        for j in range(n):
            kij = Ki[j]
            Hj = H[j]
            for k in range(n):
                hjk = Hj[k]
                if hjk == 0.0:
                    continue
                Lk = L[k]
                inner = 0.0
                for l in range(n):
                    inner += Lk[l] * Hi_col[l]
                total += kij * hjk * inner
    return total / (n - 1) ** 2


def jacobi_svd(A, tol=1e-15, max_sweeps=100):
    """Singular values of ``A`` by one-sided (Hestenes) Jacobi rotations, descending."""
    U = np.array(A, dtype=np.float64, copy=True)
    if U.shape[0] < U.shape[1]:
        U = U.T.copy()
    n = U.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up, uq = U[:, p], U[:, q]
                alpha = up @ up
                beta = uq @ uq
                gamma = up @ uq
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * up - s * uq
                new_q = s * up + c * uq
                U[:, p], U[:, q] = new_p, new_q
        if not rotated:
            break
    return np.sort(np.linalg.norm(U, axis=0))[::-1]


def spectral_norm_svd(A):
    return float(jacobi_svd(A)[0])


def coco_svd(K, L):
    """COCO through an explicit ``H K H`` triple product and the Jacobi SVD."""
    K = np.asarray(K, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    n = K.shape[0]
    H = np.eye(n) - np.ones((n, n)) / n
    return np.sqrt(spectral_norm_svd((H @ K @ H) @ (H @ L @ H))) / n


def permutation_null(K, L, n_perm, rng, statistic=None):
    """Values of ``statistic(K, L[pi][:, pi])`` for ``n_perm`` random permutations."""
    if statistic is None:
        def statistic(A, B):
            n = A.shape[0]
            H = np.eye(n) - np.ones((n, n)) / n
            return np.trace(A @ H @ B @ H) / (n - 1) ** 2
    n = K.shape[0]
    out = np.empty(n_perm)
    for b in range(n_perm):
        p = rng.permutation(n)
        out[b] = statistic(K, L[np.ix_(p, p)])
    return out


def central_interval_contains(value, null, coverage=0.99):
    lo, hi = np.quantile(null, [(1 - coverage) / 2, 1 - (1 - coverage) / 2])
    return bool(lo <= value <= hi)
