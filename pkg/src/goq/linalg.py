"""Symmetric eigendecomposition by cyclic Jacobi rotations.

The weighting matrices handled here are tiny (p <= 3), so a plain cyclic
rotation scheme is exact enough and keeps the dependency surface small. A
vectorized 2x2 path serves the quadrature grids, where thousands of
eigenvalue pairs are needed per call.
"""

from __future__ import annotations

import numpy as np

__all__ = ["jacobi_eigh", "sym_eigvals_2x2_batch", "min_eigvec_2x2_batch"]


def jacobi_eigh(mat: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64):
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix.

    Cyclic-by-row Jacobi; stops when the off-diagonal Frobenius norm drops
    below ``tol`` times the matrix scale.
    """
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected square matrix, got {a.shape}")
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = 0.5 * (a + a.T)
                v = v @ rot
    order = np.argsort(np.diag(a))
    return np.diag(a)[order], v[:, order]


def sym_eigvals_2x2_batch(mats: np.ndarray) -> np.ndarray:
    """Eigenvalue pairs (ascending) for a (n, 2, 2) symmetric batch.

    This is the single Jacobi rotation of the 2x2 case applied in closed form,
    written to broadcast.
    """
    a = mats[:, 0, 0]
    b = 0.5 * (mats[:, 0, 1] + mats[:, 1, 0])
    c = mats[:, 1, 1]
    half_tr = 0.5 * (a + c)
    rad = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    return np.stack([half_tr - rad, half_tr + rad], axis=1)


def min_eigvec_2x2_batch(mats: np.ndarray) -> np.ndarray:
    """Unit eigenvectors of the smaller eigenvalue for a (n, 2, 2) batch."""
    w = sym_eigvals_2x2_batch(mats)[:, 0]
    a = mats[:, 0, 0]
    b = 0.5 * (mats[:, 0, 1] + mats[:, 1, 0])
    c = mats[:, 1, 1]
    # (A - w I) v = 0; pick the better-conditioned row
    v1 = np.stack([b, w - a], axis=1)
    v2 = np.stack([w - c, b], axis=1)
    use2 = np.linalg.norm(v1, axis=1) < np.linalg.norm(v2, axis=1)
    v = np.where(use2[:, None], v2, v1)
    nrm = np.linalg.norm(v, axis=1, keepdims=True)
    # diagonal matrices: eigenvector along the smaller diagonal entry
    fallback = np.where((a <= c)[:, None], [[1.0, 0.0]], [[0.0, 1.0]])
    return np.where(nrm > 1e-300, v / np.maximum(nrm, 1e-300), fallback)
