"""Proximal operators and projections."""

import numpy as np

from noncoherent.doa.errors import ArgumentError


def _check_threshold(value: float) -> None:
    if not value >= 0:
        raise ArgumentError(f"threshold must be non-negative, got {value}")


def _check_square(V: np.ndarray) -> None:
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {V.shape}")


def group_shrink(Z: np.ndarray, tau: float) -> np.ndarray:
    """Scale each row by max(1 - tau / ||row||, 0)."""
    _check_threshold(tau)
    Z = np.asarray(Z)
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    scale = np.where(norms > tau, 1.0 - tau / safe, 0.0)
    return Z * scale


def prox_group_l12(Z: np.ndarray, beta: float) -> np.ndarray:
    """Proximal map of beta * ||G||_{1,2} + ||G - Z||_F^2.

    Rows whose norm is at most beta / 2 are set to zero, the others are
    shrunk towards the origin by beta / 2.
    """
    _check_threshold(beta)
    return group_shrink(Z, beta / 2)


def soft_threshold(z: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft-threshold, entry by entry."""
    z = np.asarray(z)
    return group_shrink(z.reshape(-1, 1), tau).reshape(z.shape)


def prox_nuclear(G: np.ndarray, mu: float) -> np.ndarray:
    """Proximal map of mu * ||Z||_* + ||Z - G||_F^2.

    Singular values are shrunk by mu / 2. Tall matrices go through the
    eigendecomposition of their (cols x cols) Gram matrix.
    """
    _check_threshold(mu)
    G = np.asarray(G)
    tau = mu / 2
    if tau == 0:
        return G.copy()

    rows, cols = G.shape
    if rows < cols:
        U, s, Vh = np.linalg.svd(G, full_matrices=False)
        return (U * np.maximum(s - tau, 0.0)) @ Vh

    # G^H G = V diag(s^2) V^H, so G V = U diag(s)
    eigval, V = np.linalg.eigh(G.conj().T @ G)
    s = np.sqrt(np.clip(eigval, 0.0, None))
    keep = s > tau
    if not np.any(keep):
        return np.zeros_like(G)

    V = V[:, keep]
    scale = 1.0 - tau / s[keep]
    return ((G @ V) * scale) @ V.conj().T


def project_diag_ones(V: np.ndarray) -> np.ndarray:
    """Set the diagonal to one."""
    V = np.array(V, copy=True)
    _check_square(V)
    np.fill_diagonal(V, 1.0)
    return V


def project_psd(V: np.ndarray) -> np.ndarray:
    """Nearest Hermitian PSD matrix in Frobenius norm."""
    V = np.asarray(V)
    _check_square(V)
    H = (V + V.conj().T) / 2
    eigval, U = np.linalg.eigh(H)
    P = (U * np.clip(eigval, 0.0, None)) @ U.conj().T
    return (P + P.conj().T) / 2
