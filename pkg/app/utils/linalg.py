"""
Small linear-algebra helpers shared by the subspace searches.
"""
import numpy as np
from scipy.linalg import null_space, orth

INTERSECTION_TOL = 1e-6


def sign_normalize(vector: np.ndarray) -> np.ndarray:
    """Flip ``vector`` so its first entry of largest magnitude is positive."""
    pivot = int(np.argmax(np.abs(vector)))
    return -vector if vector[pivot] < 0 else vector


def unit_columns(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=0)
    return matrix / np.where(norms > 0, norms, 1.0)


def numerical_rank(matrix: np.ndarray, rel_tol: float) -> int:
    """Count singular values above ``rel_tol`` times the largest one."""
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def span_basis(matrix: np.ndarray, rel_tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical column space."""
    if matrix.size == 0:
        return np.zeros((matrix.shape[0], 0))
    return orth(matrix, rcond=rel_tol)


def complement_frame(vectors: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(vectors) in R^dim."""
    if vectors.size == 0:
        return np.eye(dim)
    return null_space(vectors.T)


def new_directions(span: np.ndarray, collected: np.ndarray, tol: float = INTERSECTION_TOL) -> np.ndarray:
    """
    Directions of ``span`` orthogonal to its intersection with ``collected``.

    Both arguments hold orthonormal columns. Principal angles near zero mark
    the shared directions; the rest of ``span`` is returned.
    """
    if collected.size == 0 or span.size == 0:
        return span
    u, sigma, _ = np.linalg.svd(span.T @ collected, full_matrices=True)
    shared = np.zeros(span.shape[1], dtype=bool)
    shared[:len(sigma)] = sigma > 1.0 - tol
    return span @ u[:, ~shared]
