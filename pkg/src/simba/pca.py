"""Dimensionality reduction of the reference matrix by SVD."""

import warnings

import numpy as np
from dataclasses import dataclass

from .reference import ReferenceMatrix


@dataclass
class ReducedMatrix:
    data: np.ndarray               # (n_kept, n_interleaves) component scores
    explained_variance: np.ndarray # fraction per computed component, non-increasing
    n_pc_total: int
    discarded_first: bool

    def points(self) -> np.ndarray:
        """Interleaves as row points for clustering, shape (n_interleaves, n_kept)."""
        return np.ascontiguousarray(self.data.T)


def reduce(S, n_pc: int = 20, discard_first: bool = True) -> ReducedMatrix:
    """Project the row-centered reference matrix onto its top principal axes.

    Rows (features) are mean-centered across interleaves, then an SVD yields
    per-interleaf scores sigma_j * v_j for the top ``n_pc`` components.  The
    first component is dropped when ``discard_first``.  Sign convention: the
    largest-magnitude entry of every component direction is made positive, so
    scores do not depend on the linear-algebra backend.
    """
    data = S.data if isinstance(S, ReferenceMatrix) else np.asarray(S, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("reference matrix must be 2D")
    max_pc = min(data.shape)
    if n_pc > max_pc:
        raise ValueError(f"n_pc={n_pc} exceeds min(matrix dims)={max_pc}")
    if discard_first and n_pc < 2:
        raise ValueError("need n_pc >= 2 when discarding the first component")

    centered = data - data.mean(axis=1, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)

    # deterministic sign: flip components whose extreme entry is negative
    flip = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])] < 0
    vt = np.where(flip[:, None], -vt, vt)

    total = float(np.sum(s ** 2))
    explained = (s[:n_pc] ** 2 / total) if total > 0 else np.zeros(n_pc)
    scores = s[:n_pc, None] * vt[:n_pc]
    if discard_first:
        scores = scores[1:]
    return ReducedMatrix(data=scores, explained_variance=explained,
                         n_pc_total=n_pc, discarded_first=discard_first)


def reduce_reference(S, n_pc: int = 20, discard_first: bool = True) -> ReducedMatrix:
    """Like :func:`reduce` but clamps n_pc to the matrix rank bound with a
    warning instead of failing, for small desk-scale runs."""
    max_pc = min(S.data.shape if isinstance(S, ReferenceMatrix) else np.shape(S))
    if n_pc > max_pc:
        warnings.warn(f"n_pc={n_pc} reduced to min(matrix dims)={max_pc}")
        n_pc = max_pc
    return reduce(S, n_pc=n_pc, discard_first=discard_first)
