"""Reference data matrix built from the SI readouts.

Each interleaf contributes one column: the magnitude SI projections of the
selected coils are differentiated along the readout and standardized per
coil block, which removes per-coil offsets and scale so the columns depend
on anatomy position rather than sequence contrast.
"""

import numpy as np
from dataclasses import dataclass

from .phantom import KSpaceData

# blocks whose gradient is (numerically) constant carry no motion
# information and are zeroed instead of dividing by ~0
_VAR_FLOOR = 1e-24


@dataclass
class ReferenceMatrix:
    data: np.ndarray        # (n_coils*(n_samples-1), n_interleaves) float64
    coil_ids: tuple         # the selected coil indices, column order = acquisition

    @property
    def n_interleaves(self) -> int:
        return self.data.shape[1]


def si_projection(si_samples: np.ndarray) -> np.ndarray:
    """Magnitude of the centered inverse 1D DFT of one SI readout.

    Input samples are ordered along the spoke from -k_max to +k_max; the
    output projection has its DC component at index n//2.  Works on stacked
    readouts too (transform runs along the last axis).
    """
    si_samples = np.asarray(si_samples)
    if si_samples.shape[-1] < 2:
        raise ValueError("readout must hold at least 2 samples")
    spec = np.fft.ifftshift(si_samples, axes=-1)
    proj = np.fft.fftshift(np.fft.ifft(spec, axis=-1), axes=-1)
    return np.abs(proj)


def standardize_block(block: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance (population) copy; all-constant blocks -> zeros."""
    mean = block.mean(axis=-1, keepdims=True)
    var = block.var(axis=-1, keepdims=True)
    out = np.where(var > _VAR_FLOOR, (block - mean) / np.sqrt(np.maximum(var, _VAR_FLOOR)), 0.0)
    return out


def build_reference_matrix(kspace: KSpaceData, coil_ids) -> ReferenceMatrix:
    """Stack standardized SI-projection gradients of the selected coils.

    For every interleaf and coil: projection -> forward difference
    g[j] = p[j+1] - p[j] -> standardize -> stack the coil blocks into one
    column.  Output shape is (len(coil_ids)*(n_samples-1), n_interleaves).
    """
    coil_ids = tuple(int(c) for c in coil_ids)
    if len(set(coil_ids)) != len(coil_ids):
        raise ValueError("coil_ids must be distinct")
    if any(c < 0 or c >= kspace.n_coils for c in coil_ids):
        raise ValueError(f"coil_ids out of range 0..{kspace.n_coils - 1}")
    if np.any(kspace.si_indices < 0) or np.any(kspace.si_indices >= kspace.n_readouts):
        raise ValueError("missing SI readout index")

    si = kspace.si_readouts()[list(coil_ids)]        # (n_sel, n_il, n_samples)
    proj = si_projection(si)
    grad = np.diff(proj, axis=-1)                    # (n_sel, n_il, n_samples-1)
    blocks = standardize_block(grad)
    n_sel, n_il, rows = blocks.shape
    data = blocks.transpose(0, 2, 1).reshape(n_sel * rows, n_il)
    return ReferenceMatrix(data=np.ascontiguousarray(data), coil_ids=coil_ids)
