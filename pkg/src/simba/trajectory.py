"""Spiral-phyllotaxis 3D radial trajectories and k-space uniformity statistics.

Spokes are unit direction vectors on the upper hemisphere; each spoke samples
k-space along a diameter at normalized radii in [-0.5, 0.5] (cycles per voxel
of the target matrix, so 0.5 is the Nyquist edge).  Every interleaf starts
with a superior-inferior (SI) readout pointing exactly along +z, which serves
as motion reference data rather than imaging data.
"""

import numpy as np
from dataclasses import dataclass, field

# golden angle in radians: 2*pi*(1 - 1/golden_ratio) = pi*(3 - sqrt(5)) = 137.50776...deg
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# brute-force neighbor search above this point count gets too slow; use a k-d tree
_KDTREE_MIN_POINTS = 512


@dataclass
class RadialTrajectory:
    """Ordered interleaves of unit spoke directions with timestamps and radii.

    directions : (n_interleaves, n_readouts, 3) float64, unit vectors
    timestamps : (n_interleaves, n_readouts) float64, seconds; i*tr for the
                 i-th readout in flattened acquisition order
    radii      : (n_samples,) float64, shared by all spokes, in [-0.5, 0.5]
    si_index   : readout index of the SI spoke within each interleaf
    fov        : optional field of view in mm, set when the trajectory is
                 generated for a particular scene; not serialized
    """

    directions: np.ndarray
    timestamps: np.ndarray
    radii: np.ndarray
    tr: float
    si_index: int = 0
    fov: float | None = None

    @property
    def n_interleaves(self) -> int:
        return self.directions.shape[0]

    @property
    def n_readouts(self) -> int:
        return self.directions.shape[1]

    @property
    def n_samples(self) -> int:
        return self.radii.shape[0]

    @property
    def n_spokes(self) -> int:
        return self.n_interleaves * self.n_readouts

    def flat_directions(self) -> np.ndarray:
        """All spoke directions in acquisition order, shape (n_spokes, 3)."""
        return self.directions.reshape(-1, 3)

    def imaging_spoke_indices(self) -> np.ndarray:
        """Flat indices of all non-SI (imaging) spokes, ascending."""
        mask = np.ones((self.n_interleaves, self.n_readouts), dtype=bool)
        mask[:, self.si_index] = False
        return np.flatnonzero(mask.reshape(-1))

    def imaging_directions(self) -> np.ndarray:
        """Directions of the imaging spokes only (SI navigators excluded)."""
        return self.flat_directions()[self.imaging_spoke_indices()]

    def sample_coords(self, spoke_indices=None) -> np.ndarray:
        """Normalized k-space sample locations, shape (n_sel, n_samples, 3)."""
        dirs = self.flat_directions()
        if spoke_indices is not None:
            dirs = dirs[np.asarray(spoke_indices)]
        return self.radii[None, :, None] * dirs[:, None, :]


@dataclass
class UniformityReport:
    """Nearest-neighbor great-circle statistics of a direction set."""

    mean_distance: float      # radians
    rsd: float                # stddev/mean of the per-point neighbor means
    n_neighbors: int
    per_point_mean: np.ndarray = field(repr=False, default=None)


def generate_phyllotaxis(n_interleaves: int, n_readouts: int, n_samples: int,
                         tr: float) -> RadialTrajectory:
    """Generate a golden-angle spiral-phyllotaxis trajectory with SI readouts.

    Spoke n of the underlying spiral sits at polar angle
    theta_n = (pi/2)*sqrt(n/N) and azimuth n*GOLDEN_ANGLE, with
    N = n_interleaves*n_readouts.  The spiral is split into interleaves by
    stride: readout m of interleaf i is spiral spoke m*n_interleaves + i, so
    consecutive interleaves are golden-angle rotated copies of each other.
    The first readout of each interleaf is replaced by an exact +z (SI)
    spoke; the nominal spoke it displaces is dropped.

    Parameters
    ----------
    n_interleaves, n_readouts : trajectory geometry, both >= 1
    n_samples : samples per spoke, >= 2
    tr : repetition time in seconds; readout i (flattened) gets timestamp i*tr
    """
    if n_interleaves < 1 or n_readouts < 1:
        raise ValueError("n_interleaves and n_readouts must be >= 1")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if tr <= 0:
        raise ValueError("tr must be positive")

    n_total = n_interleaves * n_readouts
    n = np.arange(n_total, dtype=np.float64)
    theta = 0.5 * np.pi * np.sqrt(n / n_total)
    phi = n * GOLDEN_ANGLE
    spiral = np.stack([np.sin(theta) * np.cos(phi),
                       np.sin(theta) * np.sin(phi),
                       np.cos(theta)], axis=1)

    # stride reordering: directions[i, m] = spiral spoke m*n_interleaves + i
    directions = np.ascontiguousarray(
        spiral.reshape(n_readouts, n_interleaves, 3).transpose(1, 0, 2))
    directions[:, 0, :] = (0.0, 0.0, 1.0)   # SI readout, nominal spoke dropped

    timestamps = tr * np.arange(n_total, dtype=np.float64).reshape(
        n_interleaves, n_readouts)
    radii = (np.arange(n_samples, dtype=np.float64) - n_samples // 2) / n_samples
    return RadialTrajectory(directions=directions, timestamps=timestamps,
                            radii=radii, tr=tr, si_index=0)


def _neighbor_indices_brute(directions: np.ndarray, n_neighbors: int) -> np.ndarray:
    dots = np.clip(directions @ directions.T, -1.0, 1.0)
    dist = np.arccos(dots)
    np.fill_diagonal(dist, np.inf)
    # argsort is stable, so equal distances resolve by index order
    return np.argsort(dist, axis=1, kind="stable")[:, :n_neighbors]


def _neighbor_indices_tree(directions: np.ndarray, n_neighbors: int) -> np.ndarray:
    from scipy.spatial import cKDTree

    # chord length is monotone in great-circle angle, so Euclidean k-NN on the
    # unit vectors selects the same neighbors
    tree = cKDTree(directions)
    _, idx = tree.query(directions, k=n_neighbors + 1)
    out = np.empty((directions.shape[0], n_neighbors), dtype=np.intp)
    for i in range(directions.shape[0]):
        row = idx[i]
        row = row[row != i][:n_neighbors]
        if row.shape[0] < n_neighbors:       # self dropped twice on exact ties
            extra = [j for j in idx[i] if j != i and j not in row]
            row = np.concatenate([row, extra])[:n_neighbors]
        out[i] = row
    return out


def great_circle_uniformity(directions: np.ndarray, n_neighbors: int = 4) -> UniformityReport:
    """Average great-circle distance to the nearest neighbors, and its RSD.

    For every direction the arccos distances to its ``n_neighbors`` nearest
    other points are averaged; the report holds the mean of those per-point
    means and their relative standard deviation (population stddev / mean).
    Ties at the neighbor cutoff are broken by index order, which leaves the
    averaged values unchanged.
    """
    directions = np.asarray(directions, dtype=np.float64)
    n = directions.shape[0]
    if directions.ndim != 2 or directions.shape[1] != 3:
        raise ValueError("directions must have shape (n, 3)")
    if n < n_neighbors + 1:
        raise ValueError(f"need at least {n_neighbors + 1} directions, got {n}")
    norms = np.linalg.norm(directions, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError("directions must be unit vectors")

    if n <= _KDTREE_MIN_POINTS:
        idx = _neighbor_indices_brute(directions, n_neighbors)
    else:
        idx = _neighbor_indices_tree(directions, n_neighbors)

    # exact angles for the selected neighbors, summed in sorted order so the
    # result is identical whichever search path picked the (tied) neighbors
    dots = np.clip(np.einsum("id,ikd->ik", directions, directions[idx]), -1.0, 1.0)
    ang = np.sort(np.arccos(dots), axis=1)
    per_point = ang.mean(axis=1)

    mean = float(per_point.mean())
    rsd = float(per_point.std() / mean) if mean > 0 else 0.0
    return UniformityReport(mean_distance=mean, rsd=rsd,
                            n_neighbors=n_neighbors, per_point_mean=per_point)


def radial_nyquist_fraction(n_spokes: int, matrix_size: int) -> float:
    """Fraction of the 3D radial Nyquist spoke count pi*matrix^2/2."""
    if n_spokes < 1:
        raise ValueError("n_spokes must be >= 1")
    if matrix_size < 2:
        raise ValueError("matrix_size must be >= 2")
    return n_spokes / (np.pi * matrix_size ** 2 / 2.0)
