"""Dynamic analytical ellipsoid phantom with multi-coil k-space sampling.

The scene is a set of uniform ellipsoids whose semi-axes breathe with a
cardiac activation waveform and whose centers translate with a respiratory
waveform.  K-space samples are computed from the closed-form Fourier
transform of a uniform ellipsoid, so there is no rasterization anywhere in
the signal path.  Every readout carries ground-truth cardiac/respiratory
phase labels in place of a recorded physiological signal.
"""

import numpy as np
from dataclasses import dataclass, field

from .trajectory import RadialTrajectory

_CHUNK_SPOKES = 4096


@dataclass
class Ellipsoid:
    name: str
    center: np.ndarray            # mm, (3,)
    semi_axes: np.ndarray         # mm, (3,), strictly positive
    amplitude: float              # additive signal amplitude
    cardiac_scaling: float = 0.0  # fractional semi-axis contraction at peak
    respiratory_shift: np.ndarray = None  # mm, (3,), displacement at peak

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.semi_axes = np.asarray(self.semi_axes, dtype=np.float64)
        if self.respiratory_shift is None:
            self.respiratory_shift = np.zeros(3)
        self.respiratory_shift = np.asarray(self.respiratory_shift, dtype=np.float64)
        if np.any(self.semi_axes <= 0):
            raise ValueError(f"ellipsoid {self.name!r}: semi-axes must be positive")


@dataclass
class CoilProfile:
    """Isotropic Gaussian receive profile centered on the chest surface."""

    center: np.ndarray   # mm, (3,)
    sigma: float         # mm

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Sensitivity at physical points, shape (..., 3) -> (...)."""
        d2 = np.sum((np.asarray(points) - self.center) ** 2, axis=-1)
        return np.exp(-d2 / (2.0 * self.sigma ** 2))


@dataclass
class PhantomScene:
    ellipsoids: list
    cardiac_period: float = 0.9          # s
    respiratory_period: float = 4.0      # s
    rr_jitter: float = 0.05              # fractional beat-to-beat variation
    fov: np.ndarray = None               # mm, (3,)
    matrix_size: int = 96                # defines the acquired resolution fov/matrix
    coils: list = None                   # exactly 4 CoilProfile entries
    noise_sigma: float = 0.0             # per-component complex noise sd
    seed: int = 0
    systolic_fraction: float = 0.35      # cardiac activation width / systole length

    def __post_init__(self):
        if self.fov is None:
            self.fov = np.full(3, 200.0)
        self.fov = np.asarray(self.fov, dtype=np.float64)
        if np.any(self.fov <= 0):
            raise ValueError("fov must be positive")
        if not self.cardiac_period < self.respiratory_period:
            raise ValueError("cardiac_period must be shorter than respiratory_period")
        if self.coils is None:
            self.coils = default_coils(self.fov)
        if len(self.coils) != 4:
            raise ValueError("scene requires exactly 4 coil profiles")
        if not 0.0 < self.systolic_fraction < 1.0:
            raise ValueError("systolic_fraction must be in (0, 1)")

    @property
    def voxel_size(self) -> np.ndarray:
        return self.fov / self.matrix_size


@dataclass
class GroundTruthLabels:
    """Per-readout motion state, shaped (n_interleaves, n_readouts)."""

    cardiac_phase: np.ndarray          # in [0, 1) within the current beat
    respiratory_phase: np.ndarray      # in [0, 1)
    respiratory_activation: np.ndarray # normalized displacement in [0, 1]
    cardiac_bin: np.ndarray = None     # uint8, 1 = systole, 0 = diastole
    respiratory_bin: np.ndarray = None # uint8, 1..n_resp_bins, 1 = end-expiration
    systole_fraction: float = None
    r_wave_times: np.ndarray = field(default=None, repr=False)
    beat_periods: np.ndarray = field(default=None, repr=False)

    @property
    def n_readouts_total(self) -> int:
        return self.cardiac_phase.size


@dataclass
class KSpaceData:
    """Complex radial samples indexed by (coil, interleaf, readout, sample)."""

    data: np.ndarray              # complex64
    tr: float
    si_indices: np.ndarray        # (n_interleaves,) int32, SI readout per interleaf

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]

    @property
    def n_interleaves(self) -> int:
        return self.data.shape[1]

    @property
    def n_readouts(self) -> int:
        return self.data.shape[2]

    @property
    def n_samples(self) -> int:
        return self.data.shape[3]

    def flat(self) -> np.ndarray:
        """View shaped (n_coils, n_spokes, n_samples) in acquisition order."""
        return self.data.reshape(self.n_coils, -1, self.n_samples)

    def si_readouts(self) -> np.ndarray:
        """SI readout samples per interleaf, shape (n_coils, n_interleaves, n_samples)."""
        idx = np.arange(self.n_interleaves)
        return self.data[:, idx, self.si_indices, :]


def default_coils(fov: np.ndarray) -> list:
    """Four chest-surface coils on the anterior plane (negative y)."""
    fx, fy, fz = np.asarray(fov, dtype=np.float64)
    y = -0.35 * fy
    dx, dz = 0.22 * fx, 0.18 * fz
    sigma = 0.45 * float(np.mean(fov))
    return [CoilProfile(center=(sx * dx, y, sz * dz), sigma=sigma)
            for sz in (+1, -1) for sx in (-1, +1)]


def default_scene(fov_mm: float = 200.0, matrix_size: int = 96,
                  noise_sigma: float = 30.0, seed: int = 0,
                  cardiac_period: float = 0.9, respiratory_period: float = 4.0,
                  rr_jitter: float = 0.05) -> PhantomScene:
    """Desk-scale thorax: breathing liver/chest, beating ventricle shell, and a
    small bright vessel next to the heart as the sharpness target."""
    ellipsoids = [
        Ellipsoid("thorax", (0, 0, 0), (80, 62, 95), 0.5,
                  respiratory_shift=(0, 2, 0)),
        Ellipsoid("liver", (28, 8, -50), (42, 38, 32), 0.9,
                  respiratory_shift=(0, 3, 9)),
        # epicardium nearly static, endocardium contracts (wall thickening)
        Ellipsoid("myocardium", (-18, -2, 12), (34, 31, 40), 0.35,
                  cardiac_scaling=0.06, respiratory_shift=(0, 2, 5)),
        Ellipsoid("blood_pool", (-18, -2, 12), (25, 22, 30), 0.85,
                  cardiac_scaling=0.25, respiratory_shift=(0, 2, 5)),
        Ellipsoid("vessel", (-50, -20, 14), (3, 3, 18), 1.0,
                  cardiac_scaling=0.10, respiratory_shift=(0, 3, 8)),
    ]
    return PhantomScene(ellipsoids=ellipsoids, cardiac_period=cardiac_period,
                        respiratory_period=respiratory_period, rr_jitter=rr_jitter,
                        fov=np.full(3, float(fov_mm)), matrix_size=matrix_size,
                        noise_sigma=noise_sigma, seed=seed)


def beat_schedule(scene: PhantomScene, duration: float):
    """R-wave times and per-beat periods covering [0, duration].

    Beat i lasts cardiac_period*(1 + U(-rr_jitter, +rr_jitter)); the draw uses
    a dedicated substream of the scene seed so it is independent of the noise.
    """
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(scene.seed).spawn(2)[0]))
    n_beats = int(np.ceil(duration / (scene.cardiac_period * (1 - scene.rr_jitter)))) + 2
    jitter = rng.uniform(-scene.rr_jitter, scene.rr_jitter, size=n_beats)
    periods = scene.cardiac_period * (1.0 + jitter)
    starts = np.concatenate([[0.0], np.cumsum(periods)[:-1]])
    return starts, periods


def cardiac_phase(t, r_wave_times, periods):
    """Phase in [0, 1) within the beat containing each time point."""
    t = np.asarray(t, dtype=np.float64)
    beat = np.clip(np.searchsorted(r_wave_times, t, side="right") - 1,
                   0, len(periods) - 1)
    return (t - r_wave_times[beat]) / periods[beat]


def cardiac_activation(phase, systolic_fraction: float):
    """Raised-cosine contraction pulse rising over systole, peak at its end.

    Starts at 0, reaches 1 at phase == systolic_fraction, relaxes back to 0
    over the rest of the cycle; continuously differentiable.
    """
    phase = np.asarray(phase, dtype=np.float64)
    w = systolic_fraction
    rising = phase < w
    out = np.where(rising,
                   0.5 * (1.0 - np.cos(np.pi * phase / w)),
                   0.5 * (1.0 + np.cos(np.pi * (phase - w) / (1.0 - w))))
    return out


def respiratory_activation(phase):
    """Normalized breathing displacement; flat near 0 so end-expiration is the
    most common state."""
    phase = np.asarray(phase, dtype=np.float64)
    return (1.0 - np.cos(2.0 * np.pi * phase)) ** 2 / 4.0


def motion_state(scene: PhantomScene, t, r_wave_times=None, periods=None):
    """Instantaneous affine parameters of every ellipsoid.

    Returns (axis_scale, centers): axis_scale has shape t.shape + (n_ellipsoids,)
    and multiplies each ellipsoid's semi-axes; centers has shape
    t.shape + (n_ellipsoids, 3).
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if r_wave_times is None:
        r_wave_times, periods = beat_schedule(scene, float(np.max(t, initial=0.0)))
    c = cardiac_activation(cardiac_phase(t, r_wave_times, periods),
                           scene.systolic_fraction)
    r = respiratory_activation((t / scene.respiratory_period) % 1.0)

    n_e = len(scene.ellipsoids)
    axis_scale = np.empty(t.shape + (n_e,))
    centers = np.empty(t.shape + (n_e, 3))
    for j, e in enumerate(scene.ellipsoids):
        axis_scale[..., j] = 1.0 - e.cardiac_scaling * c
        centers[..., j, :] = e.center + r[..., None] * e.respiratory_shift
    return axis_scale, centers


def _ball_ft(rho: np.ndarray) -> np.ndarray:
    """3*(sin r - r*cos r)/r**3, the unit-ball transform shape, ->1 as r->0."""
    rho = np.asarray(rho)
    small = np.abs(rho) < 1e-3
    safe = np.where(small, 1.0, rho)
    out = 3.0 * (np.sin(safe) - safe * np.cos(safe)) / safe ** 3
    r2 = rho * rho
    return np.where(small, 1.0 - r2 / 10.0 + r2 * r2 / 280.0, out)


def analytic_coil_signal(scene: PhantomScene, k_phys: np.ndarray, t: np.ndarray,
                         r_wave_times=None, periods=None) -> np.ndarray:
    """Noiseless k-space signal of every coil.

    k_phys : (..., 3) sample locations in cycles/mm
    t      : (...) acquisition time of each sample (seconds)

    Returns (n_coils,) + broadcast shape, complex128.  Each ellipsoid
    contributes volume * ball_ft(2*pi*|scale*semi_axes*k|) with a phase ramp
    for its instantaneous center; the coil profile is evaluated at that
    center (small-object approximation, exact for point-like structures).
    """
    k_phys = np.asarray(k_phys, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if r_wave_times is None:
        r_wave_times, periods = beat_schedule(scene, float(np.max(t, initial=0.0)))
    c = cardiac_activation(cardiac_phase(t, r_wave_times, periods),
                           scene.systolic_fraction)
    r = respiratory_activation((t / scene.respiratory_period) % 1.0)

    shape = np.broadcast_shapes(k_phys.shape[:-1], t.shape)
    out = np.zeros((len(scene.coils),) + shape, dtype=np.complex128)
    for e in scene.ellipsoids:
        scale = 1.0 - e.cardiac_scaling * c                      # t.shape
        center = e.center + r[..., None] * e.respiratory_shift   # t.shape + (3,)
        rho = 2.0 * np.pi * scale * np.linalg.norm(e.semi_axes * k_phys, axis=-1)
        volume = (4.0 / 3.0) * np.pi * np.prod(e.semi_axes) * scale ** 3
        phase = np.exp(-2.0j * np.pi * np.sum(k_phys * center, axis=-1))
        base = e.amplitude * volume * _ball_ft(rho) * phase
        for ci, coil in enumerate(scene.coils):
            out[ci] += coil.evaluate(center) * base
    return out


def sample_kspace(scene: PhantomScene, traj: RadialTrajectory):
    """Simulate the full acquisition: (KSpaceData, GroundTruthLabels).

    Each readout is treated as instantaneous (all its samples share one
    timestamp).  Complex Gaussian noise of per-component sd ``noise_sigma``
    is added from one dedicated counter-based stream per coil, so the output
    is reproducible regardless of chunking.
    """
    if traj.fov is not None and not np.allclose(traj.fov, scene.fov):
        raise ValueError("trajectory FOV does not match scene FOV")
    n_il, n_rd, n_s = traj.n_interleaves, traj.n_readouts, traj.n_samples
    n_coils = len(scene.coils)
    t_flat = traj.timestamps.reshape(-1)
    duration = float(t_flat[-1]) + traj.tr
    r_waves, periods = beat_schedule(scene, duration)

    dirs = traj.flat_directions()
    inv_voxel = scene.matrix_size / scene.fov   # converts cycles/voxel -> cycles/mm
    out = np.empty((n_coils, n_il * n_rd, n_s), dtype=np.complex64)

    noise_root = np.random.SeedSequence(scene.seed).spawn(2)[1].generate_state(1)[0]
    noise_rngs = [np.random.Generator(np.random.Philox(key=(int(noise_root) << 16) + ci))
                  for ci in range(n_coils)]

    for lo in range(0, n_il * n_rd, _CHUNK_SPOKES):
        hi = min(lo + _CHUNK_SPOKES, n_il * n_rd)
        # (chunk, n_samples, 3) cycles/mm
        k_phys = (traj.radii[None, :, None] * dirs[lo:hi, None, :]) * inv_voxel
        sig = analytic_coil_signal(scene, k_phys, t_flat[lo:hi, None],
                                   r_waves, periods)
        if scene.noise_sigma > 0:
            for ci in range(n_coils):
                noise = noise_rngs[ci].standard_normal(((hi - lo) * n_s, 2))
                sig[ci] += scene.noise_sigma * (
                    noise[:, 0] + 1j * noise[:, 1]).reshape(hi - lo, n_s)
        out[:, lo:hi, :] = sig.astype(np.complex64)

    kspace = KSpaceData(data=out.reshape(n_coils, n_il, n_rd, n_s), tr=traj.tr,
                        si_indices=np.full(n_il, traj.si_index, dtype=np.int32))

    phase_c = cardiac_phase(traj.timestamps, r_waves, periods)
    phase_r = (traj.timestamps / scene.respiratory_period) % 1.0
    labels = GroundTruthLabels(cardiac_phase=phase_c, respiratory_phase=phase_r,
                               respiratory_activation=respiratory_activation(phase_r),
                               r_wave_times=r_waves, beat_periods=periods)
    return kspace, ground_truth_bins(labels, scene.systolic_fraction)


def ground_truth_bins(labels: GroundTruthLabels, systole_fraction: float,
                      n_resp_bins: int = 4) -> GroundTruthLabels:
    """Fill cardiac and respiratory bins from the phase labels.

    Cardiac: systole iff cardiac_phase < systole_fraction.  Respiratory:
    equal-count bins of the displacement activation, bin 1 = least displaced
    (end-expiration); ties at a bin edge fall toward bin 1.
    """
    if not 0.0 < systole_fraction < 1.0:
        raise ValueError("systole_fraction must be in (0, 1)")
    labels.systole_fraction = systole_fraction
    labels.cardiac_bin = (labels.cardiac_phase < systole_fraction).astype(np.uint8)

    amp = labels.respiratory_activation.reshape(-1)
    n = amp.size
    order = np.sort(amp)
    cuts = [order[int(round(q * n / n_resp_bins)) - 1] for q in range(1, n_resp_bins)]
    bins = np.searchsorted(np.asarray(cuts), amp, side="left").astype(np.uint8) + 1
    labels.respiratory_bin = bins.reshape(labels.respiratory_activation.shape)
    return labels
