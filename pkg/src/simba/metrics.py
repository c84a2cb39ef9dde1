"""Image-quality and data-selection evaluation.

Sharpness is the slope parameter of sigmoid fits across an interface,
contrast ratio and SNR/CNR come from box ROIs (the noise level is estimated
from a background ROI of the sum-of-squares magnitude image using central
chi moment relations), and provenance reports which cardiac/respiratory
states the selected readouts came from.
"""

import math

import numpy as np
from dataclasses import dataclass, field
from scipy.ndimage import map_coordinates
from scipy.optimize import minimize

SLOPE_BOUND = 50.0   # 1/mm cap; step edges report as capped


class FitFailure(RuntimeError):
    """Sigmoid fit did not converge; carries the best residual seen."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class SigmoidFit:
    slope: float          # |c| in 1/mm
    amplitude: float      # b
    offset: float         # a
    center: float         # x0 in mm
    residual: float       # rms misfit
    capped: bool = False


@dataclass
class SharpnessResult:
    slopes: list                  # per-line slope parameters, 1/mm
    average: float
    residuals: list = field(default=None, repr=False)
    n_failed: int = 0


@dataclass
class ProvenanceReport:
    systolic_fraction: float
    diastolic_fraction: float
    cardiac_category: str          # systolic | diastolic | mixed
    end_expiratory_fraction: float # share in the two least-displaced bins
    respiratory_majority: str      # expiration | inspiration
    cardiac_window_fraction: float = None  # best contiguous 40% cycle window


def _sigmoid(params, x):
    a, b, c, x0 = params
    return a + b / (1.0 + np.exp(-np.clip(c * (x - x0), -500, 500)))


def sigmoid_fit(profile: np.ndarray, spacing: float) -> SigmoidFit:
    """Least-squares sigmoid a + b/(1+exp(-c(x-x0))) through a 1D profile.

    ``spacing`` is the sample distance in mm; the returned slope is |c| in
    1/mm.  Bounded L-BFGS-B from a grid of 8 starting points (both edge
    polarities at three interior positions, plus two near-edge starts);
    constant profiles return slope 0 by convention.
    """
    y = np.asarray(profile, dtype=np.float64)
    if y.size < 6:
        raise ValueError("profile must hold at least 6 samples")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    x = np.arange(y.size) * spacing
    ptp = float(y.max() - y.min())
    if ptp < 1e-12 * max(1.0, abs(float(y.max()))):
        return SigmoidFit(slope=0.0, amplitude=0.0, offset=float(y.mean()),
                          center=float(x[y.size // 2]), residual=0.0)

    def cost(p):
        r = _sigmoid(p, x) - y
        return float(r @ r)

    span = x[-1] - x[0]
    bounds = [(y.min() - ptp, y.max() + ptp), (-3 * ptp, 3 * ptp),
              (0.0, SLOPE_BOUND), (x[0] - span, x[-1] + span)]
    trend = 1.0 if y[-1] >= y[0] else -1.0
    starts = [(sb, q) for sb in (+1.0, -1.0) for q in (0.25, 0.5, 0.75)]
    starts += [(trend, 0.1), (trend, 0.9)]

    best = None
    for sign_b, q in starts:
        p0 = np.array([y.min() if sign_b > 0 else y.max(), sign_b * ptp,
                       4.0 / max(span, spacing), x[0] + q * span])
        res = minimize(cost, p0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 500, "ftol": 1e-14})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailure("all sigmoid fit starts diverged")

    a, b, c, x0 = best.x
    rms = math.sqrt(best.fun / y.size)
    if not np.isfinite(rms):
        raise FitFailure("sigmoid fit returned non-finite residual", rms)
    return SigmoidFit(slope=abs(c), amplitude=b, offset=a, center=x0,
                      residual=rms, capped=abs(c) >= 0.99 * SLOPE_BOUND)


def extract_profile(volume: np.ndarray, start, end, step_voxels: float = 0.5):
    """Linearly interpolated profile along a segment in voxel coordinates."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    length = float(np.linalg.norm(end - start))
    n = max(int(np.ceil(length / step_voxels)) + 1, 6)
    t = np.linspace(0.0, 1.0, n)
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    if np.any(pts < -0.5) or np.any(pts > np.asarray(volume.shape) - 0.5):
        raise ValueError("profile segment outside the volume")
    vals = map_coordinates(volume, pts.T, order=1, mode="nearest")
    return vals, length / (n - 1)


def interface_sharpness(volume, line_specs, voxel_size) -> SharpnessResult:
    """Average sigmoid slope over profile lines through an interface.

    ``line_specs`` is a list of (start, end) voxel-coordinate pairs (three
    medial-lateral and three superior-inferior lines in the standard layout);
    ``voxel_size`` in mm converts the profiles to physical units.  Lines whose
    fit fails are skipped with a warning count; the average covers the rest.
    """
    data = volume.data if hasattr(volume, "data") else np.asarray(volume)
    vox = float(np.mean(np.asarray(voxel_size)))
    slopes, residuals = [], []
    n_failed = 0
    for start, end in line_specs:
        vals, step = extract_profile(data, start, end)
        try:
            fit = sigmoid_fit(vals, step * vox)
        except FitFailure:
            n_failed += 1
            continue
        slopes.append(fit.slope)
        residuals.append(fit.residual)
    if not slopes:
        raise FitFailure("every profile line failed to fit")
    return SharpnessResult(slopes=slopes, average=float(np.mean(slopes)),
                           residuals=residuals, n_failed=n_failed)


def _roi_values(volume: np.ndarray, roi) -> np.ndarray:
    (x0, x1), (y0, y1), (z0, z1) = roi
    if min(x0, y0, z0) < 0 or x1 > volume.shape[0] or y1 > volume.shape[1] \
            or z1 > volume.shape[2] or x0 >= x1 or y0 >= y1 or z0 >= z1:
        raise ValueError(f"ROI {roi} empty or outside volume {volume.shape}")
    return volume[x0:x1, y0:y1, z0:z1]


def contrast_ratio(volume, roi_blood, roi_myo) -> float:
    """CR = (mean_blood - mean_myo) / mean_myo over box ROIs."""
    data = volume.data if hasattr(volume, "data") else np.asarray(volume)
    blood = float(_roi_values(data, roi_blood).mean())
    myo = float(_roi_values(data, roi_myo).mean())
    if myo == 0.0:
        raise ZeroDivisionError("myocardium ROI mean is zero")
    return (blood - myo) / myo


def chi_mean_factor(n_coils: int) -> float:
    """Mean of a central chi variable with 2*n_coils dof, unit sigma."""
    k = 2 * n_coils
    return math.sqrt(2.0) * math.gamma((k + 1) / 2.0) / math.gamma(k / 2.0)


def estimate_noise_sigma(background: np.ndarray, n_coils: int) -> float:
    """Per-channel Gaussian sd from the SoS magnitude of a noise-only region."""
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.size < 2 or bg.std() == 0.0:
        raise ZeroDivisionError("degenerate background ROI")
    return float(bg.mean() / chi_mean_factor(n_coils))


def snr_cnr(volume, roi_signal, roi_myo, roi_background, n_coils: int) -> dict:
    """Noise-corrected SNR and CNR of a sum-of-squares magnitude volume."""
    data = volume.data if hasattr(volume, "data") else np.asarray(volume)
    sigma = estimate_noise_sigma(_roi_values(data, roi_background), n_coils)
    mean_sig = float(_roi_values(data, roi_signal).mean())
    mean_myo = float(_roi_values(data, roi_myo).mean())
    return {"snr": mean_sig / sigma, "cnr": (mean_sig - mean_myo) / sigma,
            "sigma": sigma}


def best_cyclic_window_fraction(phases: np.ndarray, width: float) -> float:
    """Largest fraction of phase values inside any cyclic window of ``width``."""
    p = np.sort(np.asarray(phases, dtype=np.float64) % 1.0)
    n = p.size
    if n == 0:
        return 0.0
    ext = np.concatenate([p, p + 1.0])
    # for each left edge, count points within [p_i, p_i + width]
    right = np.searchsorted(ext, p + width, side="right")
    return float(np.max(right - np.arange(n)) / n)


def provenance(selected_readouts, labels, window: float = 0.4) -> ProvenanceReport:
    """Cardiac/respiratory origin of the selected readouts (ground-truth path).

    ``selected_readouts`` holds flat readout indices; ``labels`` must carry
    filled bins.  The selection is called systolic or diastolic when >= 75%
    of it comes from that phase, otherwise mixed.
    """
    sel = np.asarray(selected_readouts)
    cardiac = labels.cardiac_bin.reshape(-1)[sel]
    resp = labels.respiratory_bin.reshape(-1)[sel]
    phases = labels.cardiac_phase.reshape(-1)[sel]

    sys_frac = float(np.mean(cardiac == 1))
    dia_frac = 1.0 - sys_frac
    if max(sys_frac, dia_frac) < 0.75:
        category = "mixed"
    else:
        category = "systolic" if sys_frac >= dia_frac else "diastolic"
    end_exp = float(np.mean(resp <= 2))
    majority = "expiration" if end_exp >= 0.5 else "inspiration"
    return ProvenanceReport(
        systolic_fraction=sys_frac, diastolic_fraction=dia_frac,
        cardiac_category=category, end_expiratory_fraction=end_exp,
        respiratory_majority=majority,
        cardiac_window_fraction=best_cyclic_window_fraction(phases, window))


def systole_duration(rr_seconds, k: float = 0.39, qr_seconds: float = 0.05):
    """Systolic interval length from the beat period: K*sqrt(RR) - QR."""
    return k * np.sqrt(np.asarray(rr_seconds, dtype=np.float64)) - qr_seconds


def provenance_from_ecg(readout_times, r_wave_times, beat_periods,
                        respiratory_bins, selected_readouts,
                        k: float = 0.39, window: float = 0.4) -> ProvenanceReport:
    """Provenance using synthetic ECG timestamps instead of ground-truth bins.

    A readout is systolic when its delay after the previous R wave is below
    the estimated systole duration of that beat.
    """
    t = np.asarray(readout_times, dtype=np.float64).reshape(-1)[selected_readouts]
    beat = np.clip(np.searchsorted(r_wave_times, t, side="right") - 1,
                   0, len(beat_periods) - 1)
    delay = t - np.asarray(r_wave_times)[beat]
    rr = np.asarray(beat_periods)[beat]
    systolic = delay < systole_duration(rr, k=k)

    sys_frac = float(np.mean(systolic))
    dia_frac = 1.0 - sys_frac
    if max(sys_frac, dia_frac) < 0.75:
        category = "mixed"
    else:
        category = "systolic" if sys_frac >= dia_frac else "diastolic"
    resp = np.asarray(respiratory_bins).reshape(-1)[selected_readouts]
    end_exp = float(np.mean(resp <= 2))
    return ProvenanceReport(
        systolic_fraction=sys_frac, diastolic_fraction=dia_frac,
        cardiac_category=category, end_expiratory_fraction=end_exp,
        respiratory_majority="expiration" if end_exp >= 0.5 else "inspiration",
        cardiac_window_fraction=best_cyclic_window_fraction(
            (delay / rr) % 1.0, window))
