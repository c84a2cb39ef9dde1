"""Run configuration: INI-style config file with flag overrides.

Sections and keys are validated strictly; unknown keys are rejected so typos
fail loudly.  Metric ROIs and sharpness lines default to boxes/segments
derived from the named ellipsoids of the scene (blood_pool, myocardium,
thorax) and can be overridden explicitly.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .phantom import CoilProfile, Ellipsoid, PhantomScene, default_scene
from .recon import GriddingConfig

_KNOWN = {
    "trajectory": {"n_interleaves", "n_readouts", "n_samples", "tr"},
    "scene": {"fov", "matrix_size", "noise_sigma", "seed", "cardiac_period",
              "respiratory_period", "rr_jitter", "systolic_fraction"},
    "clustering": {"k_min", "k_max", "seed", "n_init", "n_pc", "coil_ids"},
    "gridding": {"oversampling", "kernel_width", "dc_iterations"},
    "metrics": {"roi_blood", "roi_myo", "roi_background", "lines"},
    "output": {"dir"},
}


@dataclass
class RunConfig:
    n_interleaves: int = 1000
    n_readouts: int = 22
    n_samples: int = 128
    tr: float = 0.003
    scene: PhantomScene = None
    k_min: int = 10
    k_max: int = 14
    cluster_seed: int = 0
    n_init: int = 10
    n_pc: int = 20
    coil_ids: tuple = (0, 1, 2, 3)
    oversampling: float = 2.0
    kernel_width: int = 4
    dc_iterations: int = 3
    roi_blood: tuple = None        # ((x0,x1),(y0,y1),(z0,z1)) voxel boxes
    roi_myo: tuple = None
    roi_background: tuple = None
    lines: list = None             # [(start_xyz, end_xyz)] voxel coords
    output_dir: Path = field(default_factory=lambda: Path("."))

    def __post_init__(self):
        if self.scene is None:
            self.scene = default_scene()
        if self.roi_blood is None or self.roi_myo is None \
                or self.roi_background is None:
            rois = default_rois(self.scene)
            self.roi_blood = self.roi_blood or rois["blood"]
            self.roi_myo = self.roi_myo or rois["myo"]
            self.roi_background = self.roi_background or rois["background"]
        if self.lines is None:
            self.lines = default_sharpness_lines(self.scene)
        for n, lo in (("n_interleaves", 1), ("n_readouts", 1), ("n_samples", 2)):
            if getattr(self, n) < lo:
                raise ConfigError(f"{n} must be >= {lo}")
        if self.tr <= 0:
            raise ConfigError("tr must be positive")
        if not (1 <= self.k_min <= self.k_max):
            raise ConfigError("need 1 <= k_min <= k_max")

    def gridding(self) -> GriddingConfig:
        return GriddingConfig(matrix_size=self.scene.matrix_size,
                              oversampling=self.oversampling,
                              kernel_width=self.kernel_width,
                              voxel_size=self.scene.voxel_size,
                              dc_iterations=self.dc_iterations)


def _find(scene, name):
    for e in scene.ellipsoids:
        if e.name == name:
            return e
    raise ConfigError(f"scene has no ellipsoid named {name!r}; "
                      "explicit metric ROIs/lines required")


def _to_voxel(scene, point_mm):
    return (np.asarray(point_mm) / scene.voxel_size
            + scene.matrix_size // 2)


def _voxel_box(scene, center_mm, half_mm):
    lo = _to_voxel(scene, np.asarray(center_mm) - half_mm)
    hi = _to_voxel(scene, np.asarray(center_mm) + half_mm)
    n = scene.matrix_size
    box = tuple((int(np.clip(np.floor(a), 0, n - 1)),
                 int(np.clip(np.ceil(b), 1, n)))
                for a, b in zip(lo, hi))
    return box


def default_rois(scene) -> dict:
    """Blood / myocardium / background boxes from the named ellipsoids."""
    blood = _find(scene, "blood_pool")
    myo = _find(scene, "myocardium")
    c = blood.center
    blood_box = _voxel_box(scene, c, np.full(3, 8.0))
    myo_center = c + np.array([0.5 * (blood.semi_axes[0] + myo.semi_axes[0]),
                               0.0, 0.0])
    myo_box = _voxel_box(scene, myo_center, np.array([2.0, 6.0, 6.0]))
    corner = -0.46 * scene.fov
    bg_box = _voxel_box(scene, corner, 0.035 * scene.fov)
    return {"blood": blood_box, "myo": myo_box, "background": bg_box}


def default_sharpness_lines(scene) -> list:
    """Six profile segments across the blood-myocardium interface: three
    medial-lateral, three superior-inferior, in voxel coordinates."""
    blood = _find(scene, "blood_pool")
    c = blood.center
    ax, az = blood.semi_axes[0], blood.semi_axes[2]
    # windows cover the blood-myocardium edge over its full motion range but
    # stop short of the epicardial boundary
    lines = []
    for dz in (-8.0, 0.0, 8.0):
        start = _to_voxel(scene, c + np.array([0.44 * ax, 0.0, dz]))
        end = _to_voxel(scene, c + np.array([ax + 4.0, 0.0, dz]))
        lines.append((tuple(start), tuple(end)))
    for dx in (-8.0, 0.0, 8.0):
        start = _to_voxel(scene, c + np.array([dx, 0.0, 0.47 * az]))
        end = _to_voxel(scene, c + np.array([dx, 0.0, az + 4.0]))
        lines.append((tuple(start), tuple(end)))
    return lines


def _reject_unknown(section, mapping, known):
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")


def _parse_triple(text):
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) == 1:
        return np.full(3, parts[0])
    if len(parts) != 3:
        raise ConfigError(f"expected 1 or 3 numbers, got {text!r}")
    return np.asarray(parts)


def _parse_box(text):
    parts = [int(p) for p in text.replace(",", " ").split()]
    if len(parts) != 6:
        raise ConfigError(f"ROI needs 6 integers x0 x1 y0 y1 z0 z1, got {text!r}")
    return ((parts[0], parts[1]), (parts[2], parts[3]), (parts[4], parts[5]))


def _parse_line(text):
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 6:
        raise ConfigError(f"line needs 6 numbers x0 y0 z0 x1 y1 z1, got {text!r}")
    return (tuple(parts[:3]), tuple(parts[3:]))


def load_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional INI file and flag overrides.

    ``overrides`` maps dotted keys (e.g. "scene.seed") to values; flags win
    over the file, the file wins over defaults.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    ellipsoids = []
    coils = []
    values = {}
    for section in parser.sections():
        if section.startswith("ellipsoid."):
            name = section.split(".", 1)[1]
            e = parser[section]
            known = {"center", "semi_axes", "amplitude", "cardiac_scaling",
                     "respiratory_shift"}
            _reject_unknown(section, e, known)
            try:
                ellipsoids.append(Ellipsoid(
                    name=name, center=_parse_triple(e.get("center", "0,0,0")),
                    semi_axes=_parse_triple(e["semi_axes"]),
                    amplitude=float(e["amplitude"]),
                    cardiac_scaling=float(e.get("cardiac_scaling", "0")),
                    respiratory_shift=_parse_triple(
                        e.get("respiratory_shift", "0,0,0"))))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"[{section}]: {exc}") from exc
        elif section.startswith("coil."):
            e = parser[section]
            _reject_unknown(section, e, {"center", "sigma"})
            try:
                coils.append(CoilProfile(center=_parse_triple(e["center"]),
                                         sigma=float(e["sigma"])))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"[{section}]: {exc}") from exc
        elif section in _KNOWN:
            _reject_unknown(section, parser[section], _KNOWN[section])
            for key, val in parser[section].items():
                values[f"{section}.{key}"] = val
        else:
            raise ConfigError(f"unknown config section [{section}]")

    if overrides:
        for key, val in overrides.items():
            if val is not None:
                values[key] = val

    def get(key, cast, default):
        if key in values:
            try:
                return cast(values.pop(key))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return default

    scene_kwargs = dict(
        fov_mm=float(np.mean(_parse_triple(str(values.pop("scene.fov", "200"))))),
        matrix_size=get("scene.matrix_size", int, 96),
        noise_sigma=get("scene.noise_sigma", float, 30.0),
        seed=get("scene.seed", int, 0),
        cardiac_period=get("scene.cardiac_period", float, 0.9),
        respiratory_period=get("scene.respiratory_period", float, 4.0),
        rr_jitter=get("scene.rr_jitter", float, 0.05))
    systolic = get("scene.systolic_fraction", float, 0.35)
    scene = default_scene(**scene_kwargs)
    scene.systolic_fraction = systolic
    if ellipsoids:
        scene = PhantomScene(ellipsoids=ellipsoids,
                             cardiac_period=scene.cardiac_period,
                             respiratory_period=scene.respiratory_period,
                             rr_jitter=scene.rr_jitter, fov=scene.fov,
                             matrix_size=scene.matrix_size,
                             coils=coils or None,
                             noise_sigma=scene.noise_sigma, seed=scene.seed,
                             systolic_fraction=systolic)
    elif coils:
        scene.coils = coils
        if len(coils) != 4:
            raise ConfigError("scene requires exactly 4 coil sections")

    lines = None
    if "metrics.lines" in values:
        text = values.pop("metrics.lines")
        if text.strip() != "auto":
            lines = [_parse_line(part) for part in text.split(";") if part.strip()]

    def box_or_none(key):
        if key in values:
            text = values.pop(key)
            return None if text.strip() == "auto" else _parse_box(text)
        return None

    try:
        cfg = RunConfig(
            n_interleaves=get("trajectory.n_interleaves", int, 1000),
            n_readouts=get("trajectory.n_readouts", int, 22),
            n_samples=get("trajectory.n_samples", int, 128),
            tr=get("trajectory.tr", float, 0.003),
            scene=scene,
            k_min=get("clustering.k_min", int, 10),
            k_max=get("clustering.k_max", int, 14),
            cluster_seed=get("clustering.seed", int, 0),
            n_init=get("clustering.n_init", int, 10),
            n_pc=get("clustering.n_pc", int, 20),
            coil_ids=tuple(int(c) for c in str(
                values.pop("clustering.coil_ids", "0,1,2,3")).split(",")),
            oversampling=get("gridding.oversampling", float, 2.0),
            kernel_width=get("gridding.kernel_width", int, 4),
            dc_iterations=get("gridding.dc_iterations", int, 3),
            roi_blood=box_or_none("metrics.roi_blood"),
            roi_myo=box_or_none("metrics.roi_myo"),
            roi_background=box_or_none("metrics.roi_background"),
            lines=lines,
            output_dir=Path(values.pop("output.dir", ".")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if values:
        raise ConfigError(f"unknown config keys: {sorted(values)}")
    return cfg
