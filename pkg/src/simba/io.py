"""Binary and text file formats.

All binary formats are little-endian.

Trajectory (.traj):
    magic   8 bytes  b"SIMBTRAJ"
    version u32      (currently 1)
    n_interleaves, n_readouts, n_samples  u32 each
    tr      f64      seconds
    directions  f64 triples, flattened (interleaf, readout, xyz) C-order
Radii and timestamps are regenerated from the header (deterministic rules),
so a round trip is bit-exact.

K-space (.ksp):
    magic   8 bytes  b"SIMBKSPC"
    version u32
    n_coils, n_interleaves, n_readouts, n_samples  u32 each
    tr      f64
    samples     complex f32 pairs (re, im), (coil, interleaf, readout, sample)
                C-order
    label block:
        si_indices        u32 x n_interleaves
        per readout (interleaf-major): cardiac_phase f32,
            respiratory_phase f32, respiratory_activation f32,
            cardiac_bin u8, respiratory_bin u8          (14 bytes each)

Volume: raw f32 in x-fastest order plus a JSON sidecar (same stem, .json)
holding matrix size, voxel size, and provenance.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .phantom import GroundTruthLabels, KSpaceData
from .recon import Volume
from .trajectory import RadialTrajectory

TRAJ_MAGIC = b"SIMBTRAJ"
KSPC_MAGIC = b"SIMBKSPC"
FORMAT_VERSION = 1

_READOUT_RECORD = np.dtype([("cardiac_phase", "<f4"), ("respiratory_phase", "<f4"),
                            ("respiratory_activation", "<f4"),
                            ("cardiac_bin", "u1"), ("respiratory_bin", "u1")])


def kspace_file_size(n_coils, n_interleaves, n_readouts, n_samples) -> int:
    """Exact on-disk size of a k-space file with the given geometry."""
    header = 8 + 4 + 4 * 4 + 8
    data = n_coils * n_interleaves * n_readouts * n_samples * 8
    labels = n_interleaves * 4 + n_interleaves * n_readouts * 14
    return header + data + labels


def trajectory_file_size(n_interleaves, n_readouts) -> int:
    return 8 + 4 + 3 * 4 + 8 + n_interleaves * n_readouts * 3 * 8


def save_trajectory(traj: RadialTrajectory, path) -> None:
    with open(path, "wb") as f:
        f.write(TRAJ_MAGIC)
        f.write(struct.pack("<IIII", FORMAT_VERSION, traj.n_interleaves,
                            traj.n_readouts, traj.n_samples))
        f.write(struct.pack("<d", traj.tr))
        f.write(np.ascontiguousarray(traj.directions, dtype="<f8").tobytes())


def load_trajectory(path) -> RadialTrajectory:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 32 or raw[:8] != TRAJ_MAGIC:
        raise FormatError(f"{path}: not a trajectory file (bad magic at offset 0)")
    version, n_il, n_rd, n_s = struct.unpack_from("<IIII", raw, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 8")
    (tr,) = struct.unpack_from("<d", raw, 24)
    expected = trajectory_file_size(n_il, n_rd)
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} != expected {expected} "
                          "(truncated at offset 32)")
    directions = np.frombuffer(raw, dtype="<f8", count=n_il * n_rd * 3,
                               offset=32).reshape(n_il, n_rd, 3).copy()
    timestamps = tr * np.arange(n_il * n_rd, dtype=np.float64).reshape(n_il, n_rd)
    radii = (np.arange(n_s, dtype=np.float64) - n_s // 2) / n_s
    return RadialTrajectory(directions=directions, timestamps=timestamps,
                            radii=radii, tr=tr, si_index=0)


def save_kspace(kspace: KSpaceData, labels: GroundTruthLabels, path) -> None:
    n_c, n_il, n_rd, n_s = kspace.data.shape
    rec = np.zeros(n_il * n_rd, dtype=_READOUT_RECORD)
    rec["cardiac_phase"] = labels.cardiac_phase.reshape(-1)
    rec["respiratory_phase"] = labels.respiratory_phase.reshape(-1)
    rec["respiratory_activation"] = labels.respiratory_activation.reshape(-1)
    rec["cardiac_bin"] = labels.cardiac_bin.reshape(-1)
    rec["respiratory_bin"] = labels.respiratory_bin.reshape(-1)
    with open(path, "wb") as f:
        f.write(KSPC_MAGIC)
        f.write(struct.pack("<IIIII", FORMAT_VERSION, n_c, n_il, n_rd, n_s))
        f.write(struct.pack("<d", kspace.tr))
        f.write(np.ascontiguousarray(kspace.data, dtype="<c8").tobytes())
        f.write(np.ascontiguousarray(kspace.si_indices, dtype="<u4").tobytes())
        f.write(rec.tobytes())


def load_kspace(path):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 36 or raw[:8] != KSPC_MAGIC:
        raise FormatError(f"{path}: not a k-space file (bad magic at offset 0)")
    version, n_c, n_il, n_rd, n_s = struct.unpack_from("<IIIII", raw, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 8")
    (tr,) = struct.unpack_from("<d", raw, 28)
    expected = kspace_file_size(n_c, n_il, n_rd, n_s)
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} != expected {expected} "
                          "(truncated at offset 36)")
    off = 36
    data = np.frombuffer(raw, dtype="<c8", count=n_c * n_il * n_rd * n_s,
                         offset=off).reshape(n_c, n_il, n_rd, n_s).copy()
    off += n_c * n_il * n_rd * n_s * 8
    si = np.frombuffer(raw, dtype="<u4", count=n_il, offset=off).astype(np.int32)
    off += n_il * 4
    rec = np.frombuffer(raw, dtype=_READOUT_RECORD, count=n_il * n_rd, offset=off)
    labels = GroundTruthLabels(
        cardiac_phase=rec["cardiac_phase"].astype(np.float64).reshape(n_il, n_rd),
        respiratory_phase=rec["respiratory_phase"].astype(np.float64).reshape(n_il, n_rd),
        respiratory_activation=rec["respiratory_activation"].astype(np.float64).reshape(n_il, n_rd),
        cardiac_bin=rec["cardiac_bin"].reshape(n_il, n_rd).copy(),
        respiratory_bin=rec["respiratory_bin"].reshape(n_il, n_rd).copy())
    return KSpaceData(data=data, tr=tr, si_indices=si), labels


def save_volume(volume: Volume, path) -> None:
    """Raw f32 x-fastest order, with a JSON sidecar next to it."""
    path = Path(path)
    data = np.asarray(volume.data)
    if np.iscomplexobj(data):
        data = np.abs(data)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(data.transpose(2, 1, 0), dtype="<f4").tobytes())
    sidecar = {"matrix_size": list(data.shape),
               "voxel_size_mm": [float(v) for v in volume.voxel_size],
               "order": "x-fastest",
               "dtype": "float32-le",
               "provenance": volume.provenance}
    Path(path.with_suffix(".json")).write_text(json.dumps(sidecar, indent=2,
                                                          sort_keys=True) + "\n")


def load_volume(path) -> Volume:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise FormatError(f"{sidecar_path}: missing volume sidecar")
    meta = json.loads(sidecar_path.read_text())
    shape = tuple(meta["matrix_size"])
    n_expected = int(np.prod(shape)) * 4
    raw = path.read_bytes()
    if len(raw) != n_expected:
        raise FormatError(f"{path}: size {len(raw)} != expected {n_expected}")
    data = np.frombuffer(raw, dtype="<f4").reshape(shape[::-1]).transpose(2, 1, 0)
    return Volume(data=data.astype(np.float64),
                  voxel_size=np.asarray(meta["voxel_size_mm"]),
                  provenance=meta.get("provenance"))


def save_labels_csv(labels: GroundTruthLabels, tr: float, path) -> None:
    n_il, n_rd = labels.cardiac_phase.shape
    with open(path, "w") as f:
        f.write("readout,interleaf,readout_in_interleaf,time_s,"
                "cardiac_phase,respiratory_phase,respiratory_activation,"
                "cardiac_bin,respiratory_bin\n")
        cp = labels.cardiac_phase.reshape(-1)
        rp = labels.respiratory_phase.reshape(-1)
        ra = labels.respiratory_activation.reshape(-1)
        cb = labels.cardiac_bin.reshape(-1)
        rb = labels.respiratory_bin.reshape(-1)
        for i in range(n_il * n_rd):
            f.write(f"{i},{i // n_rd},{i % n_rd},{i * tr:.9f},"
                    f"{cp[i]:.9f},{rp[i]:.9f},{ra[i]:.9f},{cb[i]},{rb[i]}\n")


def load_labels_csv(path) -> GroundTruthLabels:
    path = Path(path)
    try:
        body = np.genfromtxt(path, delimiter=",", names=True)
    except Exception as exc:
        raise FormatError(f"{path}: unreadable labels CSV ({exc})") from exc
    required = {"interleaf", "readout_in_interleaf", "cardiac_phase",
                "respiratory_phase", "respiratory_activation", "cardiac_bin",
                "respiratory_bin"}
    if body.dtype.names is None or not required.issubset(body.dtype.names):
        raise FormatError(f"{path}: labels CSV missing columns "
                          f"{sorted(required - set(body.dtype.names or ()))}")
    n_il = int(body["interleaf"].max()) + 1
    n_rd = int(body["readout_in_interleaf"].max()) + 1
    if body.size != n_il * n_rd:
        raise FormatError(f"{path}: expected {n_il * n_rd} rows, got {body.size}")

    def grid(name, dtype=np.float64):
        return body[name].astype(dtype).reshape(n_il, n_rd)

    return GroundTruthLabels(cardiac_phase=grid("cardiac_phase"),
                             respiratory_phase=grid("respiratory_phase"),
                             respiratory_activation=grid("respiratory_activation"),
                             cardiac_bin=grid("cardiac_bin", np.uint8),
                             respiratory_bin=grid("respiratory_bin", np.uint8))


def save_reference_csv(ref, path) -> None:
    """Reference matrix, one interleaf column per line."""
    with open(path, "w") as f:
        for col in ref.data.T:
            f.write(",".join(f"{v:.9g}" for v in col) + "\n")


def save_reference_binary(ref, path) -> None:
    """Row-major f32 with a (rows, cols) u32 shape header."""
    with open(path, "wb") as f:
        f.write(struct.pack("<II", *ref.data.shape))
        f.write(np.ascontiguousarray(ref.data, dtype="<f4").tobytes())


def save_cluster_report(assignment, points, selected_fraction, path) -> None:
    """Per-interleaf labels with distances, plus a summary block."""
    centroids = assignment.centroids
    dist = np.linalg.norm(points - centroids[assignment.labels], axis=1)
    with open(path, "w") as f:
        f.write("interleaf,label,distance_to_centroid\n")
        for i, (lab, d) in enumerate(zip(assignment.labels, dist)):
            f.write(f"{i},{lab},{d:.9g}\n")
        f.write("# summary\n")
        f.write(f"# k_selected,{assignment.k}\n")
        f.write(f"# largest_cluster_size,{assignment.largest_cluster.size}\n")
        f.write(f"# selected_fraction,{selected_fraction:.6f}\n")
        f.write(f"# inertia,{assignment.inertia:.9g}\n")
        sizes = np.bincount(assignment.labels, minlength=assignment.k)
        f.write("# cluster_sizes," + ",".join(str(s) for s in sizes) + "\n")
        if assignment.selection_criteria:
            for k in sorted(assignment.selection_criteria):
                f.write(f"# criterion_k{k},{assignment.selection_criteria[k]:.9g}\n")


def save_selection(indices, path) -> None:
    np.savetxt(path, np.asarray(indices, dtype=np.int64), fmt="%d",
               header="selected flat readout indices", comments="# ")


def load_selection(path) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=np.int64, comments="#").reshape(-1)
    except Exception as exc:
        raise FormatError(f"{path}: unreadable selection file ({exc})") from exc


def save_slice_png(volume: Volume, path, window=None, level=None) -> None:
    """Axial/coronal/sagittal center slices side by side as one PNG."""
    from PIL import Image

    data = np.asarray(volume.data, dtype=np.float64)
    n = data.shape[0]
    slices = [data[:, :, n // 2], data[:, n // 2, :], data[n // 2, :, :]]
    if level is None:
        level = float(np.percentile(data, 99)) / 2.0
    if window is None:
        window = 2.0 * level
    lo, hi = level - window / 2.0, level + window / 2.0
    panels = []
    for s in slices:
        img = np.clip((s - lo) / max(hi - lo, 1e-12), 0, 1)
        panels.append((img.T[::-1] * 255).astype(np.uint8))
    canvas = np.concatenate(panels, axis=1)
    Image.fromarray(canvas, mode="L").save(path)
