"""End-to-end reconstruction drivers.

The similarity-based path builds reference vectors from the SI readouts,
reduces them, clusters the interleaves, and reconstructs the most populated
cluster; the all-data path grids every imaging readout.  Per-stage wall
times are collected for logging (never asserted anywhere).
"""

import time
from dataclasses import dataclass

import numpy as np

from . import cluster as cl
from . import pca
from . import recon
from . import reference
from .errors import PipelineError


@dataclass
class SelectionReport:
    k: int
    assignment: cl.ClusterAssignment
    selected_spokes: np.ndarray
    selected_fraction: float       # interleaf fraction
    points: np.ndarray             # clustering input, one row per interleaf
    timings: dict


def similarity_select(kspace, traj, coil_ids=(0, 1, 2, 3), n_pc=20,
                      k_min=10, k_max=14, seed=0, n_init=10) -> SelectionReport:
    """Reference matrix -> PCA -> automated k-means selection."""
    timings = {}
    t0 = time.perf_counter()
    ref = reference.build_reference_matrix(kspace, coil_ids)
    timings["reference_matrix"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reduced = pca.reduce_reference(ref, n_pc=n_pc, discard_first=True)
    timings["pca"] = time.perf_counter() - t0

    points = reduced.points()
    t0 = time.perf_counter()
    k_star, assignment = cl.select_k(points, k_min=k_min, k_max=k_max,
                                     seed=seed, n_init=n_init)
    timings["select_k"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    selected = cl.expand_to_readouts(assignment, traj)
    timings["expand"] = time.perf_counter() - t0
    if selected.size == 0:
        raise PipelineError("empty spoke selection after clustering")
    return SelectionReport(k=k_star, assignment=assignment,
                           selected_spokes=selected,
                           selected_fraction=assignment.largest_cluster.size
                           / traj.n_interleaves,
                           points=points, timings=timings)


def run_simba(kspace, traj, run_cfg, threads: int = 1):
    """Similarity-based reconstruction; returns (volume, SelectionReport)."""
    report = similarity_select(kspace, traj, coil_ids=run_cfg.coil_ids,
                               n_pc=run_cfg.n_pc, k_min=run_cfg.k_min,
                               k_max=run_cfg.k_max, seed=run_cfg.cluster_seed,
                               n_init=run_cfg.n_init)
    t0 = time.perf_counter()
    volume = recon.reconstruct(kspace, traj, report.selected_spokes,
                               run_cfg.gridding(), method_label="simba",
                               k_selected=report.k, threads=threads)
    report.timings["gridding"] = time.perf_counter() - t0
    return volume, report


def run_alldata(kspace, traj, run_cfg, threads: int = 1):
    """Reconstruction of every imaging (non-SI) readout."""
    timings = {}
    t0 = time.perf_counter()
    volume = recon.reconstruct(kspace, traj, traj.imaging_spoke_indices(),
                               run_cfg.gridding(), method_label="all_data",
                               threads=threads)
    timings["gridding"] = time.perf_counter() - t0
    return volume, timings


def format_timings(timings: dict) -> str:
    return ", ".join(f"{k}: {v:.2f}s" for k, v in timings.items())
