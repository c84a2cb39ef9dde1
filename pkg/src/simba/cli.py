"""Command-line front end: simulate / reconstruct / metrics / report.

Exit codes: 0 success, 2 config error, 3 format error, 4 pipeline error,
5 metric failure.  All output files are byte-deterministic for a given
config and seed; wall-clock timings only ever go to the console.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from . import metrics as qm
from .config import load_config
from .errors import ConfigError, FormatError, MetricFailure, PipelineError
from .pipeline import format_timings, run_alldata, run_simba
from .trajectory import generate_phyllotaxis, great_circle_uniformity
from .phantom import sample_kspace


def _add_common(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("SIMBA_THREADS", "4")),
                   help="worker thread cap (env SIMBA_THREADS)")
    det = p.add_mutually_exclusive_group()
    det.add_argument("--deterministic", dest="deterministic",
                     action="store_true", default=True,
                     help="fixed-order reductions (default)")
    det.add_argument("--no-deterministic", dest="deterministic",
                     action="store_false")
    p.add_argument("--output", default=None, help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="simba",
        description="Similarity-based data selection and gridding "
                    "reconstruction for free-running 3D radial MRI")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write phantom k-space + labels")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None, help="scene seed override")
    p.add_argument("--noise", type=float, default=None,
                   help="noise sigma override")

    p = sub.add_parser("reconstruct", help="reconstruct a k-space file")
    _add_common(p)
    p.add_argument("--kspace", required=True, help="input .ksp file")
    p.add_argument("--method", choices=["simba", "alldata"], required=True)
    p.add_argument("--trajectory", default=None,
                   help=".traj file (default: regenerate from k-space header)")
    p.add_argument("--cluster-seed", type=int, default=None)
    p.add_argument("--png", action="store_true",
                   help="also write center-slice PNG")

    p = sub.add_parser("metrics", help="evaluate reconstructed volume(s)")
    _add_common(p)
    p.add_argument("--volume", action="append", required=True,
                   help="volume .raw file (repeat for a comparison)")
    p.add_argument("--labels", default=None, help="labels .csv file")
    p.add_argument("--selection", default=None,
                   help="selected readout indices (for provenance)")
    p.add_argument("--trajectory", default=None,
                   help=".traj file (enables uniformity report)")
    p.add_argument("--lenient", action="store_true",
                   help="exit 0 even if a sigmoid fit fails")

    p = sub.add_parser("report", help="end-to-end desk experiment")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    return ap


def _outdir(args, cfg):
    out = Path(args.output) if args.output else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run_config(args, extra=None):
    overrides = dict(extra or {})
    return load_config(args.config, overrides)


def _make_trajectory(cfg):
    traj = generate_phyllotaxis(cfg.n_interleaves, cfg.n_readouts,
                                cfg.n_samples, cfg.tr)
    traj.fov = cfg.scene.fov
    return traj


def cmd_simulate(args) -> int:
    extra = {}
    if args.seed is not None:
        extra["scene.seed"] = str(args.seed)
    if args.noise is not None:
        extra["scene.noise_sigma"] = str(args.noise)
    cfg = _load_run_config(args, extra)
    out = _outdir(args, cfg)

    traj = _make_trajectory(cfg)
    kspace, labels = sample_kspace(cfg.scene, traj)
    sio.save_trajectory(traj, out / "trajectory.traj")
    sio.save_kspace(kspace, labels, out / "kspace.ksp")
    sio.save_labels_csv(labels, traj.tr, out / "labels.csv")
    duration = traj.n_spokes * traj.tr
    print(f"simulated {traj.n_spokes} spokes "
          f"({traj.n_interleaves} interleaves x {traj.n_readouts} readouts, "
          f"{traj.n_samples} samples), {duration:.1f}s scan, "
          f"noise sigma {cfg.scene.noise_sigma}, seed {cfg.scene.seed}")
    print(f"wrote {out / 'kspace.ksp'} "
          f"({sio.kspace_file_size(kspace.n_coils, *kspace.data.shape[1:])} bytes), "
          f"{out / 'labels.csv'}, {out / 'trajectory.traj'}")
    return 0


def _check_traj_matches(traj, kspace, path):
    if (traj.n_interleaves, traj.n_readouts, traj.n_samples) != \
            (kspace.n_interleaves, kspace.n_readouts, kspace.n_samples):
        raise FormatError(f"{path}: trajectory geometry does not match k-space")


def cmd_reconstruct(args) -> int:
    cfg = _load_run_config(args)
    if args.cluster_seed is not None:
        cfg.cluster_seed = args.cluster_seed
    out = _outdir(args, cfg)
    kspace, labels = sio.load_kspace(args.kspace)

    if args.trajectory:
        traj = sio.load_trajectory(args.trajectory)
        _check_traj_matches(traj, kspace, args.trajectory)
        traj.fov = cfg.scene.fov
    else:
        cfg_geom = (cfg.n_interleaves, cfg.n_readouts, cfg.n_samples)
        file_geom = (kspace.n_interleaves, kspace.n_readouts, kspace.n_samples)
        if cfg_geom != file_geom or abs(cfg.tr - kspace.tr) > 1e-12:
            cfg.n_interleaves, cfg.n_readouts, cfg.n_samples = file_geom
            cfg.tr = kspace.tr
        traj = _make_trajectory(cfg)

    if args.method == "simba":
        volume, report = run_simba(kspace, traj, cfg, threads=args.threads)
        vol_path = out / "volume_simba.raw"
        sio.save_volume(volume, vol_path)
        sio.save_cluster_report(report.assignment, report.points,
                                report.selected_fraction,
                                out / "cluster_report.csv")
        sio.save_selection(report.selected_spokes, out / "selection.csv")
        print(f"k* = {report.k}, largest cluster "
              f"{report.assignment.largest_cluster.size}/{traj.n_interleaves} "
              f"interleaves ({100 * report.selected_fraction:.1f}% selected), "
              f"{report.selected_spokes.size} readouts")
        print("timing:", format_timings(report.timings))
    else:
        volume, timings = run_alldata(kspace, traj, cfg, threads=args.threads)
        vol_path = out / "volume_alldata.raw"
        sio.save_volume(volume, vol_path)
        print(f"all-data reconstruction of "
              f"{volume.provenance['n_spokes_used']} readouts")
        print("timing:", format_timings(timings))
    if args.png:
        sio.save_slice_png(volume, vol_path.with_suffix(".png"))
    print(f"wrote {vol_path} (+ sidecar)")
    return 0


def _volume_metrics(vol, cfg, n_coils, lenient):
    rows = {}
    try:
        sharp = qm.interface_sharpness(vol, cfg.lines, vol.voxel_size)
        rows["sharpness_avg_per_mm"] = sharp.average
        for i, s in enumerate(sharp.slopes):
            rows[f"sharpness_line{i}"] = s
        if sharp.n_failed:
            rows["sharpness_lines_failed"] = sharp.n_failed
    except qm.FitFailure as exc:
        if not lenient:
            raise MetricFailure(f"sharpness fit failed: {exc}") from exc
        rows["sharpness_avg_per_mm"] = float("nan")
    try:
        rows["contrast_ratio"] = qm.contrast_ratio(vol, cfg.roi_blood, cfg.roi_myo)
        sn = qm.snr_cnr(vol, cfg.roi_blood, cfg.roi_myo, cfg.roi_background,
                        n_coils)
        rows["snr"] = sn["snr"]
        rows["cnr"] = sn["cnr"]
        rows["noise_sigma_estimate"] = sn["sigma"]
    except ValueError as exc:
        raise ConfigError(f"ROI invalid: {exc}") from exc
    except ZeroDivisionError as exc:
        raise MetricFailure(str(exc)) from exc
    return rows


def _write_report(rows: dict, path_csv: Path, path_txt: Path):
    with open(path_csv, "w") as f:
        f.write("metric,value\n")
        for k, v in rows.items():
            f.write(f"{k},{v}\n")
    width = max(len(k) for k in rows)
    with open(path_txt, "w") as f:
        for k, v in rows.items():
            val = f"{v:.6g}" if isinstance(v, float) else str(v)
            f.write(f"{k:<{width}}  {val}\n")


def cmd_metrics(args) -> int:
    cfg = _load_run_config(args)
    out = _outdir(args, cfg)
    volumes = [sio.load_volume(v) for v in args.volume]
    n_coils = 4

    labels = sio.load_labels_csv(args.labels) if args.labels else None
    selection = sio.load_selection(args.selection) if args.selection else None

    status = 0
    reports = []
    for path, vol in zip(args.volume, volumes):
        rows = _volume_metrics(vol, cfg, n_coils, args.lenient)
        method = (vol.provenance or {}).get("method", Path(path).stem)
        if selection is not None and labels is not None \
                and method != "all_data":
            prov = qm.provenance(selection, labels)
            rows["provenance_systolic_fraction"] = prov.systolic_fraction
            rows["provenance_diastolic_fraction"] = prov.diastolic_fraction
            rows["provenance_cardiac_category"] = prov.cardiac_category
            rows["provenance_end_expiratory_fraction"] = prov.end_expiratory_fraction
            rows["provenance_respiratory_majority"] = prov.respiratory_majority
            rows["provenance_cardiac_window40"] = prov.cardiac_window_fraction
        elif selection is not None and labels is None:
            print("error: provenance requested (selection given) but no "
                  "--labels file; other metrics still emitted", file=sys.stderr)
        stem = Path(path).stem
        _write_report(rows, out / f"metrics_{stem}.csv",
                      out / f"metrics_{stem}.txt")
        reports.append((stem, rows))
        print(f"metrics for {stem}:")
        for k, v in rows.items():
            print(f"  {k} = {v}")

    if args.trajectory:
        traj = sio.load_trajectory(args.trajectory)
        rep_full = great_circle_uniformity(traj.imaging_directions())
        rows = {"rsd_full_trajectory": rep_full.rsd,
                "mean_distance_full": rep_full.mean_distance}
        if selection is not None:
            dirs = traj.flat_directions()[selection]
            rep_sel = great_circle_uniformity(dirs)
            rows["rsd_selected"] = rep_sel.rsd
            rows["mean_distance_selected"] = rep_sel.mean_distance
        _write_report(rows, out / "metrics_uniformity.csv",
                      out / "metrics_uniformity.txt")
        print("uniformity:", rows)

    if len(reports) == 2:
        (stem_a, a), (stem_b, b) = reports
        with open(out / "comparison.csv", "w") as f:
            f.write(f"metric,{stem_a},{stem_b},delta\n")
            for k in a:
                if k in b and isinstance(a[k], float) and isinstance(b[k], float):
                    f.write(f"{k},{a[k]},{b[k]},{a[k] - b[k]}\n")
        print(f"wrote {out / 'comparison.csv'}")
    return status


def cmd_report(args) -> int:
    extra = {}
    if args.seed is not None:
        extra["scene.seed"] = str(args.seed)
        extra["clustering.seed"] = str(args.seed)
    cfg = _load_run_config(args, extra)
    out = _outdir(args, cfg)

    traj = _make_trajectory(cfg)
    kspace, labels = sample_kspace(cfg.scene, traj)
    sio.save_trajectory(traj, out / "trajectory.traj")
    sio.save_kspace(kspace, labels, out / "kspace.ksp")
    sio.save_labels_csv(labels, traj.tr, out / "labels.csv")
    print(f"simulated {traj.n_spokes} spokes")

    vol_simba, rep = run_simba(kspace, traj, cfg, threads=args.threads)
    sio.save_volume(vol_simba, out / "volume_simba.raw")
    sio.save_cluster_report(rep.assignment, rep.points, rep.selected_fraction,
                            out / "cluster_report.csv")
    sio.save_selection(rep.selected_spokes, out / "selection.csv")
    print(f"similarity selection: k* = {rep.k}, "
          f"{100 * rep.selected_fraction:.1f}% of interleaves")
    print("timing:", format_timings(rep.timings))

    vol_all, timings = run_alldata(kspace, traj, cfg, threads=args.threads)
    sio.save_volume(vol_all, out / "volume_alldata.raw")
    print("timing:", format_timings(timings))

    rows_s = _volume_metrics(vol_simba, cfg, kspace.n_coils, lenient=False)
    prov = qm.provenance(rep.selected_spokes, labels)
    rows_s["provenance_end_expiratory_fraction"] = prov.end_expiratory_fraction
    rows_s["provenance_cardiac_window40"] = prov.cardiac_window_fraction
    rows_s["provenance_cardiac_category"] = prov.cardiac_category
    rows_a = _volume_metrics(vol_all, cfg, kspace.n_coils, lenient=False)

    rep_full = great_circle_uniformity(traj.imaging_directions())
    rep_sel = great_circle_uniformity(traj.flat_directions()[rep.selected_spokes])
    summary = {
        "k_selected": rep.k,
        "selected_interleaf_fraction": rep.selected_fraction,
        "sharpness_simba": rows_s["sharpness_avg_per_mm"],
        "sharpness_alldata": rows_a["sharpness_avg_per_mm"],
        "sharpness_ratio": rows_s["sharpness_avg_per_mm"]
        / rows_a["sharpness_avg_per_mm"],
        "contrast_ratio_simba": rows_s["contrast_ratio"],
        "contrast_ratio_alldata": rows_a["contrast_ratio"],
        "snr_simba": rows_s["snr"],
        "snr_alldata": rows_a["snr"],
        "rsd_full": rep_full.rsd,
        "rsd_selected": rep_sel.rsd,
        "end_expiratory_fraction": prov.end_expiratory_fraction,
        "cardiac_window40": prov.cardiac_window_fraction,
    }
    _write_report(summary, out / "summary.csv", out / "summary.txt")
    _write_report(rows_s, out / "metrics_simba.csv", out / "metrics_simba.txt")
    _write_report(rows_a, out / "metrics_alldata.csv",
                  out / "metrics_alldata.txt")
    print("summary:")
    for k, v in summary.items():
        print(f"  {k} = {v}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.deterministic:
        print("note: nondeterministic accumulation is not implemented; "
              "output is deterministic in all modes", file=sys.stderr)
    handlers = {"simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
                "metrics": cmd_metrics, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 4
    except (MetricFailure, qm.FitFailure) as exc:
        print(f"metric failure: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
