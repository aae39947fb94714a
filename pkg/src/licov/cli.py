"""Command-line front end.

Commands: generate (Monte-Carlo covariance dataset), train (covariance
regressor), eval (prediction quality report), fuse (EKF trajectory
comparison), synth (materialize a synthetic sequence on disk).

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fusion as fusion_mod
from . import mcgen, metrics, model as model_mod
from .cloud import save_kitti_poses, save_kitti_scan, voxel_downsample
from .config import RunConfig
from .errors import ConfigError, DataError, NumericError
from .sequences import parse_frames


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style configuration file")
    common.add_argument(
        "--set",
        dest="overrides",
        metavar="SECTION.KEY=VALUE",
        action="append",
        default=[],
        help="override a single configuration value",
    )
    common.add_argument("--threads", type=int, default=1, help="worker thread cap")

    parser = _Parser(prog="licov", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("generate", "perturb-and-realign each frame, write the covariance dataset"),
        ("train", "fit the covariance regressor on a dataset"),
        ("eval", "report prediction quality of a trained model"),
        ("fuse", "run EKF fusion modes and compare trajectory errors"),
        ("synth", "write a synthetic sequence as scan files plus a pose file"),
    ):
        sub.add_parser(name, parents=[common], help=doc)
    return parser


def _load(args) -> RunConfig:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return RunConfig.load(args.config, args.overrides)


def cmd_generate(cfg: RunConfig, threads: int) -> int:
    seq = cfg.sequence()
    frames = parse_frames(cfg.get("montecarlo", "frames"), len(seq))
    out = cfg.get("paths", "dataset")

    def progress(frame, record):
        if record is None:
            print(f"frame {frame}: skipped")
        else:
            print(f"frame {frame}: n_valid={record.n} diverged={record.diverged_count}")

    summary = mcgen.generate_dataset(
        seq,
        frames,
        cfg.perturbation_spec(),
        cfg.get("montecarlo", "n"),
        cfg.icp_config(),
        cfg.get("montecarlo", "seed"),
        out,
        window=cfg.map_window(),
        map_voxel=cfg.get("map", "map_voxel"),
        scan_voxel=cfg.get("map", "scan_voxel"),
        normal_k=cfg.get("map", "normal_k"),
        threads=threads,
        extra_metadata=cfg.echo(),
        progress=progress,
    )
    print(
        f"wrote {len(summary.records)} records to {out} "
        f"({len(summary.skipped)} skipped, {summary.total_diverged} diverged samples)"
    )
    return 0


def _dataset_samples(cfg: RunConfig, seq):
    _, records = mcgen.read_dataset(cfg.get("paths", "dataset"))
    scan_voxel = cfg.get("map", "scan_voxel")
    samples = []
    for rec in records:
        if not 0 <= rec.frame_id < len(seq):
            raise DataError(f"dataset frame {rec.frame_id} outside the sequence")
        samples.append((rec, voxel_downsample(seq.scan(rec.frame_id), scan_voxel)))
    return records, samples


def cmd_train(cfg: RunConfig, threads: int) -> int:
    seq = cfg.sequence()
    _, samples = _dataset_samples(cfg, seq)
    tc = cfg.train_config()

    def progress(step, loss):
        if (step + 1) % max(1, tc.steps // 10) == 0:
            print(f"step {step + 1}/{tc.steps}: loss {loss:.6g}")

    trained, losses = model_mod.train(
        samples, tc, normal_k=cfg.get("map", "normal_k"), progress=progress
    )
    out = cfg.get("paths", "model")
    model_mod.save_model(out, trained, tc, extra=cfg.echo())
    trace = os.path.splitext(out)[0] + ".loss"
    with open(trace, "w") as f:
        f.write("step,loss\n")
        for step, loss in enumerate(losses, start=1):
            f.write(f"{step},{loss:.17g}\n")
    print(f"wrote model to {out} (loss trace {trace}, final loss {losses[-1]:.6g})")
    return 0


def cmd_eval(cfg: RunConfig, threads: int) -> int:
    seq = cfg.sequence()
    records, samples = _dataset_samples(cfg, seq)
    trained, _ = model_mod.load_model(cfg.get("paths", "model"))
    predictions = [model_mod.predict(trained, scan) for _, scan in samples]
    labels = [rec.covariance for rec in records]
    report = metrics.evaluate(predictions, labels)
    out = cfg.get("paths", "report")
    with open(out, "w") as f:
        for k, v in cfg.echo().items():
            f.write(f"# {k}={v}\n")
        f.write(metrics.report_text(report))
        f.write(metrics.report_csv(report))
    print(metrics.report_text(report), end="")
    print(metrics.report_csv(report), end="")
    print(f"wrote report to {out}")
    return 0


def cmd_fuse(cfg: RunConfig, threads: int) -> int:
    seq = cfg.sequence()
    frames = parse_frames(cfg.get("fusion", "frames"), len(seq))
    modes = cfg.fusion_modes()
    setup = cfg.fusion_setup()
    seed = cfg.get("fusion", "seed")
    out_dir = cfg.get("paths", "out_dir")
    os.makedirs(out_dir, exist_ok=True)

    fixed = None
    if "fixed_cov" in modes:
        _, records = mcgen.read_dataset(cfg.get("paths", "dataset"))
        fixed = mcgen.average_covariance(records)
    trained = None
    if "predicted_cov" in modes:
        trained, _ = model_mod.load_model(cfg.get("paths", "model"))

    truth = fusion_mod.Trajectory(list(frames), [seq.pose(k) for k in frames])
    rows = []
    for mode in modes:
        traj = fusion_mod.run_fusion(
            seq, frames, mode, setup, model=trained, fixed_cov=fixed,
            seed=seed, workers=threads,
        )
        path = os.path.join(out_dir, f"trajectory_{mode}.txt")
        fusion_mod.write_trajectory(path, traj, header=cfg.echo())
        rows.append((mode, fusion_mod.ade(traj, truth), fusion_mod.fde(traj, truth)))

    table_path = os.path.join(out_dir, "fusion_table.csv")
    with open(table_path, "w") as f:
        for k, v in cfg.echo().items():
            f.write(f"# {k}={v}\n")
        f.write("method,ade,fde\n")
        for mode, a, d in rows:
            f.write(f"{mode},{a:.17g},{d:.17g}\n")
    print(f"{'method':<15}{'ADE (m)':>12}{'FDE (m)':>12}")
    for mode, a, d in rows:
        print(f"{mode:<15}{a:>12.5f}{d:>12.5f}")
    print(f"wrote trajectories and {table_path}")
    return 0


def cmd_synth(cfg: RunConfig, threads: int) -> int:
    if cfg.get("sequence", "kind") != "synthetic":
        raise ConfigError("synth requires sequence.kind = synthetic")
    seq = cfg.sequence()
    out_dir = cfg.get("paths", "out_dir")
    scan_dir = os.path.join(out_dir, "scans")
    os.makedirs(scan_dir, exist_ok=True)
    poses = []
    for k in range(len(seq)):
        save_kitti_scan(os.path.join(scan_dir, f"{k:06d}.bin"), seq.scan(k))
        poses.append(seq.pose(k))
    pose_path = os.path.join(out_dir, "poses.txt")
    save_kitti_poses(pose_path, poses)
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as f:
        for key, v in cfg.echo().items():
            f.write(f"{key}={v}\n")
        f.write(f"n_frames={len(seq)}\n")
    print(f"wrote {len(seq)} scans to {scan_dir}, poses to {pose_path}")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
        return _COMMANDS[args.command](cfg, args.threads)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
