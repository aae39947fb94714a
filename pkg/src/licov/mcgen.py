"""Monte-Carlo covariance labels for map-matching alignment.

For a frame with reference pose T, draw n perturbation twists xi from a
diagonal Gaussian, re-align the scan from exp(xi) o T, and collect the
alignment error twists xi_i = log(T^-1 o T_hat_i). The label is the
second moment about zero, (1 / (n_valid - 1)) * sum xi_i xi_i^T.

Dataset files are CSV: a format/version line, a key=value sidecar line,
then one record per frame (frame_id, n_valid, diverged_count, 21
upper-triangle covariance entries row-major, 6 mean-twist entries), all
floats with 17 significant digits. Lines starting with '#' are warnings.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import MapWindow, NeighborIndex, build_local_map, voxel_downsample
from .errors import (
    AngleNearPi,
    DataError,
    EmptyDataset,
    NoCorrespondences,
    TooFewValidSamples,
)
from .icp import IcpConfig, icp_point_to_plane

FORMAT_TAG = "licov-covdataset"
FORMAT_VERSION = 1

# Row-major upper-triangle order used by dataset records and the losses.
UPPER_I, UPPER_J = np.triu_indices(6)


def pack_upper(matrix) -> np.ndarray:
    """(6,6) symmetric -> 21 upper-triangle entries, row-major."""
    return np.asarray(matrix, dtype=float)[UPPER_I, UPPER_J]


def unpack_upper(values) -> np.ndarray:
    """21 upper-triangle entries -> full symmetric (6,6)."""
    v = np.asarray(values, dtype=float).reshape(21)
    m = np.zeros((6, 6))
    m[UPPER_I, UPPER_J] = v
    m[UPPER_J, UPPER_I] = v
    return m


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-axis perturbation sigmas; translations in meters, rotations in
    degrees (converted to radians only when sampling)."""

    sigma_x: float = 1.0
    sigma_y: float = 1.0
    sigma_z: float = 1.0
    sigma_phi: float = 5.0
    sigma_theta: float = 5.0
    sigma_psi: float = 5.0

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_z", "sigma_phi", "sigma_theta", "sigma_psi"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")

    def sigmas(self) -> np.ndarray:
        """Sampling scales as a 6-vector (m, m, m, rad, rad, rad)."""
        return np.array(
            [
                self.sigma_x,
                self.sigma_y,
                self.sigma_z,
                np.deg2rad(self.sigma_phi),
                np.deg2rad(self.sigma_theta),
                np.deg2rad(self.sigma_psi),
            ]
        )


@dataclass
class CovRecord:
    frame_id: int
    n: int
    covariance: np.ndarray
    seed: int
    diverged_count: int
    mean_twist: np.ndarray


def sample_rng(seed: int, frame_id: int, i: int):
    """Independent per-sample substream; order and thread-count agnostic."""
    return np.random.default_rng(np.random.SeedSequence((seed, frame_id, i)))


def sample_perturbation(spec: PerturbationSpec, rng) -> np.ndarray:
    """One twist draw from the diagonal Gaussian N(0, diag(sigmas^2))."""
    xi = rng.normal(0.0, 1.0, 6) * spec.sigmas()
    if np.linalg.norm(xi[3:]) >= np.pi:
        raise ValueError("drawn rotation exceeds the principal branch")
    return xi


def run_monte_carlo(
    scan,
    local_map,
    pose: se3.SE3,
    spec: PerturbationSpec,
    n: int,
    config: IcpConfig = IcpConfig(),
    seed: int = 0,
    frame_id: int = 0,
    align=None,
    workers: int = 1,
) -> CovRecord:
    """Label one frame by n perturb-and-realign trials.

    `align` may replace the ICP call (same signature: source, target,
    initial, config -> object with .estimate); samples that raise
    AngleNearPi or NoCorrespondences are dropped and counted as diverged.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if align is None:
        index = NeighborIndex(local_map)

        def align(source, target, initial, cfg):
            return icp_point_to_plane(source, target, initial, cfg, index=index, workers=workers)

    pose_inv = se3.inverse(pose)
    errors = []
    diverged = 0
    for i in range(n):
        rng = sample_rng(seed, frame_id, i)
        xi = sample_perturbation(spec, rng)
        start = se3.exp(xi) @ pose
        try:
            result = align(scan, local_map, start, config)
            errors.append(se3.log(pose_inv @ result.estimate))
        except (AngleNearPi, NoCorrespondences):
            diverged += 1
    n_valid = len(errors)
    if n_valid < 2:
        raise TooFewValidSamples(
            f"frame {frame_id}: {n_valid} of {n} samples valid, need at least 2"
        )
    err = np.asarray(errors)
    cov = (err.T @ err) / (n_valid - 1)
    cov = 0.5 * (cov + cov.T)
    return CovRecord(
        frame_id=frame_id,
        n=n_valid,
        covariance=cov,
        seed=seed,
        diverged_count=diverged,
        mean_twist=err.mean(axis=0),
    )


def average_covariance(records) -> np.ndarray:
    """Arithmetic mean of record covariances (fixed-covariance baseline)."""
    if not records:
        raise EmptyDataset("no records to average")
    return np.mean([r.covariance for r in records], axis=0)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_dataset(path, metadata: dict, records, skipped=()):
    for key, value in metadata.items():
        text = str(value)
        if "," in text or "=" in text or "\n" in text:
            raise ValueError(f"metadata value for {key!r} must not contain , = or newline")
    with open(path, "w") as f:
        f.write(f"{FORMAT_TAG},{FORMAT_VERSION}\n")
        f.write(",".join(f"{k}={v}" for k, v in metadata.items()) + "\n")
        for frame_id, reason in skipped:
            f.write(f"# frame {frame_id} skipped: {reason}\n")
        for r in records:
            fields = [str(r.frame_id), str(r.n), str(r.diverged_count)]
            fields += [_fmt(v) for v in pack_upper(r.covariance)]
            fields += [_fmt(v) for v in r.mean_twist]
            f.write(",".join(fields) + "\n")


def read_dataset(path):
    """-> (metadata dict, list[CovRecord]); '#' lines are skipped."""
    with open(path, "r") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines:
        raise DataError(f"{path}: empty file")
    tag = lines[0].split(",")
    if len(tag) != 2 or tag[0] != FORMAT_TAG or int(tag[1]) != FORMAT_VERSION:
        raise DataError(f"{path}: unrecognized format line {lines[0]!r}")
    if len(lines) < 2:
        raise DataError(f"{path}: missing metadata line")
    metadata = {}
    if lines[1]:
        for pair in lines[1].split(","):
            key, _, value = pair.partition("=")
            metadata[key] = value
    records = []
    for ln in lines[2:]:
        if not ln or ln.startswith("#"):
            continue
        fields = ln.split(",")
        if len(fields) != 30:
            raise DataError(f"{path}: record has {len(fields)} fields, expected 30")
        records.append(
            CovRecord(
                frame_id=int(fields[0]),
                n=int(fields[1]),
                covariance=unpack_upper([float(x) for x in fields[3:24]]),
                seed=int(metadata.get("seed", 0)),
                diverged_count=int(fields[2]),
                mean_twist=np.array([float(x) for x in fields[24:30]]),
            )
        )
    if not records:
        raise EmptyDataset(f"{path}: no records")
    return metadata, records


@dataclass
class GenerateSummary:
    records: list
    skipped: list
    total_diverged: int


def dataset_metadata(spec, n, window, map_voxel, scan_voxel, normal_k, config, seed, extra=None):
    md = {
        "sigma_x": _fmt(spec.sigma_x),
        "sigma_y": _fmt(spec.sigma_y),
        "sigma_z": _fmt(spec.sigma_z),
        "sigma_phi": _fmt(spec.sigma_phi),
        "sigma_theta": _fmt(spec.sigma_theta),
        "sigma_psi": _fmt(spec.sigma_psi),
        "n": str(n),
        "window_before": str(window.before),
        "window_after": str(window.after),
        "map_voxel": _fmt(map_voxel),
        "scan_voxel": _fmt(scan_voxel),
        "normal_k": str(normal_k),
        "icp_max_iterations": str(config.max_iterations),
        "icp_translation_eps": _fmt(config.translation_eps),
        "icp_rotation_eps": _fmt(config.rotation_eps),
        "icp_max_correspondence_distance": _fmt(config.max_correspondence_distance),
        "seed": str(seed),
    }
    if extra:
        for k, v in extra.items():
            md.setdefault(k, v)
    return md


def generate_dataset(
    sequence,
    frames,
    spec: PerturbationSpec,
    n: int,
    config: IcpConfig,
    seed: int,
    out_path,
    window: MapWindow = MapWindow(),
    map_voxel: float = 1.0,
    scan_voxel: float = 0.1,
    normal_k: int = 10,
    threads: int = 1,
    extra_metadata=None,
    progress=None,
) -> GenerateSummary:
    """Label the requested frames and write the dataset file.

    Frames are processed independently (optionally in a thread pool) and
    written in ascending frame order, so output bytes do not depend on
    thread count. Frames whose samples nearly all diverge are skipped
    with a '#' warning line instead of aborting the run.
    """
    frames = sorted(set(int(f) for f in frames))

    def job(frame_id):
        local_map = build_local_map(
            sequence.scans, sequence.poses, frame_id, window, map_voxel, normal_k
        )
        scan = voxel_downsample(sequence.scan(frame_id), scan_voxel)
        return run_monte_carlo(
            scan,
            local_map,
            sequence.pose(frame_id),
            spec,
            n,
            config,
            seed=seed,
            frame_id=frame_id,
            workers=1,
        )

    results = {}
    skipped = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {f: pool.submit(job, f) for f in frames}
            for f in frames:
                try:
                    results[f] = futures[f].result()
                except TooFewValidSamples as e:
                    skipped.append((f, str(e)))
                if progress:
                    progress(f, results.get(f))
    else:
        for f in frames:
            try:
                results[f] = job(f)
            except TooFewValidSamples as e:
                skipped.append((f, str(e)))
            if progress:
                progress(f, results.get(f))

    records = [results[f] for f in frames if f in results]
    metadata = dataset_metadata(
        spec, n, window, map_voxel, scan_voxel, normal_k, config, seed, extra_metadata
    )
    write_dataset(out_path, metadata, records, skipped)
    return GenerateSummary(
        records=records,
        skipped=skipped,
        total_diverged=sum(r.diverged_count for r in records),
    )
