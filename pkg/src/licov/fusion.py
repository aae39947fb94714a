"""Pose fusion: tangent-space EKF on SE(3) plus trajectory metrics.

The error state lives in the body frame (T_true = T_est o exp(eps)), so
prediction transports covariance by Ad(delta^-1) and the measurement
model for a full-pose observation is identity. Modes compared by
run_fusion: raw ICP without filtering, filtering with one fixed
measurement covariance, and filtering with per-frame predicted
covariances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import MapWindow, build_local_map, voxel_downsample
from .errors import (
    ConfigError,
    DataError,
    EmptyTrajectory,
    FrameMismatch,
    NotPositiveDefinite,
)
from .icp import IcpConfig, icp_point_to_plane
from .model import predict

MODES = ("icp_only", "fixed_cov", "predicted_cov")

TRAJECTORY_TAG = "licov-trajectory"


@dataclass(frozen=True)
class FusionState:
    pose: se3.SE3
    covariance: np.ndarray


@dataclass(frozen=True)
class MotionInput:
    delta: se3.SE3
    process_noise: np.ndarray


@dataclass(frozen=True)
class FusionSetup:
    window: MapWindow = MapWindow()
    map_voxel: float = 1.0
    scan_voxel: float = 0.1
    normal_k: int = 10
    icp: IcpConfig = IcpConfig()
    motion_sigma_xyz: float = 0.05
    motion_sigma_rot_deg: float = 0.2
    init_cov: float = 1e-6

    def motion_sigmas(self) -> np.ndarray:
        s = np.empty(6)
        s[:3] = self.motion_sigma_xyz
        s[3:] = np.deg2rad(self.motion_sigma_rot_deg)
        return s


def _sym(m):
    return 0.5 * (m + m.T)


def ekf_predict(state: FusionState, motion: MotionInput) -> FusionState:
    """Compose the odometry increment; transport P into the new body frame."""
    ad = se3.adjoint(se3.inverse(motion.delta))
    cov = _sym(ad @ state.covariance @ ad.T + motion.process_noise)
    return FusionState(state.pose @ motion.delta, cov)


def ekf_update(state: FusionState, measurement: se3.SE3, meas_cov) -> FusionState:
    """Full-pose update with innovation log(pose^-1 o measurement).

    Gain K = P (P + R)^-1, pose <- pose o exp(K nu), covariance by the
    Joseph form (I - K) P (I - K)^T + K R K^T. R gets +1e-12 I when
    singular.
    """
    R = np.asarray(meas_cov, dtype=float)
    if np.linalg.eigvalsh(R)[0] < 1e-12:
        R = R + 1e-12 * np.eye(6)
    nu = se3.log(se3.inverse(state.pose) @ measurement)
    P = state.covariance
    S = _sym(P + R)
    try:
        gain_t = np.linalg.solve(S, P)  # S^-1 P = K^T since P, S symmetric
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("innovation covariance is singular")
    K = gain_t.T
    pose = state.pose @ se3.exp(K @ nu)
    IK = np.eye(6) - K
    cov = _sym(IK @ P @ IK.T + K @ R @ K.T)
    return FusionState(pose, cov)


@dataclass
class Trajectory:
    frame_ids: list
    poses: list

    def __len__(self):
        return len(self.frame_ids)

    def translations(self) -> np.ndarray:
        return np.array([p.t for p in self.poses]).reshape(len(self.poses), 3)


def write_trajectory(path, trajectory: Trajectory, header=None):
    """One line per frame: frame_id then the 12 row-major [R|t] values.
    Header metadata goes into '#'-prefixed comment lines."""
    with open(path, "w") as f:
        f.write(f"# {TRAJECTORY_TAG},1\n")
        for k, v in (header or {}).items():
            f.write(f"# {k}={v}\n")
        for fid, pose in zip(trajectory.frame_ids, trajectory.poses):
            m = np.hstack([pose.R, pose.t.reshape(3, 1)])
            vals = " ".join(f"{x:.17g}" for x in m.reshape(-1))
            f.write(f"{fid} {vals}\n")


def read_trajectory(path) -> Trajectory:
    frame_ids, poses = [], []
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 13:
                raise DataError(f"{path}: expected 13 fields, got {len(parts)}")
            m = np.array([float(x) for x in parts[1:]]).reshape(3, 4)
            frame_ids.append(int(parts[0]))
            poses.append(se3.SE3(m[:, :3], m[:, 3]))
    return Trajectory(frame_ids, poses)


def run_fusion(
    sequence,
    frames,
    mode: str,
    setup: FusionSetup = FusionSetup(),
    model=None,
    fixed_cov=None,
    seed: int = 0,
    workers: int = 1,
    align=None,
) -> Trajectory:
    """Track the sequence with odometry = ground-truth deltas plus Gaussian
    twist noise and ICP pose measurements against the local map.

    The filter starts at the true first-frame pose. Per-frame odometry
    noise comes from the (seed, frame) substream, so runs are repeatable
    and mode choice does not change the noise realization. `align` may
    replace the ICP call (source, target, initial, cfg -> object with
    .estimate).
    """
    if mode not in MODES:
        raise ConfigError(f"unknown fusion mode {mode!r}")
    if mode == "predicted_cov" and model is None:
        raise ConfigError("predicted_cov mode requires a trained model")
    if mode == "fixed_cov" and fixed_cov is None:
        raise ConfigError("fixed_cov mode requires an averaged dataset covariance")
    frames = sorted(set(int(f) for f in frames))
    if not frames:
        raise EmptyTrajectory("no frames to fuse")

    sig = setup.motion_sigmas()
    Q = np.diag(sig**2)
    state = FusionState(sequence.pose(frames[0]), setup.init_cov * np.eye(6))
    ids = [frames[0]]
    out = [state.pose]
    prev_truth = sequence.pose(frames[0])
    for k in frames[1:]:
        truth = sequence.pose(k)
        delta_true = se3.inverse(prev_truth) @ truth
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        eta = rng.normal(0.0, 1.0, 6) * sig
        delta_meas = delta_true @ se3.exp(eta)
        state = ekf_predict(state, MotionInput(delta_meas, Q))

        local_map = build_local_map(
            sequence.scans, sequence.poses, k, setup.window, setup.map_voxel, setup.normal_k
        )
        scan = voxel_downsample(sequence.scan(k), setup.scan_voxel)
        if align is None:
            result = icp_point_to_plane(scan, local_map, state.pose, setup.icp, workers=workers)
        else:
            result = align(scan, local_map, state.pose, setup.icp)

        if mode == "icp_only":
            state = FusionState(result.estimate, state.covariance)
        else:
            R = fixed_cov if mode == "fixed_cov" else predict(model, scan)
            state = ekf_update(state, result.estimate, R)
        ids.append(k)
        out.append(state.pose)
        prev_truth = truth
    return Trajectory(ids, out)


def _check_pair(estimate: Trajectory, reference: Trajectory):
    if len(estimate) == 0 or len(reference) == 0:
        raise EmptyTrajectory("trajectory metrics need at least one frame")
    if list(estimate.frame_ids) != list(reference.frame_ids):
        raise FrameMismatch("trajectories cover different frames")


def ade(estimate: Trajectory, reference: Trajectory) -> float:
    """Mean translation error norm over aligned frames."""
    _check_pair(estimate, reference)
    d = estimate.translations() - reference.translations()
    return float(np.linalg.norm(d, axis=1).mean())


def fde(estimate: Trajectory, reference: Trajectory) -> float:
    """Translation error norm at the final frame."""
    _check_pair(estimate, reference)
    return float(np.linalg.norm(estimate.translations()[-1] - reference.translations()[-1]))
