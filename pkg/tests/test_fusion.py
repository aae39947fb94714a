"""Tangent-space EKF steps, fusion modes, and trajectory metrics."""
from types import SimpleNamespace

import numpy as np
import pytest

from licov import se3
from licov.cloud import MapWindow
from licov.errors import ConfigError, DataError, EmptyTrajectory, FrameMismatch
from licov.fusion import (
    MODES,
    FusionSetup,
    FusionState,
    MotionInput,
    Trajectory,
    ade,
    ekf_predict,
    ekf_update,
    fde,
    read_trajectory,
    run_fusion,
    write_trajectory,
)
from licov.model import RegressionModel, cov_to_params
from licov.scenes import make_synthetic_scene

from conftest import random_pose, random_spd


def constant_model(cov):
    """Model whose prediction is `cov` for every input scan."""
    return RegressionModel(
        np.zeros(32), np.ones(32), np.zeros((64, 32)), np.zeros(64),
        np.zeros((21, 64)), cov_to_params(cov),
    )


@pytest.fixture(scope="module")
def small_room():
    return make_synthetic_scene("room", density=4, seed=7, n_frames=5)


def truth_oracle(sequence, frames):
    """Align stub returning the ground-truth pose of each visited frame."""
    it = iter(sorted(frames)[1:])

    def align(source, target, initial, cfg):
        return SimpleNamespace(estimate=sequence.pose(next(it)))

    return align


def truth_trajectory(sequence, frames):
    return Trajectory(list(frames), [sequence.pose(f) for f in frames])


class TestPredict:
    def test_identity_delta_adds_process_noise(self):
        rng = np.random.default_rng(0)
        p = random_spd(rng, scale=0.1)
        q = random_spd(rng, scale=0.01)
        state = FusionState(random_pose(rng), p)
        out = ekf_predict(state, MotionInput(se3.SE3.identity(), q))
        assert np.allclose(out.covariance, p + q, rtol=0, atol=1e-14)
        assert np.allclose(out.pose.R, state.pose.R, rtol=0, atol=0)
        assert np.allclose(out.pose.t, state.pose.t, rtol=0, atol=0)

    def test_two_step_composition(self):
        # chaining two predictions from zero covariance must match the
        # closed-form transport Ad(d2^-1) Q1 Ad(d2^-1)^T + Q2
        rng = np.random.default_rng(1)
        d1, d2 = random_pose(rng), random_pose(rng)
        q1 = random_spd(rng, scale=0.1)
        q2 = random_spd(rng, scale=0.05)
        state = FusionState(se3.SE3.identity(), np.zeros((6, 6)))
        state = ekf_predict(state, MotionInput(d1, q1))
        state = ekf_predict(state, MotionInput(d2, q2))
        ad = se3.adjoint(se3.inverse(d2))
        expected = ad @ q1 @ ad.T + q2
        assert np.allclose(state.covariance, expected, rtol=0, atol=1e-9)
        ref = d1 @ d2
        assert np.allclose(state.pose.R, ref.R, rtol=0, atol=1e-12)
        assert np.allclose(state.pose.t, ref.t, rtol=0, atol=1e-12)

    def test_covariance_stays_symmetric(self):
        rng = np.random.default_rng(2)
        state = FusionState(se3.SE3.identity(), 1e-6 * np.eye(6))
        for _ in range(20):
            m = MotionInput(random_pose(rng), random_spd(rng, scale=1e-3))
            state = ekf_predict(state, m)
            assert np.array_equal(state.covariance, state.covariance.T)
            assert np.linalg.eigvalsh(state.covariance)[0] >= -1e-12


class TestUpdate:
    def test_scalar_analog(self):
        # with P = p I and R = r I the filter reduces to six decoupled
        # scalar updates: x = p/(p+r) d, P' = (1-k)^2 p + k^2 r
        state = FusionState(se3.SE3.identity(), 0.3 * np.eye(6))
        meas = se3.exp(np.array([0.4, 0.0, 0.0, 0.0, 0.0, 0.0]))
        out = ekf_update(state, meas, 0.7 * np.eye(6))
        assert abs(out.pose.t[0] - 0.12) < 1e-12
        assert np.all(np.abs(out.pose.t[1:]) < 1e-12)
        assert np.allclose(out.pose.R, np.eye(3), rtol=0, atol=1e-12)
        assert np.allclose(out.covariance, 0.21 * np.eye(6), rtol=0, atol=1e-12)

    def test_update_matches_information_form(self):
        # Joseph form with the optimal gain equals P - P (P+R)^-1 P
        rng = np.random.default_rng(3)
        p = random_spd(rng, scale=0.2)
        r = random_spd(rng, scale=0.3)
        state = FusionState(random_pose(rng, max_angle=1.0), p)
        meas = state.pose @ se3.exp(0.01 * rng.normal(size=6))
        out = ekf_update(state, meas, r)
        expected = p - p @ np.linalg.solve(p + r, p)
        assert np.allclose(out.covariance, expected, rtol=0, atol=1e-9)

    def test_huge_r_leaves_pose_unchanged(self):
        rng = np.random.default_rng(4)
        state = FusionState(random_pose(rng, max_angle=1.0), 1e-4 * np.eye(6))
        meas = state.pose @ se3.exp(np.array([0.5, -0.2, 0.1, 0.05, 0.0, -0.04]))
        out = ekf_update(state, meas, 1e12 * np.eye(6))
        assert np.linalg.norm(out.pose.t - state.pose.t) < 1e-9
        assert np.linalg.norm(out.pose.R - state.pose.R) < 1e-9

    def test_tiny_r_snaps_to_measurement(self):
        rng = np.random.default_rng(5)
        state = FusionState(random_pose(rng, max_angle=1.0), np.eye(6))
        meas = state.pose @ se3.exp(np.array([0.3, 0.1, -0.2, 0.1, -0.05, 0.08]))
        out = ekf_update(state, meas, 1e-12 * np.eye(6))
        err = se3.log(se3.inverse(out.pose) @ meas)
        assert np.linalg.norm(err) < 1e-6

    def test_zero_r_is_regularized(self):
        state = FusionState(se3.SE3.identity(), np.eye(6))
        meas = se3.exp(np.array([0.2, 0.0, 0.0, 0.0, 0.0, 0.0]))
        out = ekf_update(state, meas, np.zeros((6, 6)))
        assert abs(out.pose.t[0] - 0.2) < 1e-6

    def test_trace_never_increases(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            p = random_spd(rng, scale=0.5)
            r = random_spd(rng, scale=0.5)
            state = FusionState(random_pose(rng, max_angle=1.0), p)
            meas = state.pose @ se3.exp(0.05 * rng.normal(size=6))
            out = ekf_update(state, meas, r)
            assert np.trace(out.covariance) <= np.trace(p) + 1e-12

    def test_interleaved_fuzz_keeps_covariance_psd(self):
        rng = np.random.default_rng(7)
        state = FusionState(se3.SE3.identity(), 1e-6 * np.eye(6))
        for i in range(200):
            if i % 2 == 0:
                m = MotionInput(
                    random_pose(rng, max_angle=0.8), random_spd(rng, scale=1e-3)
                )
                state = ekf_predict(state, m)
            else:
                meas = state.pose @ se3.exp(0.05 * rng.normal(size=6))
                state = ekf_update(state, meas, random_spd(rng, scale=0.01))
            assert np.array_equal(state.covariance, state.covariance.T)
            assert np.linalg.eigvalsh(state.covariance)[0] >= -1e-10
            assert np.allclose(
                state.pose.R.T @ state.pose.R, np.eye(3), rtol=0, atol=1e-9
            )


class TestMetrics:
    def test_ade_pinned_offset(self):
        ref = Trajectory([0, 1], [se3.SE3.identity(), se3.exp(np.r_[1.0, np.zeros(5)])])
        off = np.array([0.3, 0.4, 0.0])
        est = Trajectory([0, 1], [se3.SE3(p.R, p.t + off) for p in ref.poses])
        assert abs(ade(est, ref) - 0.5) < 1e-15
        assert abs(fde(est, ref) - 0.5) < 1e-15

    def test_fde_uses_final_frame_only(self):
        ref = Trajectory([0, 1], [se3.SE3.identity(), se3.SE3.identity()])
        est = Trajectory(
            [0, 1],
            [
                se3.SE3(np.eye(3), np.array([1.0, 0.0, 0.0])),
                se3.SE3(np.eye(3), np.array([0.3, 0.4, 0.0])),
            ],
        )
        assert abs(fde(est, ref) - 0.5) < 1e-15
        assert abs(ade(est, ref) - 0.75) < 1e-15

    def test_frame_mismatch(self):
        a = Trajectory([0, 1], [se3.SE3.identity()] * 2)
        b = Trajectory([0, 2], [se3.SE3.identity()] * 2)
        with pytest.raises(FrameMismatch):
            ade(a, b)

    def test_empty_trajectory(self):
        empty = Trajectory([], [])
        with pytest.raises(EmptyTrajectory):
            ade(empty, empty)
        with pytest.raises(EmptyTrajectory):
            fde(empty, empty)


class TestTrajectoryIO:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        ids = [0, 3, 4, 7, 9]
        traj = Trajectory(ids, [random_pose(rng) for _ in ids])
        path = tmp_path / "traj.txt"
        write_trajectory(path, traj, header={"mode": "icp_only", "seed": 3})
        back = read_trajectory(path)
        assert back.frame_ids == ids
        for a, b in zip(traj.poses, back.poses):
            assert np.array_equal(a.R, b.R)
            assert np.array_equal(a.t, b.t)
        text = path.read_text()
        assert text.startswith("# licov-trajectory,1\n")
        assert "# mode=icp_only" in text

    def test_bad_field_count(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("0 " + " ".join(["0.0"] * 11) + "\n")
        with pytest.raises(DataError):
            read_trajectory(path)


class TestRunFusion:
    def test_mode_validation(self, small_room):
        with pytest.raises(ConfigError):
            run_fusion(small_room, [0, 1], "kalman")
        with pytest.raises(ConfigError):
            run_fusion(small_room, [0, 1], "predicted_cov")
        with pytest.raises(ConfigError):
            run_fusion(small_room, [0, 1], "fixed_cov")
        with pytest.raises(EmptyTrajectory):
            run_fusion(small_room, [], "icp_only")

    def test_zero_noise_perfect_measurements(self, small_room):
        # with exact odometry the prediction already sits on the truth, so
        # every mode must reproduce the ground-truth trajectory
        frames = list(range(5))
        setup = FusionSetup(
            window=MapWindow(1, 1), map_voxel=0.4, scan_voxel=0.3,
            motion_sigma_xyz=0.0, motion_sigma_rot_deg=0.0,
        )
        passthrough = lambda source, target, initial, cfg: SimpleNamespace(estimate=initial)
        truth = truth_trajectory(small_room, frames)
        for mode, kw in [
            ("icp_only", {}),
            ("fixed_cov", {"fixed_cov": 1e-4 * np.eye(6)}),
            ("predicted_cov", {"model": constant_model(1e-4 * np.eye(6))}),
        ]:
            traj = run_fusion(small_room, frames, mode, setup, align=passthrough, **kw)
            assert traj.frame_ids == frames
            assert ade(traj, truth) < 1e-9

    def test_constant_model_matches_fixed_cov(self, small_room):
        frames = list(range(5))
        setup = FusionSetup(window=MapWindow(1, 1), map_voxel=0.4, scan_voxel=0.3)
        rng = np.random.default_rng(5)
        a = rng.normal(size=(6, 6)) * 0.1
        avg = a @ a.T * 1e-2 + 1e-3 * np.eye(6)
        fixed = run_fusion(
            small_room, frames, "fixed_cov", setup, fixed_cov=avg, seed=3,
            align=truth_oracle(small_room, frames),
        )
        pred = run_fusion(
            small_room, frames, "predicted_cov", setup, model=constant_model(avg),
            seed=3, align=truth_oracle(small_room, frames),
        )
        assert fixed.frame_ids == pred.frame_ids
        assert np.allclose(
            fixed.translations(), pred.translations(), rtol=0, atol=1e-9
        )

    def test_measurement_trust_ordering(self, small_room):
        # accurate measurements with a tight R pull the filter onto the
        # truth; a loose R leaves it on the drifting odometry
        frames = list(range(5))
        setup = FusionSetup(window=MapWindow(1, 1), map_voxel=0.4, scan_voxel=0.3)
        truth = truth_trajectory(small_room, frames)
        tight = run_fusion(
            small_room, frames, "fixed_cov", setup, fixed_cov=1e-8 * np.eye(6),
            seed=3, align=truth_oracle(small_room, frames),
        )
        loose = run_fusion(
            small_room, frames, "fixed_cov", setup, fixed_cov=1e2 * np.eye(6),
            seed=3, align=truth_oracle(small_room, frames),
        )
        assert ade(tight, truth) < 1e-4
        assert ade(loose, truth) > 1e-2
        assert ade(tight, truth) < ade(loose, truth)

    def test_seeded_odometry_noise_repeats(self, small_room):
        frames = list(range(4))
        setup = FusionSetup(window=MapWindow(1, 1), map_voxel=0.4, scan_voxel=0.3)
        passthrough = lambda source, target, initial, cfg: SimpleNamespace(estimate=initial)
        a = run_fusion(small_room, frames, "icp_only", setup, seed=9, align=passthrough)
        b = run_fusion(small_room, frames, "icp_only", setup, seed=9, align=passthrough)
        c = run_fusion(small_room, frames, "icp_only", setup, seed=10, align=passthrough)
        assert np.array_equal(a.translations(), b.translations())
        assert not np.array_equal(a.translations(), c.translations())

    def test_real_icp_tracks_room(self, small_room):
        frames = list(range(5))
        setup = FusionSetup(window=MapWindow(1, 1), map_voxel=0.4, scan_voxel=0.3)
        truth = truth_trajectory(small_room, frames)
        fused = run_fusion(
            small_room, frames, "fixed_cov", setup, fixed_cov=1e-4 * np.eye(6), seed=3
        )
        raw = run_fusion(small_room, frames, "icp_only", setup, seed=3)
        assert ade(fused, truth) < 0.05
        assert ade(raw, truth) < 0.05

    def test_modes_tuple(self):
        assert MODES == ("icp_only", "fixed_cov", "predicted_cov")
