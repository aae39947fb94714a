"""Monte-Carlo covariance labels on two scenes with opposite geometry.

The room constrains every direction, so the sampled alignment errors stay
small and roughly isotropic. The corridor runs along x with nothing to
stop sliding, and the label's Var(u_x) blows up relative to Var(u_y).

Run: python3 demos/03_monte_carlo_labels.py  (about 30 s)
"""
import numpy as np

from licov.cloud import MapWindow, build_local_map, voxel_downsample
from licov.icp import IcpConfig
from licov.mcgen import PerturbationSpec, run_monte_carlo
from licov.scenes import make_synthetic_scene

np.set_printoptions(precision=2)


def label_for(seq, k, spec, map_voxel):
    local_map = build_local_map(seq.scans, seq.poses, k, MapWindow(1, 1),
                                map_voxel, 10)
    scan = voxel_downsample(seq.scan(k), 0.1)
    return run_monte_carlo(scan, local_map, seq.pose(k), spec, 60,
                           IcpConfig(), seed=0, frame_id=k)


room = make_synthetic_scene("room", seed=0)
rec = label_for(room, 5, PerturbationSpec(), map_voxel=0.2)
var = np.diag(rec.covariance)
print("room frame 5, translation variances (m^2):", var[:3])
print(f"  var(u_x)/var(u_y) = {var[0] / var[1]:.2f}, "
      f"{rec.diverged_count} of 60 draws diverged")

corridor = make_synthetic_scene("corridor", seed=0)
rec = label_for(corridor, 13, PerturbationSpec(2, 1, 1, 1, 1, 1), map_voxel=0.4)
var = np.diag(rec.covariance)
print("\ncorridor frame 13, translation variances (m^2):", var[:3])
print(f"  var(u_x)/var(u_y) = {var[0] / var[1]:.1f}, "
      f"{rec.diverged_count} of 60 draws diverged")
print("\nthe corridor label is strongly anisotropic: alignment along the "
      "axis is close to unobservable, which is exactly what the regressor "
      "is supposed to learn to predict from the raw scan.")
