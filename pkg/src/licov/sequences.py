"""Frame-indexed scan/pose sources consumed by the pipeline.

A sequence exposes len(), scan(k) in the sensor frame, and pose(k) as the
sensor-to-world transform. `scans` / `poses` are list-like views so the
map builder can index frames without loading everything up front.
"""
from __future__ import annotations

import functools
import os

from . import cloud, se3
from .errors import EmptySequence, MissingPose


class _View:
    def __init__(self, fn, length):
        self._fn = fn
        self._length = length

    def __len__(self):
        return self._length

    def __getitem__(self, i):
        if not 0 <= i < self._length:
            raise IndexError(i)
        return self._fn(i)


class Sequence:
    """Base class wiring scan()/pose() into indexable views."""

    def __len__(self):
        raise NotImplementedError

    def scan(self, k) -> cloud.PointCloud:
        raise NotImplementedError

    def pose(self, k) -> se3.SE3:
        raise NotImplementedError

    @property
    def scans(self):
        return _View(self.scan, len(self))

    @property
    def poses(self):
        return _View(self.pose, len(self))


class KittiSequence(Sequence):
    """Directory of zero-padded .bin scans plus a 12-value-per-line pose file."""

    def __init__(self, scan_dir, pose_file):
        if not os.path.isdir(scan_dir):
            raise MissingPose(f"scan directory not found: {scan_dir}")
        names = sorted(n for n in os.listdir(scan_dir) if n.endswith(".bin"))
        if not names:
            raise EmptySequence(f"no .bin scans in {scan_dir}")
        self._paths = [os.path.join(scan_dir, n) for n in names]
        self._poses = cloud.load_kitti_poses(pose_file)
        if len(self._poses) < len(self._paths):
            raise MissingPose(
                f"{pose_file}: {len(self._poses)} poses for {len(self._paths)} scans"
            )

    def __len__(self):
        return len(self._paths)

    @functools.lru_cache(maxsize=64)
    def scan(self, k):
        return cloud.load_kitti_scan(self._paths[k])

    def pose(self, k):
        return self._poses[k]


class InMemorySequence(Sequence):
    """Sequence over materialized clouds and poses (tests, small fixtures)."""

    def __init__(self, scans, poses):
        if len(scans) == 0:
            raise EmptySequence("no scans")
        if len(poses) < len(scans):
            raise MissingPose("fewer poses than scans")
        self._scans = list(scans)
        self._poses = list(poses)

    def __len__(self):
        return len(self._scans)

    def scan(self, k):
        return self._scans[k]

    def pose(self, k):
        return self._poses[k]


def parse_frames(expr, length) -> list:
    """Frame selection: 'a:b' (half-open, clamped), 'all', or 'i,j,k'."""
    expr = str(expr).strip()
    if expr in ("", "all"):
        return list(range(length))
    if ":" in expr:
        lo_s, hi_s = expr.split(":", 1)
        lo = int(lo_s) if lo_s else 0
        hi = int(hi_s) if hi_s else length
        return list(range(max(0, lo), min(length, hi)))
    frames = [int(x) for x in expr.split(",")]
    for f in frames:
        if not 0 <= f < length:
            raise ValueError(f"frame {f} outside sequence of length {length}")
    return frames
