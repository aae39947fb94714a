"""Point clouds: scan I/O, voxel filtering, normals, neighbor search, maps.

Scan files follow the KITTI velodyne layout: consecutive 16-byte records
of little-endian float32 (x, y, z, reflectance), no header. Pose files
hold 12 space-separated values per line, the row-major top 3x4 of a
homogeneous pose matrix, applied as-is.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import se3
from .errors import (
    EmptyCloud,
    EmptyIndex,
    EmptySequence,
    InvalidVoxelSize,
    MalformedScan,
    MissingPose,
    TooFewPoints,
)

_RECORD_BYTES = 16


class PointCloud:
    """Immutable set of 3D points with optional unit normals."""

    __slots__ = ("points", "normals")

    def __init__(self, points, normals=None):
        pts = np.array(points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        if normals is not None:
            nrm = np.array(normals, dtype=float)
            if nrm.shape != pts.shape:
                raise ValueError("normals must match points in shape")
            if not np.isfinite(nrm).all():
                raise ValueError("normals must be finite")
            lengths = np.linalg.norm(nrm, axis=1)
            if nrm.shape[0] and np.abs(lengths - 1.0).max() > 1e-6:
                raise ValueError("normals must have unit length")
            nrm.setflags(write=False)
        else:
            nrm = None
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __setattr__(self, name, value):
        raise AttributeError("PointCloud is immutable")

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class MapWindow:
    """Frames merged into a local map: `before` earlier, `after` later."""

    before: int = 20
    after: int = 10

    def __post_init__(self):
        if self.before < 0 or self.after < 0:
            raise ValueError("window bounds must be non-negative")


def load_kitti_scan(path) -> PointCloud:
    """Read a binary scan file; reflectance is dropped."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % _RECORD_BYTES != 0:
        raise MalformedScan(
            f"{path}: size {len(raw)} is not a multiple of {_RECORD_BYTES}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    pts = data[:, :3].astype(float)
    if not np.isfinite(pts).all():
        raise MalformedScan(f"{path}: non-finite coordinates")
    return PointCloud(pts)


def save_kitti_scan(path, cloud: PointCloud, reflectance=0.0):
    """Write a cloud in the binary scan layout (float32, 4 per record)."""
    n = len(cloud)
    data = np.empty((n, 4), dtype="<f4")
    data[:, :3] = cloud.points
    data[:, 3] = reflectance
    with open(path, "wb") as f:
        f.write(data.tobytes())


def load_kitti_poses(path) -> list:
    """Read one pose per line: 12 row-major values of the top 3x4."""
    poses = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split()]
            if len(vals) != 12:
                raise MalformedScan(
                    f"{path}:{lineno + 1}: expected 12 values, got {len(vals)}"
                )
            m = np.array(vals).reshape(3, 4)
            poses.append(se3.SE3(m[:, :3], m[:, 3]))
    return poses


def save_kitti_poses(path, poses):
    with open(path, "w") as f:
        for p in poses:
            m = np.hstack([p.R, p.t.reshape(3, 1)])
            f.write(" ".join(f"{v:.17g}" for v in m.reshape(-1)) + "\n")


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """Replace each occupied voxel by the centroid of its points.

    Voxel keys are floor(p / voxel_size); output is ordered by key, so the
    result does not depend on input point order beyond summation roundoff.
    Normals are dropped (centroids need re-estimation).
    """
    if not np.isfinite(voxel_size) or voxel_size <= 0:
        raise InvalidVoxelSize(f"voxel_size must be positive, got {voxel_size}")
    pts = cloud.points
    if pts.shape[0] == 0:
        return PointCloud(pts)
    keys = np.floor(pts / voxel_size).astype(np.int64)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((uniq.shape[0], 3))
    np.add.at(sums, inv, pts)
    counts = np.bincount(inv, minlength=uniq.shape[0]).astype(float)
    return PointCloud(sums / counts[:, None])


def estimate_normals(cloud: PointCloud, k: int = 10) -> PointCloud:
    """Attach plane normals from the k-nearest-neighbor scatter.

    The neighborhood of a point is the point itself plus its k nearest
    neighbors; the normal is the eigenvector of the smallest scatter
    eigenvalue, flipped so that dot(normal, -point) >= 0 (toward the
    coordinate origin, where the sensor sits for raw scans).
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    pts = cloud.points
    n = pts.shape[0]
    if n < k + 1:
        raise TooFewPoints(f"need at least {k + 1} points, have {n}")
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k + 1)
    neigh = pts[idx]  # (n, k+1, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    scatter = np.einsum("nij,nik->njk", centered, centered)
    _, vecs = np.linalg.eigh(scatter)
    normals = vecs[:, :, 0]  # eigenvector of the smallest eigenvalue
    flip = np.einsum("ij,ij->i", normals, -pts) < 0.0
    normals[flip] *= -1.0
    lengths = np.linalg.norm(normals, axis=1)
    normals /= lengths[:, None]
    return PointCloud(pts, normals)


def transform_cloud(cloud: PointCloud, t: se3.SE3) -> PointCloud:
    """Apply a rigid transform to points (and rotate normals if present)."""
    pts = cloud.points @ t.R.T + t.t
    nrm = None if cloud.normals is None else cloud.normals @ t.R.T
    return PointCloud(pts, nrm)


class NeighborIndex:
    """Nearest-neighbor index over a cloud (space-partitioning tree)."""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._tree = cKDTree(cloud.points) if len(cloud) else None

    def __len__(self):
        return len(self.cloud)

    def nearest(self, query):
        """Single query -> (point_id, distance); ties go to the lowest id."""
        if self._tree is None:
            raise EmptyIndex("nearest-neighbor query against an empty index")
        q = np.asarray(query, dtype=float).reshape(3)
        dist, idx = self._tree.query(q)
        candidates = self._tree.query_ball_point(q, dist)
        if len(candidates) > 1:
            cand = np.sort(np.asarray(candidates))
            d = np.linalg.norm(self.cloud.points[cand] - q, axis=1)
            best = d.min()
            idx = int(cand[d == best].min())
            dist = float(best)
        return int(idx), float(dist)

    def query_batch(self, queries, workers: int = 1):
        """Vectorized queries -> (distances, ids). No tie canonicalization."""
        if self._tree is None:
            raise EmptyIndex("nearest-neighbor query against an empty index")
        d, i = self._tree.query(np.asarray(queries, dtype=float), workers=workers)
        return d, i


def build_local_map(
    scans,
    poses,
    k: int,
    window: MapWindow,
    map_voxel: float = 1.0,
    normal_k: int = 10,
) -> PointCloud:
    """Merge a window of scans around frame k into one normal-equipped map.

    Frames k-before .. k+after are clamped to the sequence bounds, each
    scan is moved into the shared frame by its pose, the union is voxel
    filtered at map_voxel, and normals are estimated on the result. Maps
    too small to define a neighborhood (under 4 points) come back without
    normals; between 4 points and normal_k the neighborhood shrinks to
    the whole map.
    """
    n = len(scans)
    if n == 0:
        raise EmptySequence("no scans available")
    if not 0 <= k < n:
        raise MissingPose(f"frame {k} outside sequence of length {n}")
    lo = max(0, k - window.before)
    hi = min(n - 1, k + window.after)
    parts = []
    for i in range(lo, hi + 1):
        if i >= len(poses) or poses[i] is None:
            raise MissingPose(f"frame {i} has no pose")
        parts.append(transform_cloud(scans[i], poses[i]).points)
    merged = PointCloud(np.vstack(parts))
    reduced = voxel_downsample(merged, map_voxel)
    if len(reduced) == 0:
        raise EmptyCloud("local map is empty after voxel filtering")
    if len(reduced) < 4:
        return reduced
    return estimate_normals(reduced, k=min(normal_k, len(reduced) - 1))
