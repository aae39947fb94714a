"""Point-to-plane ICP with Gauss-Newton updates on SE(3).

Each iteration matches transformed source points to their nearest map
points, gates matches by distance, and solves the 6x6 normal equations
for a twist increment applied on the left: T <- exp(delta) o T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import NeighborIndex, PointCloud
from .errors import NoCorrespondences

# Relative eigenvalue threshold below which the normal matrix counts as
# rank deficient and the increment falls back to the pseudo-inverse.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 30
    translation_eps: float = 1e-4
    rotation_eps: float = 1e-4
    max_correspondence_distance: float = 2.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("translation_eps", "rotation_eps", "max_correspondence_distance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class IcpResult:
    estimate: se3.SE3
    converged: bool
    iterations_used: int
    final_rmse: float
    condition_number: float
    singular: bool
    normal_matrix: np.ndarray


def _correspondences(points, index: NeighborIndex, gate: float, workers: int):
    d, j = index.query_batch(points, workers=workers)
    mask = d <= gate
    if not mask.any():
        raise NoCorrespondences("correspondence gate rejected every candidate pair")
    return mask, j[mask]


def point_to_plane_rmse(
    source: PointCloud,
    target: PointCloud,
    estimate: se3.SE3,
    config: IcpConfig,
    index: NeighborIndex | None = None,
    workers: int = 1,
) -> float:
    """RMSE of gated point-to-plane residuals at a fixed estimate."""
    if index is None:
        index = NeighborIndex(target)
    p = estimate.apply(source.points)
    mask, j = _correspondences(p, index, config.max_correspondence_distance, workers)
    diff = p[mask] - target.points[j]
    r = np.einsum("ij,ij->i", diff, target.normals[j])
    return float(np.sqrt(np.mean(r**2)))


def icp_point_to_plane(
    source: PointCloud,
    target: PointCloud,
    initial: se3.SE3,
    config: IcpConfig = IcpConfig(),
    index: NeighborIndex | None = None,
    workers: int = 1,
) -> IcpResult:
    """Align source to a normal-equipped target starting from `initial`.

    Stops once the increment falls below both epsilons (converged) or the
    iteration budget runs out. A rank-deficient normal matrix is solved by
    pseudo-inverse and flagged in the result instead of raising; the fully
    unobservable directions simply keep their initial values.
    """
    if target.normals is None:
        raise ValueError("target must carry normals for point-to-plane ICP")
    if index is None:
        index = NeighborIndex(target)
    gate = config.max_correspondence_distance
    src = source.points
    tgt = target.points
    nrm = target.normals

    estimate = initial
    converged = False
    singular = False
    cond = np.inf
    normal_matrix = np.zeros((6, 6))
    iterations = 0
    for _ in range(config.max_iterations):
        iterations += 1
        p = estimate.apply(src)
        mask, j = _correspondences(p, index, gate, workers)
        pm = p[mask]
        n = nrm[j]
        r = np.einsum("ij,ij->i", pm - tgt[j], n)
        jac = np.hstack([n, np.cross(pm, n)])
        A = jac.T @ jac
        b = -(jac.T @ r)
        eig = np.linalg.eigvalsh(A)
        if eig[0] < _RANK_TOL * max(eig[-1], np.finfo(float).tiny):
            singular = True
            cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
            delta = np.linalg.pinv(A, rcond=_RANK_TOL) @ b
        else:
            cond = eig[-1] / eig[0]
            delta = np.linalg.solve(A, b)
        normal_matrix = A
        estimate = se3.exp(delta) @ estimate
        if (
            np.linalg.norm(delta[:3]) < config.translation_eps
            and np.linalg.norm(delta[3:]) < config.rotation_eps
        ):
            converged = True
            break

    rmse = point_to_plane_rmse(source, target, estimate, config, index, workers)
    return IcpResult(
        estimate=estimate,
        converged=converged,
        iterations_used=iterations,
        final_rmse=rmse,
        condition_number=float(cond),
        singular=singular,
        normal_matrix=normal_matrix,
    )
