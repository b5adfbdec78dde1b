# -*- coding: utf-8 -*-
"""
Weighted motion-only pose optimisation and map point bookkeeping.

Keypoint and map point static probabilities enter the pose estimate as
per-observation weights of a Huber-robust reprojection least squares
problem, solved by Levenberg-Marquardt with a left-multiplied SE(3)
increment (translation, rotation vector).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dynaweight.errors import PoseUnderconstrained
from dynaweight.geometry import back_project_points, project_points

logger = logging.getLogger(__name__)

EXCLUDED = None


@dataclass(frozen=True)
class OptimizerConfig:
    huber_delta: float = 2.45
    chi2_2dof: float = 5.991
    max_iters: int = 10
    min_observations: int = 6
    initial_lambda: float = 1e-4
    step_tolerance: float = 1e-10


@dataclass
class MapPoint:
    point_id: int
    position: np.ndarray
    m: float
    last_observed: int
    keypoint_id: Optional[int] = None


@dataclass(frozen=True)
class Observation:
    map_point_id: int
    keypoint_id: int
    uv: tuple
    weight: float


@dataclass
class PoseResult:
    pose: object
    n_inliers: int
    degraded: bool = False
    iterations: int = 0
    costs: list = field(default_factory=list)


def compose_weight(k, m, km_gap=0.4):
    """
    Optimisation weight of an observation, or EXCLUDED when the keypoint and
    map point probabilities disagree by more than `km_gap`.
    """
    if abs(k - m) > km_gap:
        return EXCLUDED
    return k * m


def update_map_probability(m, k, alpha=0.3):
    "Exponential moving average of the map point probability towards K"
    return min(max((1. - alpha) * m + alpha * k, 0.), 1.)


def reprojection_residuals(pose, points, uv, k):
    """
    Pixel residuals project(pose * X) - uv, shape (N, 2), with a mask of
    points in front of the camera.
    """
    predicted, valid = project_points(pose.transform(points), k)
    return predicted - np.asarray(uv, dtype=float).reshape(-1, 2), valid


def reprojection_jacobians(pose, points, k):
    """
    Derivatives of the residuals with respect to the increment
    (rho, phi) of PoseSE3.retract, shape (N, 2, 6).
    """
    xc = pose.transform(np.asarray(points, dtype=float).reshape(-1, 3))
    x, y, z = xc[:, 0], xc[:, 1], xc[:, 2]
    z_inv = 1. / z
    n = len(xc)
    j_proj = np.zeros((n, 2, 3))
    j_proj[:, 0, 0] = k.fx * z_inv
    j_proj[:, 0, 2] = -k.fx * x * z_inv**2
    j_proj[:, 1, 1] = k.fy * z_inv
    j_proj[:, 1, 2] = -k.fy * y * z_inv**2

    # d(xc)/d(rho) = I, d(xc)/d(phi) = -[xc]x
    j_point = np.zeros((n, 3, 6))
    j_point[:, :, :3] = np.eye(3)
    j_point[:, 0, 4] = z
    j_point[:, 0, 5] = -y
    j_point[:, 1, 3] = -z
    j_point[:, 1, 5] = x
    j_point[:, 2, 3] = y
    j_point[:, 2, 4] = -x
    return np.einsum("nij,njk->nik", j_proj, j_point)


def huber_cost(squared, delta):
    norm = np.sqrt(squared)
    return np.where(squared <= delta**2, squared, 2. * delta * norm - delta**2)


def huber_weights(squared, delta):
    norm = np.sqrt(squared)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(squared <= delta**2, 1., delta / norm)


def weighted_cost(pose, points, uv, weights, k, delta):
    residuals, valid = reprojection_residuals(pose, points, uv, k)
    squared = np.where(valid, (residuals**2).sum(axis=1), 0.)
    return float(np.sum(np.where(valid, weights * huber_cost(squared, delta), 0.)))


def solve_pose(points, uv, weights, initial_pose, k, cfg=None):
    """
    Weighted Huber reprojection least squares over the camera pose, with
    map points held fixed. Observations with zero weight do not contribute.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float).ravel()
    active = weights > 0
    if active.sum() < cfg.min_observations:
        raise PoseUnderconstrained(
            "%i weighted observations, need %i"
            % (active.sum(), cfg.min_observations)
        )
    points, uv, weights = points[active], uv[active], weights[active]
    delta = cfg.huber_delta

    pose = initial_pose
    cost = weighted_cost(pose, points, uv, weights, k, delta)
    costs = [cost]
    damping = cfg.initial_lambda
    converged = False
    iterations = 0
    while iterations < cfg.max_iters:
        iterations += 1
        residuals, valid = reprojection_residuals(pose, points, uv, k)
        squared = np.where(valid, (residuals**2).sum(axis=1), 0.)
        w = np.where(valid, weights * huber_weights(squared, delta), 0.)
        residuals = np.where(valid[:, None], residuals, 0.)
        jacobians = reprojection_jacobians(pose, points, k)
        jacobians = np.where(valid[:, None, None], jacobians, 0.)

        hessian = np.einsum("n,nij,nik->jk", w, jacobians, jacobians)
        gradient = np.einsum("n,nij,ni->j", w, jacobians, residuals)
        if not np.any(gradient):
            converged = True
            break
        damped = hessian + damping * np.diag(np.diag(hessian))
        try:
            step = np.linalg.solve(damped, -gradient)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(damped, -gradient, rcond=None)[0]

        candidate = pose.retract(step)
        candidate_cost = weighted_cost(candidate, points, uv, weights, k, delta)
        if candidate_cost <= cost:
            pose = candidate
            cost = candidate_cost
            costs.append(cost)
            damping = max(damping / 10., 1e-12)
            if np.linalg.norm(step) < cfg.step_tolerance:
                converged = True
                break
        else:
            damping *= 10.
            if np.linalg.norm(step) < cfg.step_tolerance:
                converged = True
                break

    residuals, valid = reprojection_residuals(pose, points, uv, k)
    squared = (residuals**2).sum(axis=1)
    n_inliers = int(np.sum(valid & (squared < cfg.chi2_2dof)))
    if not converged:
        logger.debug("pose optimisation stopped after %i iterations", iterations)
    return PoseResult(
        pose=pose,
        n_inliers=n_inliers,
        degraded=not converged,
        iterations=iterations,
        costs=costs,
    )


def optimize_pose(observations, map_points, initial_pose, k, cfg=None):
    """
    Pose from observations of map points; `map_points` maps id to MapPoint.
    Returns a PoseResult whose n_inliers feeds the statistical confidence
    of the second stage.
    """
    observations = [
        o for o in observations
        if o.weight is not EXCLUDED and o.map_point_id in map_points
    ]
    if not observations:
        raise PoseUnderconstrained("no observations of map points")
    points = np.array([map_points[o.map_point_id].position for o in observations])
    uv = np.array([o.uv for o in observations])
    weights = np.array([o.weight for o in observations])
    return solve_pose(points, uv, weights, initial_pose, k, cfg)


def create_map_points(keypoint_ids, uv, depth, probabilities, pose, k,
                      first_id=0, frame_id=0):
    """
    Map points for keypoints with valid depth. M starts at the keypoint's K;
    keypoints with K = 0 carry no landmark.
    """
    world = pose.inverse().transform(back_project_points(uv, depth, k))
    created = []
    point_id = first_id
    for keypoint_id, position, probability in zip(
            keypoint_ids, world, probabilities):
        if probability <= 0 or not np.all(np.isfinite(position)):
            continue
        created.append(
            MapPoint(
                point_id=point_id,
                position=position,
                m=float(probability),
                last_observed=frame_id,
                keypoint_id=int(keypoint_id),
            )
        )
        point_id += 1
    return created


class MapStore(object):
    """
    Map points of one sequence, with probability maintenance and deletion.
    """

    def __init__(self, delete_below=0.3, alpha=0.3, max_age=5):
        self.delete_below = delete_below
        self.alpha = alpha
        self.max_age = max_age
        self.points = {}
        self.next_id = 0

    def __len__(self):
        return len(self.points)

    def __contains__(self, point_id):
        return point_id in self.points

    def get(self, point_id):
        return self.points.get(point_id)

    def probabilities(self):
        return {i: p.m for i, p in self.points.items()}

    def add(self, created):
        for point in created:
            self.points[point.point_id] = point
            self.next_id = max(self.next_id, point.point_id + 1)

    def create(self, keypoint_ids, uv, depth, probabilities, pose, k,
               frame_id=0):
        created = create_map_points(
            keypoint_ids, uv, depth, probabilities, pose, k,
            first_id=self.next_id, frame_id=frame_id,
        )
        self.add(created)
        return created

    def update(self, evidence, frame_id):
        """
        Move M towards the keypoint probability of every observed map point
        and delete those falling below the threshold. `evidence` maps map
        point id to K. Returns the deleted ids.
        """
        deleted = []
        for point_id in sorted(evidence):
            point = self.points.get(point_id)
            if point is None:
                continue
            point.m = update_map_probability(
                point.m, evidence[point_id], self.alpha,
            )
            point.last_observed = frame_id
            if point.m < self.delete_below:
                deleted.append(point_id)
                del self.points[point_id]
        return deleted

    def cull(self, frame_id):
        "Drop map points unobserved for more than `max_age` frames"
        stale = [
            i for i, p in self.points.items()
            if frame_id - p.last_observed > self.max_age
        ]
        for point_id in stale:
            del self.points[point_id]
        return stale


def reassociate(map_points, pose, keypoint_ids, uv, k, gate_px, exclude=()):
    """
    Pairs (row, map point id) for keypoints that a live map point was
    created from and that lie within `gate_px` pixels of its projection
    through `pose`. A keypoint id seen with several map points takes the
    closest one. Map points in `exclude` are skipped.
    """
    if gate_px <= 0:
        return []
    exclude = set(exclude)
    rows_by_id = {int(i): r for r, i in enumerate(keypoint_ids)}
    candidates = [
        (rows_by_id[p.keypoint_id], point_id)
        for point_id, p in sorted(map_points.items())
        if point_id not in exclude and p.keypoint_id in rows_by_id
    ]
    if not candidates:
        return []
    rows = np.array([r for r, _ in candidates], dtype=int)
    positions = np.array([map_points[i].position for _, i in candidates])
    projected, in_front = project_points(pose.transform(positions), k)
    distances = np.linalg.norm(projected - np.asarray(uv, dtype=float)[rows], axis=1)
    best = {}
    for (row, point_id), valid, distance in zip(candidates, in_front, distances):
        if not valid or not distance <= gate_px:
            continue
        if row not in best or distance < best[row][0]:
            best[row] = (distance, point_id)
    return sorted((row, point_id) for row, (_, point_id) in best.items())
