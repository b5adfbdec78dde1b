# -*- coding: utf-8 -*-
"""
Pinhole camera model, rigid transforms and two-view epipolar geometry.

Camera poses map world coordinates into the camera frame (x_c = R x_w + t).
The relative transform between two frames is rel = T_k * T_{k-1}^{-1}, so
that it carries previous-frame camera coordinates into the current frame.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from dynaweight.errors import (
    BehindCamera,
    DegenerateLine,
    DegenerateTranslation,
    DepthInvalid,
    InsufficientCorrespondences,
    NoConsensus,
)

logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 8


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        values = (self.fx, self.fy, self.cx, self.cy)
        if not np.all(np.isfinite(values)):
            raise ValueError("intrinsics must be finite: %s" % (values,))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(
                "focal lengths must be positive: fx=%g fy=%g"
                % (self.fx, self.fy)
            )

    @classmethod
    def from_sequence(cls, values):
        fx, fy, cx, cy = [float(v) for v in values]
        return cls(fx, fy, cx, cy)

    def as_list(self):
        return [self.fx, self.fy, self.cx, self.cy]

    @property
    def matrix(self):
        return np.array(
            [
                [self.fx, 0., self.cx],
                [0., self.fy, self.cy],
                [0., 0., 1.],
            ]
        )

    @property
    def inverse_matrix(self):
        return np.array(
            [
                [1. / self.fx, 0., -self.cx / self.fx],
                [0., 1. / self.fy, -self.cy / self.fy],
                [0., 0., 1.],
            ]
        )


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float
    z: Optional[float] = None

    def __post_init__(self):
        if self.z is not None and not self.z > 0:
            raise DepthInvalid("depth must be positive, got %r" % (self.z,))

    @property
    def uv(self):
        return np.array([self.u, self.v])

    @property
    def homogeneous(self):
        return np.array([self.u, self.v, 1.])


class PoseSE3(object):
    """
    Rigid transform x' = R x + t.
    """

    def __init__(self, rotation=None, translation=None):
        if rotation is None:
            rotation = np.eye(3)
        if translation is None:
            translation = np.zeros(3)
        self.rotation = np.array(rotation, dtype=float).reshape(3, 3)
        self.translation = np.array(translation, dtype=float).reshape(3)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_quaternion(cls, translation, quaternion):
        "quaternion in (x, y, z, w) order"
        rotation = Rotation.from_quat(np.asarray(quaternion, dtype=float))
        return cls(rotation.as_matrix(), translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation=None):
        return cls(Rotation.from_rotvec(rotvec).as_matrix(), translation)

    def quaternion(self):
        "unit quaternion (x, y, z, w) with w >= 0"
        q = Rotation.from_matrix(self.rotation).as_quat()
        if q[3] < 0:
            q = -q
        return q / np.linalg.norm(q)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self):
        rt = self.rotation.T
        return PoseSE3(rt, -rt.dot(self.translation))

    def compose(self, other):
        "self after other"
        return PoseSE3(
            self.rotation.dot(other.rotation),
            self.rotation.dot(other.translation) + self.translation,
        )

    def transform(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.rotation.dot(points) + self.translation
        return points.dot(self.rotation.T) + self.translation

    def retract(self, delta):
        """
        Left-multiplied increment. delta = (rho, phi): translation and
        rotation vector, x' = exp(phi) (R x + t) + rho.
        """
        delta = np.asarray(delta, dtype=float)
        rho, phi = delta[:3], delta[3:]
        r_delta = Rotation.from_rotvec(phi).as_matrix()
        return PoseSE3(
            orthonormalize(r_delta.dot(self.rotation)),
            r_delta.dot(self.translation) + rho,
        )

    def rotation_angle(self):
        "rotation angle in radians"
        return np.linalg.norm(Rotation.from_matrix(self.rotation).as_rotvec())

    def is_valid(self, tolerance=1e-9):
        r = self.rotation
        return (
            np.allclose(r.T.dot(r), np.eye(3), atol=tolerance)
            and abs(np.linalg.det(r) - 1.) < tolerance
            and np.all(np.isfinite(self.translation))
        )

    def copy(self):
        return PoseSE3(self.rotation.copy(), self.translation.copy())

    def __repr__(self):
        return "PoseSE3(t=%s, q=%s)" % (
            np.array2string(self.translation, precision=6),
            np.array2string(self.quaternion(), precision=6),
        )


def orthonormalize(rotation):
    "Nearest rotation matrix in the Frobenius sense"
    u, _, vt = np.linalg.svd(rotation)
    r = u.dot(vt)
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u.dot(vt)
    return r


def relative_pose(current, previous):
    "Transform from previous-camera to current-camera coordinates"
    return current.compose(previous.inverse())


def skew(v):
    x, y, z = v
    return np.array(
        [
            [0., -z, y],
            [z, 0., -x],
            [-y, x, 0.],
        ]
    )


def back_project(p, k):
    "Pixel with depth to camera coordinates"
    z = p.z
    if z is None or not np.isfinite(z) or z <= 0:
        raise DepthInvalid("cannot back-project pixel without positive depth")
    return np.array(
        [
            (p.u - k.cx) * z / k.fx,
            (p.v - k.cy) * z / k.fy,
            z,
        ]
    )


def back_project_points(uv, depth, k):
    """
    Vectorised back_project. Rows without a finite positive depth come back
    as NaN.
    """
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    depth = np.asarray(depth, dtype=float).reshape(-1)
    valid = np.isfinite(depth) & (depth > 0)
    z = np.where(valid, depth, np.nan)
    return np.column_stack(
        [
            (uv[:, 0] - k.cx) * z / k.fx,
            (uv[:, 1] - k.cy) * z / k.fy,
            z,
        ]
    )


def project(x, k):
    "Camera coordinates to pixel"
    x = np.asarray(x, dtype=float)
    if not x[2] > 0:
        raise BehindCamera("point has z = %g" % x[2])
    return PixelPoint(
        k.fx * x[0] / x[2] + k.cx,
        k.fy * x[1] / x[2] + k.cy,
        float(x[2]),
    )


def project_points(points, k):
    """
    Vectorised project. Returns (uv, valid); uv rows are NaN where the point
    is not in front of the camera.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    z = points[:, 2]
    valid = np.isfinite(z) & (z > 0)
    safe_z = np.where(valid, z, np.nan)
    uv = np.column_stack(
        [
            k.fx * points[:, 0] / safe_z + k.cx,
            k.fy * points[:, 1] / safe_z + k.cy,
        ]
    )
    return uv, valid


def projection_error(prev, cur, rel, k):
    "Pixel distance between cur and prev carried through rel"
    x = rel.transform(back_project(prev, k))
    p = project(x, k)
    return float(np.hypot(cur.u - p.u, cur.v - p.v))


def projection_errors(prev_uv, prev_depth, cur_uv, rel, k):
    """
    Vectorised projection_error. NaN where the previous depth is invalid or
    the transformed point lies behind the camera.
    """
    points = rel.transform(back_project_points(prev_uv, prev_depth, k))
    uv, valid = project_points(points, k)
    cur_uv = np.asarray(cur_uv, dtype=float).reshape(-1, 2)
    d = np.hypot(cur_uv[:, 0] - uv[:, 0], cur_uv[:, 1] - uv[:, 1])
    return np.where(valid, d, np.nan)


def normalise_fundamental(f):
    "Unit Frobenius norm, largest-magnitude entry positive"
    f = np.asarray(f, dtype=float)
    f = f / np.linalg.norm(f)
    flat = f.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        f = -f
    return f


def enforce_rank2(f):
    u, s, vt = np.linalg.svd(f)
    s[2] = 0.
    return u.dot(np.diag(s)).dot(vt)


def fundamental_from_pose(rel, k, min_translation=1e-12):
    """
    F = K^-T [t]x R K^-1 for the relative transform rel, such that
    cur^T F prev = 0 for static points.
    """
    if np.linalg.norm(rel.translation) <= min_translation:
        raise DegenerateTranslation(
            "fundamental matrix undefined for zero translation"
        )
    k_inv = k.inverse_matrix
    f = k_inv.T.dot(skew(rel.translation)).dot(rel.rotation).dot(k_inv)
    return normalise_fundamental(f)


def _homogeneous(uv):
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    return np.column_stack([uv, np.ones(len(uv))])


def epipolar_distance(f, prev, cur):
    "Distance of cur to the epipolar line of prev"
    line = np.asarray(f).dot(prev.homogeneous)
    norm = np.hypot(line[0], line[1])
    if norm == 0.:
        raise DegenerateLine("epipolar line has A = B = 0")
    return float(abs(cur.homogeneous.dot(line)) / norm)


def epipolar_distances(f, prev_uv, cur_uv):
    "Vectorised epipolar_distance, NaN for degenerate lines"
    lines = _homogeneous(prev_uv).dot(np.asarray(f).T)
    norm = np.hypot(lines[:, 0], lines[:, 1])
    numerator = np.abs(np.sum(_homogeneous(cur_uv) * lines, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = numerator / norm
    return np.where(norm > 0, d, np.nan)


def _hartley_normalisation(uv):
    centroid = uv.mean(axis=0)
    mean_distance = np.sqrt(((uv - centroid)**2).sum(axis=1)).mean()
    scale = np.sqrt(2.) / mean_distance if mean_distance > 0 else 1.
    transform = np.array(
        [
            [scale, 0., -scale * centroid[0]],
            [0., scale, -scale * centroid[1]],
            [0., 0., 1.],
        ]
    )
    return (uv - centroid) * scale, transform


def eight_point(prev_uv, cur_uv):
    """
    Normalised eight-point estimate from at least eight correspondences,
    rank 2 enforced.
    """
    prev_uv = np.asarray(prev_uv, dtype=float).reshape(-1, 2)
    cur_uv = np.asarray(cur_uv, dtype=float).reshape(-1, 2)
    if len(prev_uv) < MIN_CORRESPONDENCES:
        raise InsufficientCorrespondences(
            "need %i correspondences, got %i"
            % (MIN_CORRESPONDENCES, len(prev_uv))
        )
    x1, t1 = _hartley_normalisation(prev_uv)
    x2, t2 = _hartley_normalisation(cur_uv)
    a = np.column_stack(
        [
            x2[:, 0] * x1[:, 0],
            x2[:, 0] * x1[:, 1],
            x2[:, 0],
            x2[:, 1] * x1[:, 0],
            x2[:, 1] * x1[:, 1],
            x2[:, 1],
            x1[:, 0],
            x1[:, 1],
            np.ones(len(x1)),
        ]
    )
    _, _, vt = np.linalg.svd(a)
    f = enforce_rank2(vt[-1].reshape(3, 3))
    return normalise_fundamental(t2.T.dot(f).dot(t1))


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 1.0
    iterations: int = 200


def estimate_fundamental_ransac(
        prev_uv,
        cur_uv,
        threshold=1.0,
        iterations=200,
        seed=None,
        rng=None,
):
    """
    Robust fundamental matrix from pixel correspondences.

    Fixed-iteration RANSAC over eight-point samples; the best consensus set
    is re-estimated. Pass either a seed or a numpy Generator for
    reproducible results. Returns (F, inlier flags).
    """
    prev_uv = np.asarray(prev_uv, dtype=float).reshape(-1, 2)
    cur_uv = np.asarray(cur_uv, dtype=float).reshape(-1, 2)
    n = len(prev_uv)
    if n < MIN_CORRESPONDENCES:
        raise InsufficientCorrespondences(
            "need %i correspondences, got %i" % (MIN_CORRESPONDENCES, n)
        )
    if rng is None:
        rng = np.random.default_rng(seed)

    best_inliers = None
    best_count = -1
    for _ in range(iterations):
        sample = rng.choice(n, MIN_CORRESPONDENCES, replace=False)
        try:
            f = eight_point(prev_uv[sample], cur_uv[sample])
        except np.linalg.LinAlgError:
            continue
        inliers = epipolar_distances(f, prev_uv, cur_uv) < threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_count < MIN_CORRESPONDENCES:
        raise NoConsensus(
            "best consensus %i of %i correspondences" % (max(best_count, 0), n)
        )

    f = eight_point(prev_uv[best_inliers], cur_uv[best_inliers])
    inliers = epipolar_distances(f, prev_uv, cur_uv) < threshold
    if inliers.sum() < MIN_CORRESPONDENCES:
        raise NoConsensus("refined model lost its consensus set")
    logger.debug("fundamental matrix: %i of %i inliers", inliers.sum(), n)
    return f, inliers
