# -*- coding: utf-8 -*-
"""
Synthetic scenes with a known camera trajectory, static background points,
moving (partly articulated) objects, detection boxes with scheduled dropouts
and per-keypoint static/dynamic labels.

Keypoint ids are point identities, so matches between consecutive frames
are exact apart from the configured match dropout.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from dynaweight.box_tracker import DetectionBox
from dynaweight.config import parse_fields, read_flat_file
from dynaweight.errors import ConfigError, SpecWarning
from dynaweight.geometry import (
    CameraIntrinsics,
    PoseSE3,
    back_project_points,
    project_points,
)
from dynaweight.io_eval import DYNAMIC, STATIC, Frame, TrajectoryEntry

logger = logging.getLogger(__name__)

TRAJECTORIES = ("line", "circle", "sinusoid")
MOTIONS = ("linear", "bounce")
ANCHORS = ("world", "camera")
MIN_DEPTH = 0.1
MIN_BOX_POINTS = 3


@dataclass
class SceneSpec:
    frames: int = 100
    rate: float = 30.0
    trajectory: str = "line"
    trajectory_speed: float = 0.01
    trajectory_amplitude: float = 0.3
    trajectory_period: float = 100.0
    trajectory_yaw: float = 0.0
    static_points: int = 200
    background_depth_min: float = 4.0
    background_depth_max: float = 8.0
    objects: int = 0
    object_class: str = "person"
    object_points: int = 300
    object_depth: float = 2.0
    object_size: float = 0.5
    object_velocity: str = "0,0,0"
    object_motion: str = "linear"
    object_period: int = 40
    object_anchor: str = "world"
    articulated_fraction: float = 0.3
    articulated_jitter: float = 0.03
    pixel_noise: float = 0.0
    depth_noise: float = 0.0
    match_dropout: float = 0.1
    dropouts: str = ""
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        problems = []
        if self.frames < 0 or self.static_points < 0 or self.objects < 0:
            problems.append("counts must be >= 0")
        if self.object_points < 0:
            problems.append("object_points must be >= 0")
        if self.pixel_noise < 0 or self.depth_noise < 0:
            problems.append("noise sigmas must be >= 0")
        if self.articulated_jitter < 0:
            problems.append("articulated_jitter must be >= 0")
        if not 0. <= self.articulated_fraction <= 1.:
            problems.append("articulated_fraction must lie in [0, 1]")
        if not 0. <= self.match_dropout <= 1.:
            problems.append("match_dropout must lie in [0, 1]")
        if self.trajectory not in TRAJECTORIES:
            problems.append("trajectory must be one of %s" % ", ".join(TRAJECTORIES))
        if self.object_motion not in MOTIONS:
            problems.append("object_motion must be one of %s" % ", ".join(MOTIONS))
        if self.object_anchor not in ANCHORS:
            problems.append("object_anchor must be one of %s" % ", ".join(ANCHORS))
        if self.trajectory_period <= 0 or self.object_period <= 0:
            problems.append("periods must be > 0")
        if not 0. < self.background_depth_min <= self.background_depth_max:
            problems.append("background depth range must be positive and ordered")
        if self.object_depth <= MIN_DEPTH or self.object_size <= 0:
            problems.append("object_depth and object_size must be positive")
        if self.rate <= 0 or self.width <= 0 or self.height <= 0:
            problems.append("rate, width and height must be > 0")
        if problems:
            raise ConfigError("; ".join(problems))
        self.velocities = self._parse_velocities()
        self.dropout_ranges = self._parse_dropouts()

    @property
    def intrinsics(self):
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    def _parse_velocities(self):
        rows = [r for r in self.object_velocity.split(";") if r.strip()]
        try:
            velocities = [[float(v) for v in r.split(",")] for r in rows]
        except ValueError:
            raise ConfigError("object_velocity: expected 'vx,vy,vz; ...'")
        if not velocities or any(len(v) != 3 for v in velocities):
            raise ConfigError("object_velocity: expected 'vx,vy,vz; ...'")
        return np.array(
            [velocities[i % len(velocities)] for i in range(self.objects)],
            dtype=float,
        ).reshape(-1, 3)

    def _parse_dropouts(self):
        "object index -> list of inclusive (first, last) frame ranges"
        ranges = {}
        for item in self.dropouts.split(","):
            item = item.strip()
            if not item:
                continue
            try:
                index, span = item.split(":")
                first, last = span.split("-")
                index, first, last = int(index), int(first), int(last)
            except ValueError:
                raise ConfigError(
                    "dropouts: expected 'object:first-last', got %r" % item
                )
            if not 0 <= index < self.objects:
                raise ConfigError("dropouts: no object %i" % index)
            if not 0 <= first <= last < self.frames:
                raise ConfigError(
                    "dropouts: range %i-%i outside [0, %i)"
                    % (first, last, self.frames)
                )
            ranges.setdefault(index, []).append((first, last))
        return ranges

    def dropped(self, index, frame):
        return any(
            first <= frame <= last
            for first, last in self.dropout_ranges.get(index, ())
        )


def load_scene_spec(path):
    values = parse_fields(read_flat_file(path), SceneSpec())
    return SceneSpec(**values)


def _yaw_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0., s], [0., 1., 0.], [-s, 0., c]])


def camera_pose(spec, frame):
    "Ground-truth world-to-camera pose; the camera looks along +z at frame 0"
    phase = 2. * np.pi * frame / spec.trajectory_period
    if spec.trajectory == "line":
        centre = np.array([spec.trajectory_speed * frame, 0., 0.])
    elif spec.trajectory == "circle":
        a = spec.trajectory_amplitude
        centre = np.array([a * np.sin(phase), 0., a * (1. - np.cos(phase))])
    else:
        centre = np.array(
            [
                spec.trajectory_speed * frame,
                spec.trajectory_amplitude * np.sin(phase),
                0.,
            ]
        )
    camera_to_world = PoseSE3(
        _yaw_matrix(spec.trajectory_yaw * np.sin(phase)), centre,
    )
    return camera_to_world.inverse()


def camera_centre(spec, frame):
    return camera_pose(spec, frame).inverse().translation


def object_offset(spec, index, frame):
    """
    World displacement of object `index` at `frame` from its start. Objects
    anchored to the camera also follow the camera centre.
    """
    velocity = spec.velocities[index]
    if spec.object_motion == "linear":
        offset = velocity * frame
    else:
        half = 0.5 * spec.object_period
        offset = velocity * (half - abs(frame % spec.object_period - half))
    if spec.object_anchor == "camera":
        offset = offset + camera_centre(spec, frame) - camera_centre(spec, 0)
    return offset


def object_moves(spec, index):
    "True when object `index` changes its world position during the scene"
    start = object_offset(spec, index, 0)
    return any(
        np.any(object_offset(spec, index, frame) != start)
        for frame in range(1, spec.frames)
    )


@dataclass
class SceneLayout:
    static_points: np.ndarray
    object_points: list
    articulated: list


def make_layout(spec, seed):
    "Point positions of a scene, from (spec, seed) alone"
    rng = np.random.default_rng([seed, 0])
    k = spec.intrinsics

    anchors = rng.integers(0, max(spec.frames, 1), spec.static_points)
    uv = np.column_stack(
        [
            rng.uniform(0., spec.width, spec.static_points),
            rng.uniform(0., spec.height, spec.static_points),
        ]
    )
    depth = rng.uniform(
        spec.background_depth_min, spec.background_depth_max,
        spec.static_points,
    )
    camera_points = back_project_points(uv, depth, k)
    static = np.zeros((spec.static_points, 3))
    for i, anchor in enumerate(anchors):
        static[i] = camera_pose(spec, int(anchor)).inverse().transform(
            camera_points[i]
        )

    first = camera_pose(spec, 0).inverse()
    s = spec.object_size
    extent = np.array([0.5 * s, s, 0.1])
    object_points = []
    articulated = []
    for index in range(spec.objects):
        centre = np.array(
            [(index - 0.5 * (spec.objects - 1)) * 2. * s, 0., spec.object_depth]
        )
        local = rng.uniform(-extent, extent, (spec.object_points, 3))
        object_points.append(first.transform(local + centre))
        n_articulated = int(round(spec.articulated_fraction * spec.object_points))
        flags = np.zeros(spec.object_points, dtype=bool)
        flags[rng.choice(spec.object_points, n_articulated, replace=False)] = True
        articulated.append(flags)
    return SceneLayout(static, object_points, articulated)


def _point_labels(spec, layout):
    "Per point id: owning object (-1 for background) and static flag"
    owners = [-1] * len(layout.static_points)
    static = [True] * len(layout.static_points)
    for index, flags in enumerate(layout.articulated):
        moving = object_moves(spec, index)
        jittering = spec.articulated_jitter > 0
        owners.extend([index] * len(flags))
        static.extend(not (moving or (jittering and f)) for f in flags)
    return np.array(owners, dtype=int), np.array(static, dtype=bool)


def world_points(spec, layout, frame, rng):
    "World positions of every point id at `frame`"
    parts = [layout.static_points]
    for index, points in enumerate(layout.object_points):
        moved = points + object_offset(spec, index, frame)
        jitter = rng.normal(0., spec.articulated_jitter, points.shape)
        parts.append(
            np.where(layout.articulated[index][:, None], moved + jitter, moved)
        )
    return np.concatenate(parts).reshape(-1, 3)


def generate_scene(spec, seed=0):
    """
    Frames, ground-truth trajectory and labels of a synthetic scene.
    Deterministic for a given (spec, seed); frame k draws its noise from a
    generator seeded with (seed, k).
    """
    k = spec.intrinsics
    layout = make_layout(spec, seed)
    owners, static = _point_labels(spec, layout)
    n_static = len(layout.static_points)

    frames = []
    trajectory = []
    labels = []
    seen = np.zeros(spec.objects, dtype=bool)
    previous_visible = None
    for frame_id in range(spec.frames):
        rng = np.random.default_rng([seed, 1, frame_id])
        pose = camera_pose(spec, frame_id)
        camera = pose.transform(world_points(spec, layout, frame_id, rng))
        uv, in_front = project_points(camera, k)
        visible = (
            in_front
            & (camera[:, 2] > MIN_DEPTH)
            & (uv[:, 0] >= 0.) & (uv[:, 0] < spec.width)
            & (uv[:, 1] >= 0.) & (uv[:, 1] < spec.height)
        )
        ids = np.flatnonzero(visible)

        noisy_uv = uv[ids] + rng.normal(0., spec.pixel_noise, (len(ids), 2))
        depth = camera[ids, 2] + rng.normal(0., spec.depth_noise, len(ids))
        depth = np.where(depth > 0, depth, np.nan)
        prev_ids = np.full(len(ids), -1, dtype=int)
        if previous_visible is not None:
            kept = rng.uniform(size=len(ids)) >= spec.match_dropout
            matched = previous_visible[ids] & kept
            prev_ids[matched] = ids[matched]

        detections = []
        for index in range(spec.objects):
            members = ids[owners[ids] == index]
            if len(members) < MIN_BOX_POINTS:
                continue
            seen[index] = True
            if spec.dropped(index, frame_id):
                continue
            lo = uv[members].min(axis=0)
            hi = uv[members].max(axis=0)
            box = (
                max(lo[0], 0.), max(lo[1], 0.),
                min(hi[0], spec.width - 1.), min(hi[1], spec.height - 1.),
            )
            if box[0] < box[2] and box[1] < box[3]:
                detections.append(
                    DetectionBox(spec.object_class, box, score=0.9)
                )

        entry = TrajectoryEntry.from_camera_pose(frame_id / spec.rate, pose)
        trajectory.append(entry)
        frames.append(
            Frame(
                frame_id=frame_id,
                timestamp=entry.timestamp,
                intrinsics=k,
                keypoint_ids=ids,
                uv=noisy_uv,
                depth=depth,
                prev_ids=prev_ids,
                detections=detections,
                gt=list(entry.translation) + list(entry.quaternion),
            )
        )
        for point_id in ids:
            labels.append(
                {
                    "frame": frame_id,
                    "keypoint": int(point_id),
                    "label": STATIC if static[point_id] else DYNAMIC,
                    "object": int(owners[point_id]),
                }
            )
        previous_visible = visible

    for index in np.flatnonzero(~seen):
        warnings.warn(
            "object %i is never visible" % index, SpecWarning, stacklevel=2,
        )
    logger.info(
        "synthesised %i frames, %i static and %i object points",
        len(frames), n_static, len(owners) - n_static,
    )
    return frames, trajectory, labels
