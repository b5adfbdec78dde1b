# -*- coding: utf-8 -*-
"""
Frame files (JSON lines), TUM trajectory files and trajectory metrics.

A frame file holds one JSON object per line:

    {"id": 0, "timestamp": 0.0, "intrinsics": [fx, fy, cx, cy],
     "keypoints": [{"id": 3, "uv": [u, v], "z": 2.5, "prev": 3}, ...],
     "detections": [{"cls": "person", "box": [x1, y1, x2, y2],
                     "score": 0.9}, ...],
     "flow_pairs": [{"uv_prev": [u, v], "uv_cur": [u, v]}, ...],
     "gt": [tx, ty, tz, qx, qy, qz, qw]}

`flow_pairs` and `gt` are optional, `z` and `prev` may be null. Trajectory
files use the TUM convention: one "timestamp tx ty tz qx qy qz qw" line per
camera-to-world pose.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from dynaweight.box_tracker import DetectionBox
from dynaweight.errors import EvalUnderconstrained, ParseError, SchemaViolation
from dynaweight.geometry import CameraIntrinsics, PoseSE3

logger = logging.getLogger(__name__)

ASSOCIATION_WINDOW = 0.02
STATIC = "static"
DYNAMIC = "dynamic"


@dataclass
class Frame:
    frame_id: int
    timestamp: float
    intrinsics: CameraIntrinsics
    keypoint_ids: np.ndarray
    uv: np.ndarray
    depth: np.ndarray
    prev_ids: np.ndarray
    detections: list = field(default_factory=list)
    flow_prev: Optional[np.ndarray] = None
    flow_cur: Optional[np.ndarray] = None
    gt: Optional[list] = None

    def __len__(self):
        return len(self.keypoint_ids)

    @property
    def matched(self):
        return self.prev_ids >= 0

    @property
    def has_flow(self):
        return self.flow_prev is not None


@dataclass
class TrajectoryEntry:
    timestamp: float
    translation: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        norm = np.linalg.norm(q)
        if not norm > 0:
            raise ValueError("zero quaternion")
        self.quaternion = q / norm

    @classmethod
    def from_camera_pose(cls, timestamp, pose):
        "Entry for a world-to-camera pose"
        camera_to_world = pose.inverse()
        return cls(
            float(timestamp),
            camera_to_world.translation,
            camera_to_world.quaternion(),
        )

    def camera_to_world(self):
        return PoseSE3.from_quaternion(self.translation, self.quaternion)


def _violation(line, reason):
    return SchemaViolation(reason, line=line)


def _number(value, line, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _violation(line, "%s must be a number" % what)
    if not np.isfinite(value):
        raise _violation(line, "%s must be finite" % what)
    return float(value)


def _vector(value, size, line, what):
    if not isinstance(value, list) or len(value) != size:
        raise _violation(line, "%s must be a list of %i numbers" % (what, size))
    return [_number(v, line, what) for v in value]


def _parse_record(obj, line, previous_ids):
    if not isinstance(obj, dict):
        raise _violation(line, "record must be a JSON object")
    for key in ("id", "timestamp", "intrinsics", "keypoints", "detections"):
        if key not in obj:
            raise _violation(line, "missing key %r" % key)
    known = {
        "id", "timestamp", "intrinsics", "keypoints", "detections",
        "flow_pairs", "gt",
    }
    unknown = set(obj) - known
    if unknown:
        raise _violation(line, "unknown keys %s" % sorted(unknown))
    if isinstance(obj["id"], bool) or not isinstance(obj["id"], int):
        raise _violation(line, "id must be an integer")
    timestamp = _number(obj["timestamp"], line, "timestamp")
    try:
        intrinsics = CameraIntrinsics.from_sequence(
            _vector(obj["intrinsics"], 4, line, "intrinsics")
        )
    except ValueError as error:
        raise _violation(line, str(error))

    if not isinstance(obj["keypoints"], list):
        raise _violation(line, "keypoints must be a list")
    ids, uv, depth, prev = [], [], [], []
    for keypoint in obj["keypoints"]:
        if not isinstance(keypoint, dict) or "id" not in keypoint or "uv" not in keypoint:
            raise _violation(line, "keypoint needs id and uv")
        keypoint_id = keypoint["id"]
        if isinstance(keypoint_id, bool) or not isinstance(keypoint_id, int) or keypoint_id < 0:
            raise _violation(line, "keypoint id must be a non-negative integer")
        uv.append(_vector(keypoint["uv"], 2, line, "uv"))
        z = keypoint.get("z")
        if z is None:
            depth.append(np.nan)
        else:
            z = _number(z, line, "z")
            if z <= 0:
                raise _violation(line, "keypoint %i: depth must be positive" % keypoint_id)
            depth.append(z)
        p = keypoint.get("prev")
        if p is None:
            prev.append(-1)
        else:
            if isinstance(p, bool) or not isinstance(p, int) or p not in previous_ids:
                raise _violation(
                    line,
                    "keypoint %i: prev %r not in previous record" % (keypoint_id, p),
                )
            prev.append(p)
        ids.append(keypoint_id)
    if len(set(ids)) != len(ids):
        raise _violation(line, "duplicate keypoint ids")

    if not isinstance(obj["detections"], list):
        raise _violation(line, "detections must be a list")
    detections = []
    for detection in obj["detections"]:
        if not isinstance(detection, dict) or "cls" not in detection or "box" not in detection:
            raise _violation(line, "detection needs cls and box")
        try:
            detections.append(
                DetectionBox(
                    class_label=str(detection["cls"]),
                    box=tuple(_vector(detection["box"], 4, line, "box")),
                    score=_number(detection.get("score", 1.0), line, "score"),
                )
            )
        except ValueError as error:
            raise _violation(line, str(error))

    flow_prev = flow_cur = None
    if obj.get("flow_pairs") is not None:
        pairs = obj["flow_pairs"]
        if not isinstance(pairs, list):
            raise _violation(line, "flow_pairs must be a list")
        flow_prev = np.array(
            [_vector(p.get("uv_prev"), 2, line, "uv_prev") for p in pairs],
            dtype=float,
        ).reshape(-1, 2)
        flow_cur = np.array(
            [_vector(p.get("uv_cur"), 2, line, "uv_cur") for p in pairs],
            dtype=float,
        ).reshape(-1, 2)

    gt = None
    if obj.get("gt") is not None:
        gt = _vector(obj["gt"], 7, line, "gt")

    return Frame(
        frame_id=obj["id"],
        timestamp=timestamp,
        intrinsics=intrinsics,
        keypoint_ids=np.array(ids, dtype=int),
        uv=np.array(uv, dtype=float).reshape(-1, 2),
        depth=np.array(depth, dtype=float),
        prev_ids=np.array(prev, dtype=int),
        detections=detections,
        flow_prev=flow_prev,
        flow_cur=flow_cur,
        gt=gt,
    )


def read_lines(path, encoding="utf-8"):
    """
    (line number, text) of every line of a text file. A line that does not
    decode raises ParseError with its line number.
    """
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                text = raw.decode(encoding)
            except UnicodeDecodeError as error:
                raise ParseError(
                    "not valid %s text (%s)" % (encoding, error.reason),
                    line=line_number,
                )
            yield line_number, text


def load_sequence(path):
    "Validated frames of a JSON-lines frame file, in file order"
    frames = []
    previous_ids = set()
    previous_timestamp = None
    for line_number, text in read_lines(path):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except ValueError as error:
            raise ParseError(str(error), line=line_number)
        frame = _parse_record(obj, line_number, previous_ids)
        if previous_timestamp is not None and frame.timestamp <= previous_timestamp:
            raise _violation(line_number, "timestamps must increase strictly")
        previous_timestamp = frame.timestamp
        previous_ids = set(frame.keypoint_ids.tolist())
        frames.append(frame)
    logger.info("loaded %i frames from %s", len(frames), path)
    return frames


def frame_to_record(frame):
    keypoints = []
    for keypoint_id, (u, v), z, p in zip(
            frame.keypoint_ids, frame.uv, frame.depth, frame.prev_ids):
        keypoints.append(
            {
                "id": int(keypoint_id),
                "uv": [float(u), float(v)],
                "z": None if not np.isfinite(z) else float(z),
                "prev": None if p < 0 else int(p),
            }
        )
    record = {
        "id": int(frame.frame_id),
        "timestamp": float(frame.timestamp),
        "intrinsics": frame.intrinsics.as_list(),
        "keypoints": keypoints,
        "detections": [
            {"cls": d.class_label, "box": list(d.box), "score": float(d.score)}
            for d in frame.detections
        ],
    }
    if frame.has_flow:
        record["flow_pairs"] = [
            {"uv_prev": [float(a), float(b)], "uv_cur": [float(c), float(d)]}
            for (a, b), (c, d) in zip(frame.flow_prev, frame.flow_cur)
        ]
    if frame.gt is not None:
        record["gt"] = [float(v) for v in frame.gt]
    return record


def write_sequence(frames, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for frame in frames:
            f.write(json.dumps(frame_to_record(frame)))
            f.write("\n")


def write_labels(labels, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for label in labels:
            f.write(json.dumps(label, sort_keys=True))
            f.write("\n")


def load_labels(path):
    labels = []
    for line_number, text in read_lines(path):
        if not text.strip():
            continue
        try:
            labels.append(json.loads(text))
        except ValueError as error:
            raise ParseError(str(error), line=line_number)
    return labels


def _format_value(value):
    text = "%.9g" % (float(value) + 0.)
    return "0" if text == "-0" else text


def format_trajectory_line(entry):
    values = list(entry.translation) + list(entry.quaternion)
    return "%.6f %s" % (
        entry.timestamp, " ".join(_format_value(v) for v in values),
    )


def write_trajectory_tum(trajectory, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        for entry in trajectory:
            f.write(format_trajectory_line(entry))
            f.write("\n")


def read_trajectory_tum(path):
    trajectory = []
    for line_number, text in read_lines(path, encoding="ascii"):
        text = text.strip()
        if not text or text.startswith("#"):
            continue
        columns = text.replace(",", " ").split()
        if len(columns) != 8:
            raise ParseError("expected 8 columns", line=line_number)
        try:
            values = [float(c) for c in columns]
        except ValueError as error:
            raise ParseError(str(error), line=line_number)
        trajectory.append(
            TrajectoryEntry(values[0], values[1:4], values[4:8])
        )
    return trajectory


def associate(est, gt, max_difference=ASSOCIATION_WINDOW):
    """
    Greedy nearest-timestamp matching; every entry is used at most once.
    Returns (est index, gt index) pairs in time order.
    """
    gt_times = np.array([e.timestamp for e in gt])
    order = np.argsort(gt_times, kind="stable")
    sorted_times = gt_times[order]
    candidates = []
    for i, entry in enumerate(est):
        lo = np.searchsorted(sorted_times, entry.timestamp - max_difference, "left")
        hi = np.searchsorted(sorted_times, entry.timestamp + max_difference, "right")
        for j in order[lo:hi]:
            difference = abs(entry.timestamp - gt_times[j])
            if difference < max_difference:
                candidates.append((difference, i, int(j)))
    candidates.sort()
    used_est, used_gt = set(), set()
    matches = []
    for _, i, j in candidates:
        if i in used_est or j in used_gt:
            continue
        used_est.add(i)
        used_gt.add(j)
        matches.append((i, j))
    matches.sort(key=lambda m: est[m[0]].timestamp)
    return matches


def align_rigid(model, data):
    """
    Rotation and translation (no scale) minimising |R model_i + t - data_i|
    over (N, 3) point sets.
    """
    model = np.asarray(model, dtype=float)
    data = np.asarray(data, dtype=float)
    mu_model = model.mean(axis=0)
    mu_data = data.mean(axis=0)
    h = (model - mu_model).T.dot(data - mu_data)
    u, _, vt = np.linalg.svd(h)
    d = np.eye(3)
    d[2, 2] = np.sign(np.linalg.det(vt.T.dot(u.T))) or 1.
    rotation = vt.T.dot(d).dot(u.T)
    return rotation, mu_data - rotation.dot(mu_model)


def _rmse_sd(errors):
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors**2))), float(np.std(errors))


def ate(est, gt, max_difference=ASSOCIATION_WINDOW):
    "Absolute trajectory error after rigid alignment: (RMSE, S.D.) in metres"
    matches = associate(est, gt, max_difference)
    if len(matches) < 2:
        raise EvalUnderconstrained(
            "%i timestamp matches, need 2" % len(matches)
        )
    model = np.array([est[i].translation for i, _ in matches])
    data = np.array([gt[j].translation for _, j in matches])
    rotation, translation = align_rigid(model, data)
    aligned = model.dot(rotation.T) + translation
    return _rmse_sd(np.linalg.norm(aligned - data, axis=1))


def rpe(est, gt, delta=1, max_difference=ASSOCIATION_WINDOW):
    """
    Relative pose error over `delta` matched frames:
    (translation RMSE, translation S.D., rotation RMSE, rotation S.D.), in
    metres and degrees.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    matches = associate(est, gt, max_difference)
    if len(matches) < max(2, delta + 1):
        raise EvalUnderconstrained(
            "%i timestamp matches for delta %i" % (len(matches), delta)
        )
    p = [est[i].camera_to_world() for i, _ in matches]
    q = [gt[j].camera_to_world() for _, j in matches]
    translation_errors = []
    rotation_errors = []
    for i in range(len(matches) - delta):
        gt_motion = q[i].inverse().compose(q[i + delta])
        est_motion = p[i].inverse().compose(p[i + delta])
        error = gt_motion.inverse().compose(est_motion)
        translation_errors.append(np.linalg.norm(error.translation))
        rotation_errors.append(
            np.degrees(Rotation.from_matrix(error.rotation).magnitude())
        )
    return _rmse_sd(translation_errors) + _rmse_sd(rotation_errors)


def write_diagnostics(results, path):
    "One JSON object per FrameResult, sorted keys"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for result in results:
            f.write(json.dumps(result.to_dict(), sort_keys=True))
            f.write("\n")
