# -*- coding: utf-8 -*-
"""
Tracks boxes of potentially moving objects across frames.

Each track carries a constant-velocity Kalman filter on
(cx, cy, w, h, vcx, vcy, vw, vh). Predicted boxes are assigned to detections
with the Hungarian algorithm on 1 - IoU; unmatched tracks emit their
prediction as a compensated box for up to `max_compensation` frames.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from filterpy.kalman import predict, update
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

DETECTED = "detected"
COMPENSATED = "compensated"
HIGH_DYNAMIC = "high_dynamic"
LOW_DYNAMIC = "low_dynamic"

MIN_BOX_SIZE = 1.0

# constant velocity, one frame per step
TRANSITION = np.eye(8) + np.eye(8, k=4)
MEASUREMENT = np.eye(4, 8)


@dataclass(frozen=True)
class TrackerConfig:
    mover_classes: frozenset = frozenset({"person"})
    gate_iou: float = 0.3
    max_compensation: int = 10
    process_noise_pos: float = 1.0
    process_noise_vel: float = 0.25
    measurement_noise: float = 4.0
    initial_velocity_variance: float = 100.0
    compensation: bool = True

    @property
    def process_covariance(self):
        return np.diag(
            [self.process_noise_pos] * 4 + [self.process_noise_vel] * 4
        )

    @property
    def measurement_covariance(self):
        return np.eye(4) * self.measurement_noise


@dataclass(frozen=True)
class DetectionBox:
    class_label: str
    box: tuple
    score: float = 1.0
    source: str = DETECTED
    track_id: Optional[int] = None

    def __post_init__(self):
        x_min, y_min, x_max, y_max = self.box
        if not (x_min < x_max and y_min < y_max):
            raise ValueError("degenerate box %s" % (self.box,))
        if not 0. <= self.score <= 1.:
            raise ValueError("score %r outside [0, 1]" % (self.score,))
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))

    def contains(self, uv):
        "Inclusive containment test for an (N, 2) pixel array"
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        x_min, y_min, x_max, y_max = self.box
        return (
            (uv[:, 0] >= x_min) & (uv[:, 0] <= x_max)
            & (uv[:, 1] >= y_min) & (uv[:, 1] <= y_max)
        )


@dataclass
class ObjectTrack:
    track_id: int
    class_label: str
    state: np.ndarray
    covariance: np.ndarray
    missed_count: int = 0
    static_probability: float = 0.0
    attribute: str = HIGH_DYNAMIC
    prev_associated: bool = False
    emitted: bool = True
    scored: bool = False
    last_box: Optional[tuple] = None

    @property
    def box(self):
        return state_to_box(self.state)


@dataclass
class TrackStepResult:
    boxes: list
    tracks: list
    associations: dict = field(default_factory=dict)
    next_track_id: int = 0
    compensated: int = 0


def box_to_measurement(box):
    x_min, y_min, x_max, y_max = box
    return np.array(
        [
            0.5 * (x_min + x_max),
            0.5 * (y_min + y_max),
            x_max - x_min,
            y_max - y_min,
        ]
    )


def state_to_box(state):
    cx, cy = state[0], state[1]
    w = max(state[2], MIN_BOX_SIZE)
    h = max(state[3], MIN_BOX_SIZE)
    return (cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def iou(a, b):
    "Intersection over union of two (x_min, y_min, x_max, y_max) boxes"
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.
    intersection = iw * ih
    union = (
        (a[2] - a[0]) * (a[3] - a[1])
        + (b[2] - b[0]) * (b[3] - b[1])
        - intersection
    )
    return float(intersection / union)


def hungarian_solve(cost):
    "Minimum-cost one-to-one assignment, as sorted (row, col) pairs"
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols))


def repair_covariance(covariance, floor=1e-9):
    """
    Symmetrise and clamp eigenvalues at `floor`. Returns the (possibly
    unchanged) matrix and whether a clamp was needed.
    """
    covariance = 0.5 * (covariance + covariance.T)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    if eigenvalues.min() >= floor:
        return covariance, False
    eigenvalues = np.maximum(eigenvalues, floor)
    repaired = (eigenvectors * eigenvalues).dot(eigenvectors.T)
    return 0.5 * (repaired + repaired.T), True


def new_track(track_id, detection, cfg):
    covariance = np.diag(
        [cfg.measurement_noise] * 4 + [cfg.initial_velocity_variance] * 4
    )
    covariance, _ = repair_covariance(covariance)
    state = np.zeros(8)
    state[:4] = box_to_measurement(detection.box)
    return ObjectTrack(
        track_id=track_id,
        class_label=detection.class_label,
        state=state,
        covariance=covariance,
        last_box=detection.box,
    )


def kf_predict(track, cfg):
    "One-frame constant-velocity prediction; returns a new track"
    x, p = predict(
        track.state,
        track.covariance,
        F=TRANSITION,
        Q=cfg.process_covariance,
    )
    return replace(track, state=x, covariance=0.5 * (p + p.T))


def kf_update(track, box, cfg):
    "Correct a track with a measured box; returns a new track"
    x, p = update(
        track.state,
        track.covariance,
        box_to_measurement(box),
        cfg.measurement_covariance,
        MEASUREMENT,
    )
    p, repaired = repair_covariance(p)
    if repaired:
        logger.warning(
            "track %i: covariance repaired after update", track.track_id,
        )
    return replace(track, state=x, covariance=p)


def track_step(tracks, detections, cfg=None, next_track_id=None):
    """
    Advance all tracks by one frame against this frame's detections.

    Returns a TrackStepResult whose `boxes` are the detected and
    compensated mover boxes of this frame (each carrying its track id),
    `tracks` the surviving tracks and `associations` the previous box of
    every track that also had a box in the previous frame, keyed by track id.
    """
    if cfg is None:
        cfg = TrackerConfig()
    if next_track_id is None:
        next_track_id = max([t.track_id for t in tracks], default=-1) + 1
    detections = [
        d for d in detections if d.class_label in cfg.mover_classes
    ]
    predicted = [kf_predict(t, cfg) for t in tracks]

    cost = np.array(
        [[1. - iou(t.box, d.box) for d in detections] for t in predicted]
    ).reshape(len(predicted), len(detections))
    matches = [
        (r, c) for r, c in hungarian_solve(cost)
        if 1. - cost[r, c] >= cfg.gate_iou
    ]
    matched_tracks = {r for r, _ in matches}
    matched_detections = {c for _, c in matches}

    survivors = []
    boxes = []
    associations = {}
    compensated = 0

    for r, c in matches:
        track = predicted[r]
        detection = detections[c]
        associated = track.emitted and track.last_box is not None
        if associated:
            associations[track.track_id] = track.last_box
        track = kf_update(track, detection.box, cfg)
        track = replace(
            track,
            missed_count=0,
            prev_associated=associated,
            emitted=True,
            last_box=detection.box,
        )
        survivors.append(track)
        boxes.append(replace(detection, source=DETECTED, track_id=track.track_id))

    for r, track in enumerate(predicted):
        if r in matched_tracks:
            continue
        if track.missed_count >= cfg.max_compensation:
            logger.debug(
                "track %i dropped after %i missed frames",
                track.track_id, track.missed_count,
            )
            continue
        associated = track.emitted and track.last_box is not None
        if cfg.compensation:
            box = track.box
            if associated:
                associations[track.track_id] = track.last_box
            track = replace(
                track,
                missed_count=track.missed_count + 1,
                prev_associated=associated,
                emitted=True,
                last_box=box,
            )
            boxes.append(
                DetectionBox(
                    class_label=track.class_label,
                    box=box,
                    score=0.,
                    source=COMPENSATED,
                    track_id=track.track_id,
                )
            )
            compensated += 1
        else:
            track = replace(
                track,
                missed_count=track.missed_count + 1,
                prev_associated=False,
                emitted=False,
                last_box=None,
            )
        survivors.append(track)

    for c, detection in enumerate(detections):
        if c in matched_detections:
            continue
        track = new_track(next_track_id, detection, cfg)
        next_track_id += 1
        survivors.append(track)
        boxes.append(replace(detection, source=DETECTED, track_id=track.track_id))

    survivors.sort(key=lambda t: t.track_id)
    boxes.sort(key=lambda b: b.track_id)
    logger.debug(
        "tracker: %i detections, %i matched, %i compensated, %i tracks",
        len(detections), len(matches), compensated, len(survivors),
    )
    return TrackStepResult(
        boxes=boxes,
        tracks=survivors,
        associations=associations,
        next_track_id=next_track_id,
        compensated=compensated,
    )


class BoxTracker(object):
    """
    Owns the track list and the track id counter of one sequence.
    """

    def __init__(self, cfg=None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self.tracks = []
        self.next_track_id = 0

    def step(self, detections):
        result = track_step(
            self.tracks,
            detections,
            self.cfg,
            next_track_id=self.next_track_id,
        )
        self.tracks = result.tracks
        self.next_track_id = result.next_track_id
        return result

    def track(self, track_id):
        for t in self.tracks:
            if t.track_id == track_id:
                return t
        raise KeyError(track_id)

    def set_static_probability(self, track_id, value, attribute):
        self.tracks = [
            replace(
                t,
                static_probability=value,
                attribute=attribute,
                scored=True,
            ) if t.track_id == track_id else t
            for t in self.tracks
        ]
