# -*- coding: utf-8 -*-
"""
Per-frame orchestration of the weighting engine.

Each frame runs, in order: box tracking, object static probabilities,
keypoint initialisation, depth clustering and the first-stage update, the
first pose optimisation, the projection and epipolar refinement, fusion and
gating, map point maintenance, the second pose optimisation and map point
creation.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dynaweight.box_tracker import BoxTracker
from dynaweight.config import (
    BASELINE,
    DETECTION_ONLY,
    FULL,
    EngineConfig,
)
from dynaweight.depth_clustering import (
    DepthClusterResult,
    cluster_box,
    stage1_update,
)
from dynaweight.errors import (
    DegenerateTranslation,
    InsufficientCorrespondences,
    NoConsensus,
    PoseUnderconstrained,
    SchemaViolation,
)
from dynaweight.geometry import (
    MIN_CORRESPONDENCES,
    PoseSE3,
    estimate_fundamental_ransac,
    fundamental_from_pose,
    relative_pose,
)
from dynaweight.io_eval import TrajectoryEntry
from dynaweight.keypoint_probability import (
    KeypointRecord,
    apply_gates,
    epipolar_stage,
    fuse_stage2,
    projection_stage,
)
from dynaweight.object_probability import (
    classify,
    classify_and_init,
    estimate_object,
)
from dynaweight.pose_optimizer import (
    MapStore,
    Observation,
    compose_weight,
    optimize_pose,
    reassociate,
)

logger = logging.getLogger(__name__)


@dataclass
class EngineState:
    intrinsics: object
    cfg: EngineConfig
    tracker: BoxTracker
    map: MapStore
    rng: np.random.Generator
    previous: Optional[object] = None
    # keypoint id of the previous frame -> map point id
    landmarks: dict = field(default_factory=dict)
    poses: list = field(default_factory=list)
    frames_processed: int = 0


@dataclass
class TrackSummary:
    track_id: int
    o: float
    attribute: str
    source: str
    box: tuple

    def to_dict(self):
        return {
            "track_id": self.track_id,
            "o": self.o,
            "attribute": self.attribute,
            "source": self.source,
            "box": list(self.box),
        }


@dataclass
class FrameResult:
    frame_id: int
    timestamp: float
    stage1_pose: PoseSE3
    stage2_pose: PoseSE3
    keypoints: list = field(default_factory=list)
    tracks: list = field(default_factory=list)
    n_inliers: int = 0
    compensated: int = 0
    deleted: int = 0
    created: int = 0
    culled: int = 0
    reassociated: int = 0
    tracking_lost: bool = False
    epipolar_skipped: bool = True

    def probabilities(self):
        "keypoint id -> final K"
        return {r.keypoint_id: r.k for r in self.keypoints}

    def to_dict(self):
        return {
            "frame": self.frame_id,
            "timestamp": self.timestamp,
            "stage1_pose": _pose_to_list(self.stage1_pose),
            "stage2_pose": _pose_to_list(self.stage2_pose),
            "keypoints": [
                {
                    "id": r.keypoint_id,
                    "k": _finite_or_none(r.k),
                    "k_d": _finite_or_none(r.k_d),
                    "k_t": _finite_or_none(r.k_t),
                    "k_f": _finite_or_none(r.k_f),
                    "foreground": r.in_foreground,
                    "track": r.track_id,
                }
                for r in self.keypoints
            ],
            "tracks": [t.to_dict() for t in self.tracks],
            "n_inliers": self.n_inliers,
            "compensated": self.compensated,
            "deleted": self.deleted,
            "created": self.created,
            "culled": self.culled,
            "reassociated": self.reassociated,
            "tracking_lost": self.tracking_lost,
            "epipolar_skipped": self.epipolar_skipped,
        }


def _finite_or_none(value):
    value = float(value)
    return value if np.isfinite(value) else None


def _pose_to_list(pose):
    return [float(v) for v in pose.translation] + [
        float(v) for v in pose.quaternion()
    ]


def new_engine(intrinsics, cfg=None):
    if cfg is None:
        cfg = EngineConfig()
    return EngineState(
        intrinsics=intrinsics,
        cfg=cfg,
        tracker=BoxTracker(cfg.tracker),
        map=MapStore(
            delete_below=cfg.map_delete,
            alpha=cfg.map_alpha,
            max_age=cfg.map_max_age,
        ),
        rng=np.random.default_rng(cfg.seed),
    )


def snapshot(state):
    "Independent copy of an engine state, generator included"
    return copy.deepcopy(state)


def _prior_pose(state):
    "Constant-velocity prediction from the last two poses"
    if not state.poses:
        return PoseSE3.identity()
    if len(state.poses) == 1:
        return state.poses[-1].copy()
    motion = relative_pose(state.poses[-1], state.poses[-2])
    return motion.compose(state.poses[-1])


@dataclass
class _Matches:
    "Rows of the current frame with a match, and the matching previous rows"
    rows: np.ndarray
    prev_rows: np.ndarray
    mask: np.ndarray


def _match(frame, previous):
    n = len(frame.keypoint_ids)
    mask = np.zeros(n, dtype=bool)
    if previous is None:
        return _Matches(np.zeros(0, dtype=int), np.zeros(0, dtype=int), mask)
    index = {int(i): r for r, i in enumerate(previous.keypoint_ids)}
    rows, prev_rows = [], []
    for r, p in enumerate(frame.prev_ids):
        if p < 0:
            continue
        if int(p) not in index:
            raise SchemaViolation(
                "frame %i: keypoint %i matches unknown previous keypoint %i"
                % (frame.frame_id, frame.keypoint_ids[r], p)
            )
        rows.append(r)
        prev_rows.append(index[int(p)])
        mask[r] = True
    return _Matches(np.array(rows, dtype=int), np.array(prev_rows, dtype=int), mask)


def _background_fundamental(frame, previous, matches, boxes, cfg, rng):
    """
    Fundamental matrix of the previous to the current frame, or None.
    Correspondences outside every mover box are used when there are enough
    of them, all correspondences otherwise.
    """
    if frame.has_flow:
        prev_uv, cur_uv = frame.flow_prev, frame.flow_cur
    else:
        prev_uv = previous.uv[matches.prev_rows]
        cur_uv = frame.uv[matches.rows]
    outside = np.ones(len(cur_uv), dtype=bool)
    for box in boxes:
        outside &= ~box.contains(cur_uv)
    if outside.sum() >= MIN_CORRESPONDENCES:
        prev_uv, cur_uv = prev_uv[outside], cur_uv[outside]
    try:
        f, _ = estimate_fundamental_ransac(
            prev_uv,
            cur_uv,
            threshold=cfg.ransac_px,
            iterations=cfg.ransac_iters,
            rng=rng,
        )
    except (InsufficientCorrespondences, NoConsensus) as error:
        logger.warning("frame %i: no fundamental matrix (%s)", frame.frame_id, error)
        return None
    return f


def _object_probabilities(state, frame, boxes, matches, f):
    """
    O and attribute per box, stored on the tracks. Flow pairs of the frame
    are used when present, matched keypoints otherwise.
    """
    cfg = state.cfg
    if frame.has_flow:
        prev_uv, cur_uv = frame.flow_prev, frame.flow_cur
    elif state.previous is not None:
        prev_uv = state.previous.uv[matches.prev_rows]
        cur_uv = frame.uv[matches.rows]
    else:
        prev_uv = cur_uv = np.zeros((0, 2))
    values = []
    for box in boxes:
        if cfg.mode == FULL:
            track = state.tracker.track(box.track_id)
            inside = box.contains(cur_uv)
            estimate = estimate_object(
                f,
                prev_uv[inside],
                cur_uv[inside],
                previous=track.static_probability if track.scored else None,
            )
            o = estimate.value
        else:
            o = 0.
        attribute = classify(o, cfg.o_th)
        state.tracker.set_static_probability(box.track_id, o, attribute)
        values.append((o, attribute))
    return values


def _cluster(frame, members, clustering):
    depths = {
        int(frame.keypoint_ids[r]): (
            float(frame.depth[r]) if np.isfinite(frame.depth[r]) else None
        )
        for r in members
    }
    if clustering:
        return cluster_box(depths)
    valid = frozenset(i for i, d in depths.items() if d is not None)
    return DepthClusterResult(
        clusters=[valid] if valid else [],
        noise=frozenset(depths) - valid,
        foreground=0 if valid else None,
        without_depth=frozenset(depths) - valid,
    )


def _observations(frame, landmarks, probabilities, map_store, km_gap):
    observations = []
    for r in range(len(frame.keypoint_ids)):
        keypoint_id = int(frame.keypoint_ids[r])
        map_point_id = landmarks.get(keypoint_id)
        point = map_store.get(map_point_id) if map_point_id is not None else None
        if point is None:
            continue
        observations.append(
            Observation(
                map_point_id=map_point_id,
                keypoint_id=keypoint_id,
                uv=tuple(frame.uv[r]),
                weight=compose_weight(probabilities[r], point.m, km_gap),
            )
        )
    return observations


def _optimize(observations, state, initial, k):
    try:
        result = optimize_pose(
            observations, state.map.points, initial, k, state.cfg.optimizer,
        )
    except PoseUnderconstrained as error:
        return initial, 0, error
    return result.pose, result.n_inliers, None


def process_frame(frame, state):
    """
    Run every stage on one frame, updating `state`. Returns a FrameResult.
    """
    cfg = state.cfg
    k = frame.intrinsics
    n = len(frame.keypoint_ids)
    matches = _match(frame, state.previous)

    # previous keypoint id -> map point, carried along the match chain
    landmarks = {}
    if state.previous is not None:
        for r, prev_r in zip(matches.rows, matches.prev_rows):
            prev_id = int(state.previous.keypoint_ids[prev_r])
            if prev_id in state.landmarks:
                landmarks[int(frame.keypoint_ids[r])] = state.landmarks[prev_id]

    # boxes
    if cfg.mode == BASELINE:
        boxes, associations, compensated = [], {}, 0
    else:
        step = state.tracker.step(frame.detections)
        boxes, associations, compensated = (
            step.boxes, step.associations, step.compensated,
        )

    # object static probabilities
    f_background = None
    if cfg.mode == FULL and state.previous is not None and boxes:
        f_background = _background_fundamental(
            frame, state.previous, matches, boxes, cfg, state.rng,
        )
    objects = _object_probabilities(state, frame, boxes, matches, f_background)

    init = classify_and_init(
        frame.uv, boxes, [o for o, _ in objects], cfg.o_th,
    )
    probabilities = init.probabilities.copy()
    owners = init.owners
    k_d = np.ones(n)
    foreground = np.zeros(n, dtype=bool)

    # depth clustering and first-stage update
    if cfg.mode == DETECTION_ONLY:
        probabilities[owners >= 0] = 0.
        foreground[owners >= 0] = True
    else:
        for index, box in enumerate(boxes):
            members = np.flatnonzero(owners == index)
            if not len(members):
                continue
            o, attribute = objects[index]
            clusters = _cluster(frame, members, cfg.clustering)
            ids = [int(frame.keypoint_ids[r]) for r in members]
            updated, factors = stage1_update(
                {i: probabilities[r] for i, r in zip(ids, members)},
                clusters, o, attribute, cfg.o_th,
            )
            front = clusters.foreground_ids()
            for i, r in zip(ids, members):
                probabilities[r] = updated[i]
                k_d[r] = factors[i]
                foreground[r] = i in front
    stage1 = probabilities.copy()

    # first optimisation
    lost = False
    prior = _prior_pose(state)
    if state.previous is None:
        pose1 = PoseSE3.identity()
        n_ba = 0
    else:
        pose1, n_ba, error = _optimize(
            _observations(frame, landmarks, stage1, state.map, cfg.km_gap),
            state, prior, k,
        )
        if error is not None:
            lost = True
            logger.warning("frame %i: tracking lost in first optimisation (%s)",
                           frame.frame_id, error)

    # keypoints off their match chain take back the map point made from them
    reassociated = 0
    if state.previous is not None:
        rows = [
            r for r in range(n) if int(frame.keypoint_ids[r]) not in landmarks
        ]
        pairs = reassociate(
            state.map.points, pose1, frame.keypoint_ids[rows], frame.uv[rows],
            k, cfg.reassociation_px, exclude=set(landmarks.values()),
        )
        for j, point_id in pairs:
            landmarks[int(frame.keypoint_ids[rows[j]])] = point_id
        reassociated = len(pairs)

    # second-stage refinement
    k_t = np.full(n, np.nan)
    k_f = np.full(n, np.nan)
    epipolar_skipped = True
    refine = (
        state.previous is not None
        and cfg.mode != DETECTION_ONLY
        and len(matches.rows) > 0
    )
    if refine and cfg.refinement:
        rel = relative_pose(pose1, state.poses[-1])
        translation_norm = float(np.linalg.norm(rel.translation))
        prev_uv = state.previous.uv[matches.prev_rows]
        prev_depth = state.previous.depth[matches.prev_rows]
        cur_uv = frame.uv[matches.rows]
        reference = owners[matches.rows] < 0
        cfg2 = cfg.stage_two
        projection = projection_stage(
            prev_uv, prev_depth, cur_uv, reference, rel, k, n_ba, cfg2,
        )
        try:
            f_pose = fundamental_from_pose(rel, k)
        except DegenerateTranslation:
            f_pose = None
        epipolar = epipolar_stage(
            prev_uv, cur_uv, reference, f_pose, translation_norm, cfg2,
        )
        epipolar_skipped = epipolar.skipped
        k_t[matches.rows] = projection.probabilities
        k_f[matches.rows] = epipolar.probabilities
        for j, r in enumerate(matches.rows):
            if owners[r] < 0:
                continue
            probabilities[r] = fuse_stage2(
                stage1[r],
                projection.probabilities[j],
                epipolar.probabilities[j],
                projection.confidence,
                epipolar.confidence,
                objects[owners[r]][0],
                translation_norm,
                cfg.o_th,
                cfg.t_th,
            )
    elif refine:
        probabilities[foreground] = 0.

    records = [
        KeypointRecord(
            keypoint_id=int(frame.keypoint_ids[r]),
            k=float(probabilities[r]),
            k_d=float(k_d[r]),
            k_t=float(k_t[r]),
            k_f=float(k_f[r]),
            matched_prev=bool(matches.mask[r]),
            in_foreground=bool(foreground[r]),
            track_id=boxes[owners[r]].track_id if owners[r] >= 0 else None,
            map_point_id=landmarks.get(int(frame.keypoint_ids[r])),
        )
        for r in range(n)
    ]
    if cfg.refinement and cfg.mode != DETECTION_ONLY and state.previous is not None:
        records = apply_gates(records, set(associations), state.map.probabilities())
    probabilities = np.array([r.k for r in records], dtype=float)

    # map point maintenance
    evidence = {
        landmarks[r.keypoint_id]: r.k for r in records if r.keypoint_id in landmarks
    }
    deleted = set(state.map.update(evidence, frame.frame_id))
    landmarks = {i: m for i, m in landmarks.items() if m not in deleted}

    # second optimisation
    if state.previous is None:
        pose2 = pose1
        n_inliers = 0
    else:
        pose2, n_inliers, error = _optimize(
            _observations(frame, landmarks, probabilities, state.map, cfg.km_gap),
            state, pose1, k,
        )
        if error is not None:
            lost = True
            logger.warning("frame %i: tracking lost in second optimisation (%s)",
                           frame.frame_id, error)

    # new map points for keypoints without one
    fresh = [
        r for r in range(n) if int(frame.keypoint_ids[r]) not in landmarks
    ]
    created = state.map.create(
        frame.keypoint_ids[fresh],
        frame.uv[fresh],
        frame.depth[fresh],
        probabilities[fresh],
        pose2,
        k,
        frame_id=frame.frame_id,
    )
    for point in created:
        landmarks[point.keypoint_id] = point.point_id
    culled = state.map.cull(frame.frame_id)
    landmarks = {i: m for i, m in landmarks.items() if m in state.map}

    state.previous = frame
    state.landmarks = landmarks
    state.poses = (state.poses + [pose2])[-2:]
    state.frames_processed += 1

    tracks = [
        TrackSummary(
            track_id=box.track_id,
            o=float(o),
            attribute=attribute,
            source=box.source,
            box=box.box,
        )
        for box, (o, attribute) in zip(boxes, objects)
    ]
    logger.debug(
        "frame %i: %i keypoints, %i boxes, %i inliers, %i map points",
        frame.frame_id, n, len(boxes), n_inliers, len(state.map),
    )
    return FrameResult(
        frame_id=frame.frame_id,
        timestamp=frame.timestamp,
        stage1_pose=pose1,
        stage2_pose=pose2,
        keypoints=records,
        tracks=tracks,
        n_inliers=n_inliers,
        compensated=compensated,
        deleted=len(deleted),
        created=len(created),
        culled=len(culled),
        reassociated=reassociated,
        tracking_lost=lost,
        epipolar_skipped=epipolar_skipped,
    )


def run_sequence(frames, cfg=None):
    """
    Process a sequence of frames in order. Returns the trajectory of
    second-stage poses (TUM entries) and the FrameResults.
    """
    if cfg is None:
        cfg = EngineConfig()
    if not frames:
        return [], []
    state = new_engine(frames[0].intrinsics, cfg)
    trajectory = []
    results = []
    for frame in frames:
        result = process_frame(frame, state)
        trajectory.append(
            TrajectoryEntry.from_camera_pose(frame.timestamp, result.stage2_pose)
        )
        results.append(result)
    lost = sum(r.tracking_lost for r in results)
    logger.info(
        "processed %i frames in %s mode, tracking lost on %i",
        len(results), cfg.mode, lost,
    )
    return trajectory, results


def lost_fraction(results):
    if not results:
        return 0.
    return sum(r.tracking_lost for r in results) / float(len(results))
