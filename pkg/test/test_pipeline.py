# -*- coding: utf-8 -*-
"""End-to-end tests of the weighting engine on synthetic scenes."""

import json

import numpy as np
import pytest

from dynaweight.config import BASELINE, DETECTION_ONLY, MINUS, EngineConfig
from dynaweight.errors import SchemaViolation
from dynaweight.io_eval import DYNAMIC, STATIC, ate, write_diagnostics, write_trajectory_tum
from dynaweight.pipeline import (
    lost_fraction,
    new_engine,
    process_frame,
    run_sequence,
    snapshot,
)
from dynaweight.synth import SceneSpec, generate_scene

# one fast object walking along with the camera while bouncing up and down,
# carrying most of the keypoints of every frame
FAST_OBJECT = SceneSpec(
    frames=300,
    trajectory_speed=0.025,
    static_points=300,
    objects=1,
    object_points=300,
    object_size=0.4,
    object_depth=2.,
    object_velocity="0,0.05,0",
    object_motion="bounce",
    object_period=10,
    object_anchor="camera",
    pixel_noise=1.,
)

# an object drifting by a small fraction of a pixel per frame
NEAR_STATIC_OBJECT = SceneSpec(
    frames=30,
    trajectory_speed=0.03,
    objects=1,
    object_points=300,
    object_size=0.4,
    object_velocity="0,0.00002,0",
    articulated_jitter=0.,
    pixel_noise=0.1,
)


@pytest.fixture(scope="module")
def fast_scene():
    return generate_scene(FAST_OBJECT, seed=11)


@pytest.fixture(scope="module")
def near_static_scene():
    return generate_scene(NEAR_STATIC_OBJECT, seed=12)


def _label_lookup(labels):
    return {(l["frame"], l["keypoint"]): l["label"] for l in labels}


def test_empty_sequence():
    assert run_sequence([]) == ([], [])
    assert lost_fraction([]) == 0.


def test_static_scene_is_exact():
    spec = SceneSpec(frames=20, static_points=150, match_dropout=0.2)
    frames, gt, _ = generate_scene(spec, seed=1)
    trajectory, results = run_sequence(frames)
    assert len(results) == 20
    assert [r.frame_id for r in results] == list(range(20))
    assert not any(r.tracking_lost for r in results)
    rmse, _ = ate(trajectory, gt)
    assert rmse < 1e-6
    for result in results:
        assert all(r.k == 1. for r in result.keypoints)
        assert result.tracks == []


def test_fast_object_is_rejected(fast_scene):
    frames, gt, labels = fast_scene
    lookup = _label_lookup(labels)
    shares = [
        np.mean([lookup[(f.frame_id, int(i))] == DYNAMIC for i in f.keypoint_ids])
        for f in frames
    ]
    assert 0.5 <= np.mean(shares) <= 0.7
    assert min(shares) > 0.4
    trajectory, results = run_sequence(frames)
    dynamic_foreground, static = [], []
    for result in results[1:]:
        for record in result.keypoints:
            label = lookup[(result.frame_id, record.keypoint_id)]
            if label == DYNAMIC and record.in_foreground:
                dynamic_foreground.append(record.k)
            elif label == STATIC:
                static.append(record.k)
    assert len(dynamic_foreground) > 10000
    assert np.mean(np.array(dynamic_foreground) < 0.3) >= 0.95
    assert np.mean(np.array(static) > 0.7) >= 0.9
    assert all(t.attribute == "high_dynamic" for r in results for t in r.tracks)

    baseline, _ = run_sequence(frames, EngineConfig(mode=BASELINE))
    full_rmse, _ = ate(trajectory, gt)
    baseline_rmse, _ = ate(baseline, gt)
    assert full_rmse <= 0.2 * baseline_rmse


def test_baseline_keeps_unit_weights(fast_scene):
    frames, _, _ = fast_scene
    _, results = run_sequence(frames[:5], EngineConfig(mode=BASELINE))
    for result in results:
        assert result.tracks == []
        assert all(r.k == 1. for r in result.keypoints)


def test_detection_only_removes_box_contents(fast_scene):
    frames, _, _ = fast_scene
    _, results = run_sequence(frames[:5], EngineConfig(mode=DETECTION_ONLY))
    for result in results:
        assert [t.o for t in result.tracks] == [0.]
        owned = [r for r in result.keypoints if r.track_id is not None]
        assert owned
        assert all(r.k == 0. for r in owned)
        assert all(r.k == 1. for r in result.keypoints if r.track_id is None)


def test_without_refinement_foreground_is_removed(fast_scene):
    frames, _, _ = fast_scene
    _, results = run_sequence(frames[:5], EngineConfig(refinement=False))
    for result in results:
        assert all(r.k == 0. for r in result.keypoints if r.in_foreground)
        assert all(np.isnan(r.k_t) for r in result.keypoints)


def test_near_static_object_is_kept(near_static_scene):
    frames, gt, _ = near_static_scene
    trajectory, results = run_sequence(frames)
    scores = [r.tracks[0].o for r in results if r.tracks]
    assert len(scores) == len(frames)
    assert np.mean(np.array(scores) > 0.9) >= 0.9
    rmse, _ = ate(trajectory, gt)
    assert rmse < 0.01

    minus_trajectory, minus_results = run_sequence(frames, EngineConfig(mode=MINUS))
    assert all(t.o == 0. for r in minus_results for t in r.tracks)
    assert all(t.attribute == "high_dynamic" for r in minus_results for t in r.tracks)
    minus_rmse, _ = ate(minus_trajectory, gt)
    assert minus_rmse < 0.01
    assert rmse <= minus_rmse

    def object_weight(results):
        return np.mean(
            [r.k for res in results[1:] for r in res.keypoints if r.track_id is not None]
        )

    assert object_weight(results) > object_weight(minus_results)


def test_snapshot_replays_identically(fast_scene):
    frames, _, _ = fast_scene
    state = new_engine(frames[0].intrinsics, EngineConfig(seed=5))
    for frame in frames[:6]:
        process_frame(frame, state)
    copy = snapshot(state)
    first = process_frame(frames[6], state)
    second = process_frame(frames[6], copy)
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
        second.to_dict(), sort_keys=True
    )
    assert sorted(state.map.points) == sorted(copy.map.points)


def test_runs_are_byte_identical(fast_scene, tmp_path):
    frames, _, _ = fast_scene
    outputs = []
    for name in ("a", "b"):
        trajectory, results = run_sequence(frames[:10], EngineConfig(seed=3))
        traj_path = tmp_path / ("%s.txt" % name)
        diag_path = tmp_path / ("%s.jsonl" % name)
        write_trajectory_tum(trajectory, str(traj_path))
        write_diagnostics(results, str(diag_path))
        outputs.append((traj_path.read_bytes(), diag_path.read_bytes()))
    assert outputs[0] == outputs[1]
    record = json.loads(outputs[0][1].splitlines()[3])
    assert record["frame"] == 3
    assert len(record["stage2_pose"]) == 7


def test_unmatched_keypoints_keep_their_map_points():
    spec = SceneSpec(frames=12, static_points=150, match_dropout=0.3)
    frames, _, _ = generate_scene(spec, seed=2)
    _, results = run_sequence(frames)
    assert sum(r.reassociated for r in results[1:]) > 0
    unmatched = [r for res in results[1:] for r in res.keypoints if not r.matched_prev]
    assert unmatched
    assert np.mean([r.map_point_id is not None for r in unmatched]) > 0.8
    landmarks = {}
    for result in results:
        for record in result.keypoints:
            if record.map_point_id is not None:
                landmarks.setdefault(record.keypoint_id, set()).add(record.map_point_id)
    assert all(len(ids) == 1 for ids in landmarks.values())


def test_unmatched_background_keypoint_takes_map_probability():
    spec = SceneSpec(frames=8, static_points=150, match_dropout=0.3)
    frames, _, _ = generate_scene(spec, seed=3)
    state = new_engine(frames[0].intrinsics)
    for frame in frames[:6]:
        process_frame(frame, state)
    frame = frames[6]
    by_keypoint = {}
    for point_id, point in state.map.points.items():
        by_keypoint.setdefault(point.keypoint_id, []).append(point_id)
    unmatched = [
        int(i) for i, p in zip(frame.keypoint_ids, frame.prev_ids)
        if p < 0 and int(i) in by_keypoint
    ]
    assert unmatched
    chosen = unmatched[0]
    for point_id in by_keypoint[chosen]:
        state.map.points[point_id].m = 0.55
    result = process_frame(frame, state)
    record = [r for r in result.keypoints if r.keypoint_id == chosen][0]
    assert not record.matched_prev
    assert record.map_point_id in by_keypoint[chosen]
    assert record.k == 0.55
    others = [
        r for r in result.keypoints
        if not r.matched_prev and r.map_point_id is not None and r.keypoint_id != chosen
    ]
    assert others
    assert all(r.k == 1. for r in others)


def test_lost_tracking_keeps_going():
    spec = SceneSpec(frames=4, match_dropout=1.)
    frames, _, _ = generate_scene(spec, seed=0)
    trajectory, results = run_sequence(frames)
    assert [r.tracking_lost for r in results] == [False, True, True, True]
    assert lost_fraction(results) == 0.75
    assert len(trajectory) == 4


def test_unknown_match_aborts():
    spec = SceneSpec(frames=2, static_points=20)
    frames, _, _ = generate_scene(spec, seed=0)
    frames[1].prev_ids = frames[1].prev_ids.copy()
    frames[1].prev_ids[0] = 10 ** 6
    with pytest.raises(SchemaViolation):
        run_sequence(frames)
