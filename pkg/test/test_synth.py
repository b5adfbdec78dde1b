# -*- coding: utf-8 -*-
"""Tests for the synthetic scene generator."""

import numpy as np
import pytest

from dynaweight.errors import ConfigError, SpecWarning
from dynaweight.geometry import (
    epipolar_distances,
    fundamental_from_pose,
    project_points,
    relative_pose,
)
from dynaweight.io_eval import DYNAMIC, STATIC, write_sequence
from dynaweight.synth import (
    SceneSpec,
    camera_pose,
    generate_scene,
    load_scene_spec,
    make_layout,
    object_offset,
)


def _matched(previous, frame):
    rows = np.flatnonzero(frame.prev_ids >= 0)
    lookup = {int(i): r for r, i in enumerate(previous.keypoint_ids)}
    prev_rows = [lookup[int(i)] for i in frame.prev_ids[rows]]
    return previous.uv[prev_rows], frame.uv[rows]


@pytest.mark.parametrize("trajectory", ["line", "circle", "sinusoid"])
def test_static_scene_satisfies_epipolar_constraint(trajectory):
    spec = SceneSpec(frames=12, trajectory=trajectory, trajectory_speed=0.02,
                     trajectory_period=20., trajectory_yaw=0.05)
    frames, _, _ = generate_scene(spec, seed=1)
    for k in range(1, len(frames)):
        rel = relative_pose(camera_pose(spec, k), camera_pose(spec, k - 1))
        f = fundamental_from_pose(rel, spec.intrinsics)
        prev_uv, cur_uv = _matched(frames[k - 1], frames[k])
        assert len(cur_uv) > 50
        assert np.max(epipolar_distances(f, prev_uv, cur_uv)) < 1e-9


def test_static_points_reproject_exactly():
    spec = SceneSpec(frames=6, trajectory="circle", trajectory_period=12.)
    frames, trajectory, _ = generate_scene(spec, seed=2)
    layout = make_layout(spec, 2)
    for k, frame in enumerate(frames):
        pose = trajectory[k].camera_to_world().inverse()
        expected, _ = project_points(
            pose.transform(layout.static_points[frame.keypoint_ids]), spec.intrinsics,
        )
        np.testing.assert_allclose(frame.uv, expected, atol=1e-9)


def test_object_pixel_speed():
    spec = SceneSpec(frames=3, trajectory_speed=0., static_points=0, objects=1,
                     object_depth=3., object_velocity="0.05,0,0",
                     articulated_jitter=0., match_dropout=0.)
    frames, _, _ = generate_scene(spec, seed=0)
    prev_uv, cur_uv = _matched(frames[0], frames[1])
    shift = cur_uv - prev_uv
    assert np.mean(shift[:, 0]) == pytest.approx(500. * 0.05 / 3., abs=0.1)
    np.testing.assert_allclose(shift[:, 1], 0., atol=1e-9)


def test_same_seed_same_bytes(tmp_path):
    spec = SceneSpec(frames=8, objects=2, object_velocity="0.02,0,0; 0,0.01,0",
                     pixel_noise=1., depth_noise=0.02)
    paths = []
    for name in ("a.jsonl", "b.jsonl"):
        frames, _, _ = generate_scene(spec, seed=7)
        paths.append(tmp_path / name)
        write_sequence(frames, str(paths[-1]))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    other, _, _ = generate_scene(spec, seed=8)
    write_sequence(other, str(tmp_path / "c.jsonl"))
    assert (tmp_path / "c.jsonl").read_bytes() != paths[0].read_bytes()


def test_labels_partition_keypoints():
    spec = SceneSpec(frames=5, objects=2, object_velocity="0.02,0,0; 0,0,0",
                     articulated_fraction=0.5)
    frames, _, labels = generate_scene(spec, seed=3)
    for frame in frames:
        mine = [l for l in labels if l["frame"] == frame.frame_id]
        assert sorted(l["keypoint"] for l in mine) == sorted(frame.keypoint_ids.tolist())
        for label in mine:
            assert label["label"] in (STATIC, DYNAMIC)
            if label["label"] == DYNAMIC:
                assert label["object"] >= 0
            if label["object"] == 0:
                assert label["label"] == DYNAMIC
    # the still object only has its jittering points labelled dynamic
    still = [l for l in labels if l["object"] == 1]
    assert {l["label"] for l in still} == {STATIC, DYNAMIC}


def test_dropout_schedule_is_honoured():
    spec = SceneSpec(frames=20, objects=1, object_velocity="0.01,0,0",
                     dropouts="0:5-7, 0:12-12")
    frames, _, _ = generate_scene(spec, seed=4)
    dropped = {5, 6, 7, 12}
    for frame in frames:
        assert (len(frame.detections) == 0) == (frame.frame_id in dropped)


def test_detection_boxes_contain_object_points():
    spec = SceneSpec(frames=4, objects=1, object_velocity="0.01,0.01,0",
                     static_points=20)
    frames, _, labels = generate_scene(spec, seed=5)
    for frame in frames:
        box = frame.detections[0]
        owned = {
            l["keypoint"] for l in labels
            if l["frame"] == frame.frame_id and l["object"] == 0
        }
        rows = [r for r, i in enumerate(frame.keypoint_ids) if i in owned]
        assert box.contains(frame.uv[rows]).all()


def test_bounce_motion_returns():
    spec = SceneSpec(objects=1, object_velocity="0.1,0,0", object_motion="bounce",
                     object_period=40)
    assert object_offset(spec, 0, 0) == pytest.approx([0., 0., 0.])
    assert object_offset(spec, 0, 20) == pytest.approx([2., 0., 0.])
    assert object_offset(spec, 0, 40) == pytest.approx([0., 0., 0.])
    assert object_offset(spec, 0, 30) == pytest.approx([1., 0., 0.])


def test_camera_anchored_object_stays_in_view():
    fields = dict(frames=200, trajectory_speed=0.025, static_points=50, objects=1,
                  articulated_jitter=0.)
    spec = SceneSpec(object_anchor="camera", **fields)
    frames, _, labels = generate_scene(spec, seed=6)
    assert all(len(f.detections) == 1 for f in frames)
    np.testing.assert_allclose(frames[-1].detections[0].box, frames[0].detections[0].box,
                               atol=1e-6)
    assert {l["label"] for l in labels if l["object"] == 0} == {DYNAMIC}

    world, _, _ = generate_scene(SceneSpec(object_anchor="world", **fields), seed=6)
    assert world[-1].detections == []


def test_invisible_object_warns():
    spec = SceneSpec(frames=3, objects=1, object_points=2)
    with pytest.warns(SpecWarning):
        frames, _, _ = generate_scene(spec, seed=0)
    assert all(f.detections == [] for f in frames)


@pytest.mark.parametrize(
    "changes",
    [
        {"pixel_noise": -1.},
        {"trajectory": "spiral"},
        {"objects": 1, "dropouts": "0:5-200"},
        {"objects": 1, "dropouts": "3:1-2"},
        {"objects": 1, "object_velocity": "1,2"},
        {"objects": 1, "object_anchor": "car"},
    ],
)
def test_invalid_specs(changes):
    with pytest.raises(ConfigError):
        SceneSpec(**changes)


def test_load_scene_spec(tmp_path):
    path = tmp_path / "scene.cfg"
    path.write_text("frames = 30\nobjects = 2\nobject_velocity = 0.05,0,0\n"
                    "dropouts = 1:3-5\npixel_noise = 0.5\n")
    spec = load_scene_spec(str(path))
    assert spec.frames == 30
    assert spec.pixel_noise == 0.5
    np.testing.assert_array_equal(spec.velocities, [[0.05, 0., 0.], [0.05, 0., 0.]])
    assert spec.dropped(1, 4)
    assert not spec.dropped(0, 4)
