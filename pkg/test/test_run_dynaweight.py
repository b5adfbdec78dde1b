# -*- coding: utf-8 -*-
"""Tests for the command line front end."""

import pytest

from run_dynaweight import EXIT_INPUT, EXIT_LOST, EXIT_OK, main, new_argument_parser


def _synth(tmp_path, spec_text, seed=0):
    spec = tmp_path / "scene.cfg"
    spec.write_text(spec_text)
    frames = tmp_path / "frames.jsonl"
    gt = tmp_path / "groundtruth.txt"
    labels = tmp_path / "labels.jsonl"
    code = main([
        "synth", "--spec", str(spec), "--seed", str(seed), "--out", str(frames),
        "--out-gt", str(gt), "--out-labels", str(labels),
    ])
    assert code == EXIT_OK
    return frames, gt, labels


def test_parser_defaults():
    args = new_argument_parser().parse_args(["eval", "--est", "a", "--gt", "b"])
    assert args.metric == "ate"
    assert args.delta == 1
    assert args.window == 0.02
    with pytest.raises(SystemExit):
        new_argument_parser().parse_args(["run", "--input", "x", "--mode", "loud"])


def test_synth_run_eval(tmp_path, capsys):
    frames, gt, labels = _synth(tmp_path, "frames = 10\nstatic_points = 120\n")
    assert labels.read_text().count("\n") > 0
    traj = tmp_path / "trajectory.txt"
    diag = tmp_path / "diag.jsonl"
    code = main([
        "run", "--input", str(frames), "--out-traj", str(traj),
        "--out-diag", str(diag), "--seed", "4",
    ])
    assert code == EXIT_OK
    assert traj.read_text().count("\n") == 10
    assert diag.read_text().count("\n") == 10

    capsys.readouterr()
    assert main(["eval", "--est", str(traj), "--gt", str(gt)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ate.rmse 0.000000" in out
    assert main(["eval", "--est", str(traj), "--gt", str(gt), "--metric", "rpe",
                 "--delta", "2"]) == EXIT_OK
    assert "rpe.rot.rmse" in capsys.readouterr().out


def test_run_with_config(tmp_path):
    frames, _, _ = _synth(tmp_path, "frames = 4\nobjects = 1\n")
    config = tmp_path / "engine.cfg"
    config.write_text("mode = minus\nclustering = off\n")
    traj = tmp_path / "trajectory.txt"
    code = main([
        "run", "--input", str(frames), "--config", str(config),
        "--mode", "detection_only", "--out-traj", str(traj),
    ])
    assert code == EXIT_OK


def test_input_errors(tmp_path):
    missing = str(tmp_path / "missing.jsonl")
    assert main(["run", "--input", missing, "--out-traj", str(tmp_path / "t.txt")]) == EXIT_INPUT

    frames, gt, _ = _synth(tmp_path, "frames = 3\n")
    config = tmp_path / "engine.cfg"
    config.write_text("volume = 11\n")
    assert main(["run", "--input", str(frames), "--config", str(config)]) == EXIT_INPUT

    binary = tmp_path / "binary.jsonl"
    binary.write_bytes(frames.read_bytes() + b"\xff\xfe\n")
    assert main(["run", "--input", str(binary), "--out-traj", str(tmp_path / "t.txt")]) == EXIT_INPUT

    one_line = tmp_path / "one.txt"
    one_line.write_text("0.000000 0 0 0 0 0 0 1\n")
    assert main(["eval", "--est", str(one_line), "--gt", str(gt)]) == EXIT_INPUT


def test_lost_tracking_exit_code(tmp_path):
    frames, _, _ = _synth(tmp_path, "frames = 5\nmatch_dropout = 1\n")
    traj = tmp_path / "trajectory.txt"
    assert main(["run", "--input", str(frames), "--out-traj", str(traj)]) == EXIT_LOST
    assert traj.read_text().count("\n") == 5
