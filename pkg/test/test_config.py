# -*- coding: utf-8 -*-
"""Tests for the flat configuration files."""

import pytest

from dynaweight.config import (
    BASELINE,
    MINUS,
    EngineConfig,
    coerce,
    load_config,
    read_flat_file,
    validate,
)
from dynaweight.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "engine.cfg"
    path.write_text(text)
    return str(path)


def test_defaults_are_valid():
    cfg = EngineConfig()
    assert validate(cfg) == []
    assert cfg.tracker.gate_iou == 0.3
    assert cfg.stage_two.th_ba == 20.
    assert cfg.optimizer.huber_delta == 2.45
    assert cfg.mover_classes == frozenset({"person"})


def test_out_of_range_values_raise():
    with pytest.raises(ConfigError):
        EngineConfig(o_th=1.2)
    with pytest.raises(ConfigError):
        EngineConfig(mode="loud")
    with pytest.raises(ConfigError):
        EngineConfig().replace(ransac_iters=0)


def test_read_flat_file(tmp_path):
    path = _write(tmp_path, "# engine\n\no_th = 0.95  # stricter\nmode=minus\n")
    assert read_flat_file(path) == [(3, "o_th", "0.95"), (4, "mode", "minus")]


@pytest.mark.parametrize(
    "text, line",
    [
        ("o_th = 0.9\nnot a pair\n", 2),
        ("o_th = 0.9\n = 3\n", 2),
        ("o_th = 0.9\no_th = 0.8\n", 2),
    ],
)
def test_malformed_lines(tmp_path, text, line):
    with pytest.raises(ConfigError, match="line %i" % line):
        read_flat_file(_write(tmp_path, text))


def test_undecodable_line(tmp_path):
    path = tmp_path / "engine.cfg"
    path.write_bytes(b"o_th = 0.9\nmode = \xff\n")
    with pytest.raises(ConfigError, match="line 2"):
        read_flat_file(str(path))


def test_coerce():
    assert coerce("off", True, "clustering") is False
    assert coerce("Yes", False, "clustering") is True
    assert coerce("12", 10, "max_iters") == 12
    assert coerce("0.5", 0.3, "km_gap") == 0.5
    assert coerce("person, car", frozenset(), "mover_classes") == frozenset({"person", "car"})
    with pytest.raises(ValueError):
        coerce("maybe", True, "clustering")


def test_load_config(tmp_path):
    path = _write(
        tmp_path,
        "o_th = 0.95\nmode = minus\nmover_classes = person, dog\nrefinement = no\n",
    )
    cfg = load_config(path)
    assert cfg.o_th == 0.95
    assert cfg.mode == MINUS
    assert cfg.mover_classes == frozenset({"person", "dog"})
    assert cfg.refinement is False
    assert cfg.stage_two.o_th == 0.95


def test_overrides_win_unless_none(tmp_path):
    path = _write(tmp_path, "mode = minus\nseed = 3\n")
    cfg = load_config(path, mode=BASELINE, seed=None)
    assert cfg.mode == BASELINE
    assert cfg.seed == 3


def test_load_config_reports_lines(tmp_path):
    with pytest.raises(ConfigError, match="line 2: unknown key"):
        load_config(_write(tmp_path, "o_th = 0.9\nspeed = 3\n"))
    with pytest.raises(ConfigError, match="line 1"):
        load_config(_write(tmp_path, "max_iters = many\n"))
    with pytest.raises(ConfigError, match="line 2: .*km_gap"):
        load_config(_write(tmp_path, "o_th = 0.9\nkm_gap = 3\n"))
