# -*- coding: utf-8 -*-
"""
Engine configuration: a flat set of knobs read from `key = value` files.
"""

import dataclasses
import logging
from dataclasses import dataclass

from dynaweight.box_tracker import TrackerConfig
from dynaweight.errors import ConfigError
from dynaweight.geometry import RansacConfig
from dynaweight.keypoint_probability import StageTwoConfig
from dynaweight.object_probability import DynamicsConfig
from dynaweight.pose_optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

FULL = "full"
MINUS = "minus"
BASELINE = "baseline"
DETECTION_ONLY = "detection_only"
MODES = (FULL, MINUS, BASELINE, DETECTION_ONLY)

TRUE_WORDS = ("true", "yes", "1", "on")
FALSE_WORDS = ("false", "no", "0", "off")


@dataclass
class EngineConfig:
    o_th: float = 0.9
    t_th: float = 0.02
    quantile: float = 0.8
    sigmoid_slope: float = 5.0
    map_delete: float = 0.3
    th_ba: float = 20.0
    km_gap: float = 0.4
    map_alpha: float = 0.3
    map_max_age: int = 5
    reassociation_px: float = 3.0
    mover_classes: frozenset = frozenset({"person"})
    gate_iou: float = 0.3
    max_compensation: int = 10
    process_noise_pos: float = 1.0
    process_noise_vel: float = 0.25
    measurement_noise: float = 4.0
    ransac_px: float = 1.0
    ransac_iters: int = 200
    huber_delta: float = 2.45
    chi2_2dof: float = 5.991
    max_iters: int = 10
    association_window: float = 0.02
    mode: str = FULL
    compensation: bool = True
    clustering: bool = True
    refinement: bool = True
    seed: int = 0

    def __post_init__(self):
        self.mover_classes = frozenset(self.mover_classes)
        problems = validate(self)
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def tracker(self):
        return TrackerConfig(
            mover_classes=self.mover_classes,
            gate_iou=self.gate_iou,
            max_compensation=self.max_compensation,
            process_noise_pos=self.process_noise_pos,
            process_noise_vel=self.process_noise_vel,
            measurement_noise=self.measurement_noise,
            compensation=self.compensation,
        )

    @property
    def ransac(self):
        return RansacConfig(
            threshold=self.ransac_px, iterations=self.ransac_iters,
        )

    @property
    def dynamics(self):
        return DynamicsConfig(o_th=self.o_th, mover_classes=self.mover_classes)

    @property
    def stage_two(self):
        return StageTwoConfig(
            o_th=self.o_th,
            t_th=self.t_th,
            quantile=self.quantile,
            sigmoid_slope=self.sigmoid_slope,
            th_ba=self.th_ba,
        )

    @property
    def optimizer(self):
        return OptimizerConfig(
            huber_delta=self.huber_delta,
            chi2_2dof=self.chi2_2dof,
            max_iters=self.max_iters,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def validate(cfg):
    "Human-readable range violations of cfg, empty when valid"
    problems = []

    def check(ok, text):
        if not ok:
            problems.append(text)

    check(0. < cfg.o_th < 1., "o_th must lie in (0, 1)")
    check(cfg.t_th >= 0., "t_th must be >= 0")
    check(0. < cfg.quantile <= 1., "quantile must lie in (0, 1]")
    check(cfg.sigmoid_slope > 0., "sigmoid_slope must be > 0")
    check(0. <= cfg.map_delete <= 1., "map_delete must lie in [0, 1]")
    check(cfg.th_ba > 0., "th_ba must be > 0")
    check(0. <= cfg.km_gap <= 1., "km_gap must lie in [0, 1]")
    check(0. < cfg.map_alpha <= 1., "map_alpha must lie in (0, 1]")
    check(cfg.map_max_age >= 0, "map_max_age must be >= 0")
    check(cfg.reassociation_px >= 0., "reassociation_px must be >= 0")
    check(len(cfg.mover_classes) > 0, "mover_classes must not be empty")
    check(0. <= cfg.gate_iou <= 1., "gate_iou must lie in [0, 1]")
    check(cfg.max_compensation >= 0, "max_compensation must be >= 0")
    check(cfg.process_noise_pos > 0., "process_noise_pos must be > 0")
    check(cfg.process_noise_vel > 0., "process_noise_vel must be > 0")
    check(cfg.measurement_noise > 0., "measurement_noise must be > 0")
    check(cfg.ransac_px > 0., "ransac_px must be > 0")
    check(cfg.ransac_iters >= 1, "ransac_iters must be >= 1")
    check(cfg.huber_delta > 0., "huber_delta must be > 0")
    check(cfg.chi2_2dof > 0., "chi2_2dof must be > 0")
    check(cfg.max_iters >= 1, "max_iters must be >= 1")
    check(cfg.association_window > 0., "association_window must be > 0")
    check(cfg.mode in MODES, "mode must be one of %s" % ", ".join(MODES))
    check(cfg.seed >= 0, "seed must be >= 0")
    return problems


def read_flat_file(path):
    """
    `key = value` pairs of a flat text file, with the line each came from.
    Blank lines and `#` comments are ignored.
    """
    entries = []
    seen = set()
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise ConfigError("line %i: not valid utf-8 text" % line_number)
            text = text.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(
                    "line %i: expected 'key = value'" % line_number
                )
            key, value = (s.strip() for s in text.split("=", 1))
            if not key:
                raise ConfigError("line %i: empty key" % line_number)
            if key in seen:
                raise ConfigError(
                    "line %i: duplicate key %r" % (line_number, key)
                )
            seen.add(key)
            entries.append((line_number, key, value))
    return entries


def coerce(value, default, key):
    "Convert the text `value` to the type of `default`"
    if isinstance(default, bool):
        word = value.lower()
        if word in TRUE_WORDS:
            return True
        if word in FALSE_WORDS:
            return False
        raise ValueError("%s expects a boolean, got %r" % (key, value))
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, frozenset):
        return frozenset(v.strip() for v in value.split(",") if v.strip())
    return value


def parse_fields(entries, defaults):
    """
    Typed values for the (line, key, value) `entries` of a flat file, keyed
    like the fields of the `defaults` dataclass instance.
    """
    fields = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(defaults)}
    values = {}
    for line_number, key, value in entries:
        if key not in fields:
            raise ConfigError("line %i: unknown key %r" % (line_number, key))
        try:
            values[key] = coerce(value, fields[key], key)
        except ValueError as error:
            raise ConfigError("line %i: %s" % (line_number, error))
    return values


def load_config(path, **overrides):
    """
    EngineConfig from a flat config file. Keyword arguments that are not
    None override file values.
    """
    entries = read_flat_file(path)
    values = parse_fields(entries, EngineConfig())
    lines = {key: line_number for line_number, key, _ in entries}
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in values.items():
        try:
            EngineConfig(**{key: value})
        except ConfigError as error:
            where = "line %i: " % lines[key] if key in lines else ""
            raise ConfigError(where + str(error))
    logger.debug("config %s: %s", path, sorted(values))
    return EngineConfig(**values)
