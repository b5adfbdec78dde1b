# -*- coding: utf-8 -*-
"""
Static probability of potentially moving objects from epipolar residuals,
high/low dynamic classification and keypoint probability initialisation.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from dynaweight.box_tracker import HIGH_DYNAMIC, LOW_DYNAMIC
from dynaweight.errors import InvalidResidual
from dynaweight.geometry import epipolar_distance, epipolar_distances

logger = logging.getLogger(__name__)

QUANTILE_POSITIONS = (0.1, 0.2, 0.3)


@dataclass(frozen=True)
class DynamicsConfig:
    o_th: float = 0.9
    mover_classes: frozenset = frozenset({"person"})

    def __post_init__(self):
        if not 0. < self.o_th < 1.:
            raise ValueError("o_th must lie in (0, 1), got %r" % self.o_th)


@dataclass
class ObjectStaticEstimate:
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value: float = 0.0

    @property
    def count(self):
        return len(self.scores)


def chi_square_static(x):
    """
    Survival function of the chi-square distribution with two degrees of
    freedom, exp(-x / 2). 1 for a zero residual, falling towards 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidResidual("squared residual must be >= 0")
    result = chi2.sf(x, df=2)
    if result.ndim == 0:
        return float(result)
    return result


def pair_estimate(prev, cur, f):
    "Single static estimate of one correspondence"
    return chi_square_static(epipolar_distance(f, prev, cur)**2)


def pair_estimates(f, prev_uv, cur_uv):
    "Vectorised pair_estimate; pairs with degenerate lines are dropped"
    d = epipolar_distances(f, prev_uv, cur_uv)
    d = d[np.isfinite(d)]
    return chi_square_static(d**2) if len(d) else np.zeros(0)


def object_static_probability(scores, previous=None):
    """
    Mean of the sorted scores at positions 0.1M, 0.2M and 0.3M.

    Without scores the previous value of the track is kept, or 0 for a
    track that has never been scored.
    """
    scores = np.sort(np.asarray(scores, dtype=float).ravel())
    m = len(scores)
    if m == 0:
        return 0.0 if previous is None else float(previous)
    indices = [
        min(max(int(np.floor(q * m)), 0), m - 1) for q in QUANTILE_POSITIONS
    ]
    return float(np.mean(scores[indices]))


def estimate_object(f, prev_uv, cur_uv, previous=None):
    "ObjectStaticEstimate of one box from its correspondences"
    if f is None or len(prev_uv) == 0:
        scores = np.zeros(0)
    else:
        scores = pair_estimates(f, prev_uv, cur_uv)
    return ObjectStaticEstimate(
        scores=scores,
        value=object_static_probability(scores, previous),
    )


def classify(o, o_th=0.9):
    return HIGH_DYNAMIC if o <= o_th else LOW_DYNAMIC


@dataclass
class KeypointInit:
    probabilities: np.ndarray
    owners: np.ndarray


def classify_and_init(uv, boxes, static_probabilities, o_th=0.9):
    """
    Initial keypoint probabilities for one frame.

    Keypoints inside mover boxes start at the static probability of the
    box (the smallest one when boxes overlap), all others at 1. `owners`
    holds the index of the owning box, -1 outside all boxes.
    """
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    probabilities = np.ones(len(uv))
    owners = np.full(len(uv), -1, dtype=int)
    for index, (box, o) in enumerate(zip(boxes, static_probabilities)):
        inside = box.contains(uv) & (o < probabilities)
        probabilities[inside] = o
        owners[inside] = index
    # keypoints inside a box with O = 1 still belong to it
    for index, box in enumerate(boxes):
        unowned = (owners < 0) & box.contains(uv)
        owners[unowned] = index
    logger.debug(
        "initialised %i keypoints, %i inside mover boxes",
        len(uv), int((owners >= 0).sum()),
    )
    return KeypointInit(probabilities=probabilities, owners=owners)
