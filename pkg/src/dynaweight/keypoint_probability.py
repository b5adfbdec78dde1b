# -*- coding: utf-8 -*-
"""
Second-stage keypoint static probabilities.

Matched keypoints are scored against the first-stage pose twice: by the
reprojection distance of their previous observation and by their distance
to the epipolar line of the previous observation. Each constraint derives
an adaptive threshold from keypoints outside the mover boxes and a pair of
confidences for the pose it was computed from. The two scores are fused
according to the dynamic attribute of the owning object; gates for newly
appeared boxes and unmatched keypoints follow.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from dynaweight.errors import ThresholdUnavailable
from dynaweight.geometry import epipolar_distances, projection_errors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageTwoConfig:
    o_th: float = 0.9
    t_th: float = 0.02
    quantile: float = 0.8
    sigmoid_slope: float = 5.0
    th_ba: float = 20.0


@dataclass(frozen=True)
class ResidualStats:
    d_th: float
    d_min: float
    n_t: int
    sum_d: float


@dataclass(frozen=True)
class ConfidencePair:
    c_s: float = 0.0
    c_c: float = 0.0

    @property
    def weight(self):
        return self.c_s * self.c_c


@dataclass
class ConstraintScores:
    """
    Per-keypoint probabilities of one constraint; NaN where the residual is
    undefined.
    """
    probabilities: np.ndarray
    residuals: np.ndarray
    confidence: ConfidencePair = ConfidencePair()
    stats: Optional[ResidualStats] = None
    skipped: bool = False


@dataclass
class KeypointRecord:
    keypoint_id: int
    k: float = 1.0
    k_d: float = 1.0
    k_t: float = math.nan
    k_f: float = math.nan
    matched_prev: bool = False
    in_foreground: bool = False
    track_id: Optional[int] = None
    map_point_id: Optional[int] = None


def adaptive_threshold(residuals, quantile=0.8):
    """
    Threshold at the `quantile` position of the sorted residuals, together
    with the minimum and the count and sum of residuals below it.
    """
    residuals = np.asarray(residuals, dtype=float).ravel()
    residuals = np.sort(residuals[np.isfinite(residuals)])
    n = len(residuals)
    if n == 0:
        raise ThresholdUnavailable("no residuals outside the mover boxes")
    index = min(max(int(math.floor(quantile * n)), 0), n - 1)
    d_th = float(residuals[index])
    below = residuals[residuals < d_th]
    return ResidualStats(
        d_th=d_th,
        d_min=float(residuals[0]),
        n_t=int(len(below)),
        sum_d=float(below.sum()),
    )


def sigmoid_probability(d, stats, slope=5.0):
    """
    1 / (1 + exp((d - D_Th) * slope / (D_Th - d_min))), a step at D_Th when
    the threshold equals the minimum.
    """
    d = np.asarray(d, dtype=float)
    spread = stats.d_th - stats.d_min
    if spread <= 0:
        result = np.where(d <= stats.d_th, 1., 0.)
    else:
        result = expit(-(d - stats.d_th) * slope / spread)
    result = np.where(np.isfinite(d), result, np.nan)
    if result.ndim == 0:
        return float(result)
    return result


def statistical_confidence(n_ba, th_ba=20.0):
    "Confidence in the number of pose inliers"
    if th_ba <= 0:
        raise ValueError("th_ba must be positive")
    return float(expit(n_ba - 0.5 * th_ba))


def calculation_confidence(stats):
    "Confidence in the pose from the residuals below the threshold"
    if stats.n_t == 0 or stats.d_th <= 0:
        return 0.
    return 1. - stats.sum_d / (stats.n_t * stats.d_th)


def score_residuals(residuals, reference, n_ba, cfg):
    """
    Probabilities and confidences for one constraint. `reference` selects
    the residuals the threshold is derived from.
    """
    residuals = np.asarray(residuals, dtype=float)
    try:
        stats = adaptive_threshold(residuals[reference], cfg.quantile)
    except ThresholdUnavailable:
        logger.debug("no reference residuals; constraint treated as static")
        probabilities = np.where(np.isfinite(residuals), 1., np.nan)
        return ConstraintScores(
            probabilities=probabilities,
            residuals=residuals,
        )
    return ConstraintScores(
        probabilities=sigmoid_probability(
            residuals, stats, cfg.sigmoid_slope,
        ),
        residuals=residuals,
        confidence=ConfidencePair(
            statistical_confidence(n_ba, cfg.th_ba),
            calculation_confidence(stats),
        ),
        stats=stats,
    )


def projection_stage(prev_uv, prev_depth, cur_uv, reference, rel, k, n_ba,
                     cfg=None):
    """
    Projection-constraint probabilities K^T of matched keypoints under the
    first-stage relative pose. `n_ba` is the inlier count of that pose.
    """
    if cfg is None:
        cfg = StageTwoConfig()
    residuals = projection_errors(prev_uv, prev_depth, cur_uv, rel, k)
    return score_residuals(residuals, reference, n_ba, cfg)


def epipolar_stage(prev_uv, cur_uv, reference, f, translation_norm,
                   cfg=None):
    """
    Epipolar-constraint probabilities K^F of matched keypoints.

    Below the translation threshold the fundamental matrix is meaningless:
    every K^F and both confidences are 0. Otherwise the statistical
    confidence counts the reference correspondences used.
    """
    if cfg is None:
        cfg = StageTwoConfig()
    n = len(np.asarray(prev_uv).reshape(-1, 2))
    if translation_norm <= cfg.t_th or f is None:
        return ConstraintScores(
            probabilities=np.zeros(n),
            residuals=np.full(n, np.nan),
            skipped=True,
        )
    residuals = epipolar_distances(f, prev_uv, cur_uv)
    reference = np.asarray(reference, dtype=bool) & np.isfinite(residuals)
    return score_residuals(residuals, reference, int(reference.sum()), cfg)


def fuse_stage2(k_stage1, k_t, k_f, conf_t, conf_f, o, translation_norm,
                o_th=0.9, t_th=0.02):
    """
    Second-stage K of a matched keypoint.

    High dynamic objects multiply the two constraints (the epipolar one only
    when the camera moved enough); low dynamic objects average them weighted
    by confidence. An undefined projection score keeps the first-stage K.
    """
    if k_t is None or math.isnan(k_t):
        return k_stage1
    epipolar_valid = (
        translation_norm > t_th and k_f is not None and not math.isnan(k_f)
    )
    if o <= o_th:
        if epipolar_valid:
            return min(max(k_t * k_f, 0.), 1.)
        return min(max(k_t, 0.), 1.)
    w_t = conf_t.weight
    w_f = conf_f.weight if epipolar_valid else 0.
    if w_t + w_f <= 0:
        return k_stage1
    k_f = k_f if epipolar_valid else 0.
    return min(max((k_t * w_t + k_f * w_f) / (w_t + w_f), 0.), 1.)


def apply_gates(records, associated_tracks, map_probabilities):
    """
    Final rules on top of the fused K.

    Matched foreground keypoints of a box with no predecessor box are false
    matches (K = 0). Unmatched keypoints are 0 in the foreground and take
    the probability of their map point otherwise (1 without one).
    """
    gated = []
    for record in records:
        if record.matched_prev:
            if (
                record.in_foreground
                and record.track_id is not None
                and record.track_id not in associated_tracks
            ):
                record = replace(record, k=0.)
        elif record.in_foreground:
            record = replace(record, k=0.)
        else:
            m = map_probabilities.get(record.map_point_id, 1.)
            record = replace(record, k=float(m))
        gated.append(record)
    return gated
