# -*- coding: utf-8 -*-
"""
Foreground/background separation inside mover boxes by density clustering
of keypoint depths, and the first-stage keypoint probability update.

A person in front of a scene has continuous depth and a large depth gap to
the background, so clustering runs on depth alone.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.cluster import DBSCAN
from sklearn.neighbors import NearestNeighbors

from dynaweight.box_tracker import HIGH_DYNAMIC

logger = logging.getLogger(__name__)

EPS_RANGE = (0.05, 1.0)
FALLBACK_EPS = 0.3
NEIGHBOUR_RANK = 4


@dataclass
class DepthClusterResult:
    clusters: list = field(default_factory=list)
    noise: frozenset = frozenset()
    foreground: Optional[int] = None
    eps: float = FALLBACK_EPS
    min_pts: int = 1
    without_depth: frozenset = frozenset()

    @property
    def members(self):
        return frozenset().union(self.noise, *self.clusters)

    def foreground_ids(self):
        """
        Keypoints treated as foreground. A lone cluster has no background to
        contrast with, so then every keypoint with depth is foreground.
        """
        if self.foreground is None:
            return frozenset()
        if len(self.clusters) == 1:
            return self.members - self.without_depth
        return self.clusters[self.foreground]


def adaptive_dbscan_params(depths):
    """
    eps from the median 4th-nearest-neighbour depth gap, clamped to
    [0.05, 1.0] m; min_pts = max(4, 10% of the points).
    """
    depths = np.asarray(depths, dtype=float).ravel()
    depths = depths[np.isfinite(depths) & (depths > 0)]
    n = len(depths)
    if n < NEIGHBOUR_RANK + 1:
        return FALLBACK_EPS, max(min(n, 3), 1)
    neighbours = NearestNeighbors(n_neighbors=NEIGHBOUR_RANK + 1)
    neighbours.fit(depths.reshape(-1, 1))
    distances, _ = neighbours.kneighbors(depths.reshape(-1, 1))
    eps = float(np.median(distances[:, NEIGHBOUR_RANK]))
    eps = min(max(eps, EPS_RANGE[0]), EPS_RANGE[1])
    return eps, max(4, int(math.floor(0.1 * n)))


def dbscan(depths_by_id, eps, min_pts):
    """
    DBSCAN on the depth axis. Keypoints are visited in ascending id order,
    so a border point joins the first cluster that reaches it. Keypoints
    without a valid depth are noise.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("need eps > 0 and min_pts >= 1")
    ids = sorted(depths_by_id)
    depths = np.array(
        [np.nan if depths_by_id[i] is None else depths_by_id[i] for i in ids],
        dtype=float,
    )
    valid = np.isfinite(depths) & (depths > 0)
    valid_ids = [i for i, ok in zip(ids, valid) if ok]
    without_depth = frozenset(i for i, ok in zip(ids, valid) if not ok)

    clusters = []
    noise = set(without_depth)
    if valid_ids:
        labels = DBSCAN(eps=eps, min_samples=min_pts).fit(
            depths[valid].reshape(-1, 1)
        ).labels_
        for label in range(labels.max() + 1):
            clusters.append(
                frozenset(i for i, l in zip(valid_ids, labels) if l == label)
            )
        noise.update(i for i, l in zip(valid_ids, labels) if l < 0)

    foreground = None
    if clusters:
        means = [
            np.mean([depths_by_id[i] for i in sorted(c)]) for c in clusters
        ]
        foreground = int(np.argmin(means))
    return DepthClusterResult(
        clusters=clusters,
        noise=frozenset(noise),
        foreground=foreground,
        eps=eps,
        min_pts=min_pts,
        without_depth=without_depth,
    )


def cluster_box(depths_by_id):
    "Adaptive parameters followed by dbscan"
    eps, min_pts = adaptive_dbscan_params(
        [d for d in depths_by_id.values() if d is not None]
    )
    return dbscan(depths_by_id, eps, min_pts)


def background_probability(k, o, o_th=0.9):
    """
    Multiplicative factor for background keypoints of a box.

    Never below 1. For a low dynamic object it lifts K to 1; a zero K
    there yields infinity, the limit in which the updated K is 1.
    """
    if o <= o_th:
        return (1. - o_th) / o_th**4 * k**3 + 1.
    if k == 0:
        return math.inf
    return 1. / k


def updated_background(k, o, o_th=0.9):
    "K * K^D clamped to [0, 1]"
    factor = background_probability(k, o, o_th)
    if math.isinf(factor):
        return 1.
    return min(max(k * factor, 0.), 1.)


def stage1_update(probabilities, cluster_result, o, attribute, o_th=0.9):
    """
    First-stage update of the keypoints owned by one box.

    `probabilities` maps keypoint id to its initialised K. Foreground of a
    high dynamic object drops to 0, foreground of a low dynamic object is
    unchanged, everything else in the box is treated as background.
    Returns (updated K, K^D) dictionaries over the same ids.
    """
    foreground = cluster_result.foreground_ids()
    updated = {}
    factors = {}
    for keypoint_id, k in probabilities.items():
        if keypoint_id in foreground:
            factors[keypoint_id] = 1.
            updated[keypoint_id] = 0. if attribute == HIGH_DYNAMIC else k
        else:
            factors[keypoint_id] = background_probability(k, o, o_th)
            updated[keypoint_id] = updated_background(k, o, o_th)
    return updated, factors
