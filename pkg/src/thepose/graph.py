"""Hybrid receptive field: k-NN graphs under a blended feature/point metric.

The blended distance is alpha * ||f_i - f_j|| + (1 - alpha) * ||p_i - p_j||.
Selection is exact: k smallest per row excluding self, ties broken by lower
index, verified against an exhaustive oracle in the tests. Rows whose k-th
distance is tied with later candidates fall back to a full lexicographic
sort so boundary ties never depend on argpartition internals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import Error


@dataclass(frozen=True)
class HybridGraph:
    neighbors: np.ndarray  # N x k int64, sorted by (distance, index) per row
    distances: np.ndarray  # N x k f64
    alpha: float
    k: int

    def to_json(self) -> str:
        return json.dumps({
            "alpha": self.alpha,
            "k": self.k,
            "neighbors": self.neighbors.tolist(),
            "distances": self.distances.tolist(),
        })


def hybrid_distance(f_i, f_j, p_i, p_j, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise Error("shape", "alpha must be in [0, 1]")
    d_feat = float(np.linalg.norm(np.asarray(f_i, float) - np.asarray(f_j, float)))
    d_point = float(np.linalg.norm(np.asarray(p_i, float) - np.asarray(p_j, float)))
    return alpha * d_feat + (1.0 - alpha) * d_point


def pairwise_euclidean(mat) -> np.ndarray:
    """Dense all-pairs distances via the gram-matrix identity, in place."""
    m = np.ascontiguousarray(mat, dtype=np.float64)
    g = m @ m.T
    sq = np.diag(g).copy()
    g *= -2.0
    g += sq[:, None]
    g += sq[None, :]
    np.maximum(g, 0.0, out=g)
    return np.sqrt(g, out=g)


def _select_k(dist, k):
    """k smallest per row (self excluded upstream), ties by lower index.

    Partitions k+1 candidates; the set of k smallest is unambiguous unless
    the k-th and (k+1)-th values tie, and only those rows pay for an exact
    full-row lexicographic sort.
    """
    n = dist.shape[0]
    part = np.argpartition(dist, k, axis=1)[:, : k + 1]
    vals = np.take_along_axis(dist, part, axis=1)
    order = np.lexsort((part, vals), axis=1)
    part = np.take_along_axis(part, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    for i in np.flatnonzero(vals[:, k] == vals[:, k - 1]):
        exact = np.lexsort((np.arange(n), dist[i]))[:k]
        part[i, :k] = exact
        vals[i, :k] = dist[i, exact]
    return part[:, :k], vals[:, :k]


def blended_matrix(d_feat, d_point, alpha):
    if alpha == 0.0:
        return d_point
    if alpha == 1.0:
        return d_feat
    return alpha * d_feat + (1.0 - alpha) * d_point


def build_receptive_field(features, cloud, k: int, alpha: float,
                          d_feat=None, d_point=None) -> HybridGraph:
    """k nearest neighbors per point under the blended distance.

    ``d_feat``/``d_point`` accept precomputed distance matrices so layered
    callers can reuse them across alpha values.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    n = len(cloud)
    if not 0.0 <= alpha <= 1.0:
        raise Error("shape", "alpha must be in [0, 1]")
    if k < 1 or k >= n:
        raise Error("invalid-k", f"need 1 <= k < N, got k={k}, N={n}")
    if d_point is None:
        d_point = pairwise_euclidean(cloud)
    if alpha > 0.0 and d_feat is None:
        feats = np.asarray(features, dtype=np.float64)
        if len(feats) != n:
            raise Error("shape", "features and cloud row counts differ")
        d_feat = pairwise_euclidean(feats)
    dist = blended_matrix(d_feat, d_point, alpha)
    if dist is d_point or dist is d_feat:
        dist = dist.copy()
    np.fill_diagonal(dist, np.inf)
    nbr, vals = _select_k(dist, k)
    return HybridGraph(neighbors=nbr.astype(np.int64), distances=vals,
                       alpha=float(alpha), k=int(k))
