"""Deterministic decision tree for near-neighbor search under l_infty.

The tree is built from two alternatives that always make progress. If
some data point has at least an alpha_dense fraction of the current
points inside the ball of radius R around it, the ball is collapsed to
its center and the structure recurses on the outside. Otherwise a
coordinate cut (j, u) is sought whose sides A = {x_j < u - 1},
B = {u - 1 <= x_j <= u + 1}, C = {x_j > u + 1} satisfy a replication
certificate ((|A|+|B|)/n)^(1+eps) + ((|B|+|C|)/n)^(1+eps) <= 1 with both
outer sides holding at least alpha_side * n / d points; the middle band
is copied into both children, so a query never loses a neighbor that is
within distance 1. Everything is stated at query radius 1; general r is
handled by scaling the input by 1/r.

There is no randomness anywhere: if a point within r of the query
exists, a query is guaranteed to return some point within (2R + 1) r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core
from .errors import DataError


def default_radius(d: int, eps: float) -> float:
    """R = 4 max(1, ceil(log2 log2 d)) / eps, the ball radius that makes
    the two-alternative argument go through."""
    if eps <= 0:
        raise DataError("eps must be positive")
    if d >= 2:
        inner = math.ceil(math.log2(max(math.log2(d), 1.0)))
    else:
        inner = 1
    return 4.0 * max(1, inner) / eps


def find_dense_ball(X: np.ndarray, R: float, alpha_dense: float,
                    chunk: int = 64) -> Optional[int]:
    """First data point whose l_infty ball of radius R holds at least
    alpha_dense * n points. Exact scan, chunked over candidate centers.

    Membership is a conjunction over coordinates, so candidate counts only
    shrink as coordinates are applied; a center whose running count drops
    below the threshold is disqualified without touching the remaining
    coordinates, which makes the common no-ball case cheap.
    """
    n, d = X.shape
    need = alpha_dense * n
    thresh = R + 1e-12
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        cand = np.arange(lo, hi)
        mask = np.ones((hi - lo, n), dtype=bool)
        for j in range(d):
            mask &= np.abs(X[cand, j][:, None] - X[None, :, j]) <= thresh
            viable = mask.sum(axis=1) >= need
            cand, mask = cand[viable], mask[viable]
            if cand.size == 0:
                break
        if cand.size:
            return int(cand[0])
    return None


def find_good_cut(X: np.ndarray, eps: float, alpha_side: float):
    """First (coordinate, threshold) pair passing the certificate.

    Coordinates are tried in index order; within a coordinate, thresholds
    are midpoints between consecutive distinct sorted values, smallest
    first. Returns None when no pair qualifies.
    """
    n, d = X.shape
    side_need = alpha_side * n / d
    expo = 1.0 + eps
    for j in range(d):
        v = np.sort(X[:, j])
        distinct = np.unique(v)
        if distinct.size < 2:
            continue
        mids = 0.5 * (distinct[:-1] + distinct[1:])
        # |A| = #{x < u - 1}, |C| = #{x > u + 1}
        a = np.searchsorted(v, mids - 1.0, side="left")
        c = n - np.searchsorted(v, mids + 1.0, side="right")
        left = n - c   # A union B
        right = n - a  # B union C
        cert = (left / n) ** expo + (right / n) ** expo
        ok = np.flatnonzero((cert <= 1.0 + 1e-12) & (a >= side_need) & (c >= side_need))
        if ok.size:
            return j, float(mids[ok[0]])
    return None


@dataclass
class Leaf:
    indices: np.ndarray


@dataclass
class BallNode:
    center_index: int
    center: np.ndarray
    radius: float
    outside: object


@dataclass
class CutNode:
    coord: int
    threshold: float
    left: object   # x_j <= u + 1
    right: object  # x_j >= u - 1


@dataclass
class BuildStats:
    nodes: int = 0
    cut_nodes: int = 0
    ball_nodes: int = 0
    leaves: int = 0
    fallback_leaves: int = 0
    forced_leaves: int = 0
    max_depth: int = 0
    total_leaf_points: int = 0
    replication_factor: float = 0.0
    levels: dict = field(default_factory=dict)


@dataclass
class QueryStats:
    path_length: int = 0
    candidates: int = 0


class LinfTree:
    """Decision tree over an l_infty dataset at a fixed query radius r."""

    def __init__(self, dataset: core.Dataset, r: float, eps: float = 1.0,
                 alpha_dense: float = 0.25, alpha_side: float = 0.25,
                 n0: int = 32, depth_max: int = 64, R: Optional[float] = None):
        if dataset.metric.kind != "linf":
            raise DataError("tree requires an linf dataset")
        if r <= 0:
            raise DataError("r must be positive")
        if eps <= 0:
            raise DataError("eps must be positive")
        self.dataset = dataset
        self.r = float(r)
        self.eps = float(eps)
        self.alpha_dense = alpha_dense
        self.alpha_side = alpha_side
        self.n0 = n0
        self.depth_max = depth_max
        self.R = float(R) if R is not None else default_radius(dataset.dim, eps)
        self.stats = BuildStats()
        scaled = dataset.points / self.r
        self.root = self._build(scaled, np.arange(dataset.n), 0)
        self.stats.replication_factor = (
            self.stats.total_leaf_points / max(dataset.n, 1))

    @property
    def guarantee(self) -> float:
        """Distance bound on returned points: (2R + 1) * r."""
        return (2.0 * self.R + 1.0) * self.r

    def _leaf(self, gidx, depth, kind):
        self.stats.nodes += 1
        self.stats.leaves += 1
        self.stats.total_leaf_points += int(gidx.size)
        self.stats.max_depth = max(self.stats.max_depth, depth)
        self.stats.levels.setdefault(depth, 0)
        self.stats.levels[depth] += 1
        if kind == "fallback":
            self.stats.fallback_leaves += 1
        elif kind == "forced":
            self.stats.forced_leaves += 1
        return Leaf(gidx)

    def _build(self, X, gidx, depth):
        if gidx.size <= self.n0:
            return self._leaf(gidx, depth, "plain")
        if depth >= self.depth_max:
            return self._leaf(gidx, depth, "forced")
        ball = find_dense_ball(X, self.R, self.alpha_dense)
        if ball is not None:
            self.stats.nodes += 1
            self.stats.ball_nodes += 1
            self.stats.max_depth = max(self.stats.max_depth, depth)
            inside = np.abs(X - X[ball][None, :]).max(axis=1) <= self.R + 1e-12
            outside = ~inside
            child = self._build(X[outside], gidx[outside], depth + 1)
            return BallNode(int(gidx[ball]), X[ball].copy(), self.R, child)
        cut = find_good_cut(X, self.eps, self.alpha_side)
        if cut is None:
            return self._leaf(gidx, depth, "fallback")
        j, u = cut
        self.stats.nodes += 1
        self.stats.cut_nodes += 1
        self.stats.max_depth = max(self.stats.max_depth, depth)
        lmask = X[:, j] <= u + 1.0
        rmask = X[:, j] >= u - 1.0
        left = self._build(X[lmask], gidx[lmask], depth + 1)
        right = self._build(X[rmask], gidx[rmask], depth + 1)
        return CutNode(j, u, left, right)

    def query(self, q: np.ndarray):
        """(index, stats); index is None when nothing within (2R + 1) r
        is reachable. If any point lies within r of q, the result is
        guaranteed to be a point within (2R + 1) r."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dataset.dim,):
            raise DataError("query dimension mismatch")
        stats = QueryStats()
        qs = q / self.r
        node = self.root
        while True:
            stats.path_length += 1
            if isinstance(node, Leaf):
                if node.indices.size == 0:
                    return None, stats
                stats.candidates += int(node.indices.size)
                dists = core.distances_to(
                    self.dataset.metric, self.dataset.points[node.indices], q)
                best = int(np.argmin(dists))
                if dists[best] <= self.guarantee + 1e-9:
                    return int(node.indices[best]), stats
                return None, stats
            if isinstance(node, BallNode):
                if np.abs(qs - node.center).max() <= node.radius + 1.0 + 1e-12:
                    stats.candidates += 1
                    return node.center_index, stats
                node = node.outside
                continue
            node = node.left if qs[node.coord] <= node.threshold else node.right

    def candidates(self, q: np.ndarray):
        """Indices worth verifying externally: the leaf the query routes to
        plus the center of every dense ball the query lands near. Unlike
        query(), ball nodes do not stop the walk, so callers re-checking
        distances in another metric see every structural candidate."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dataset.dim,):
            raise DataError("query dimension mismatch")
        stats = QueryStats()
        qs = q / self.r
        out = []
        node = self.root
        while True:
            stats.path_length += 1
            if isinstance(node, Leaf):
                out.extend(int(i) for i in node.indices)
                break
            if isinstance(node, BallNode):
                if np.abs(qs - node.center).max() <= node.radius + 1.0 + 1e-12:
                    out.append(node.center_index)
                node = node.outside
                continue
            node = node.left if qs[node.coord] <= node.threshold else node.right
        idx = np.unique(np.array(out, dtype=np.int64))
        stats.candidates = int(idx.size)
        return idx, stats


def build_linf(dataset: core.Dataset, r: float, **kwargs) -> LinfTree:
    return LinfTree(dataset, r, **kwargs)
