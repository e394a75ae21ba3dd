"""Data-dependent space partitioning for unit-sphere instances.

The structure alternates two steps. Dense clusters, meaning caps of
radius sqrt(2) - eps around a data point holding at least a tau fraction
of the current points, are peeled off, recentered, and recursed into;
whatever remains has no dense direction and is split by one sampled
Gaussian-threshold hash. Queries descend every peeled cluster plus the
one hash bucket they land in, and every answer is verified against the
original points, so returned neighbors are always within cr.

The accompanying trade-off calculator exposes the frontier between query
exponent rho_q and space exponent rho_s that this style of partitioning
is known to achieve: c^2 sqrt(rho_q) + (c^2 - 1) sqrt(rho_s) = sqrt(2c^2 - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core
from .errors import DataError
from .families import _SphericalHasher
from .seeds import child_seed

UNIT_TOL = 1e-6


def cap_offset(eps: float) -> float:
    """Inner product threshold h with ||x - u|| <= sqrt(2) - eps iff <x, u> >= h."""
    return math.sqrt(2.0) * eps - eps * eps / 2.0


def default_tau(n: int) -> float:
    return float(n) ** -0.2


def default_eps(n: int) -> float:
    if n > 16:
        return max(1.0 / math.log(math.log(n)), 0.05)
    return 0.5


def _check_unit_rows(X: np.ndarray):
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise DataError("points must lie on the unit sphere")


def extract_clusters(X: np.ndarray, eps: float, tau: float):
    """Iteratively peel caps B(u, sqrt(2) - eps) around data points.

    A data point qualifies as a center while its cap holds at least
    tau * (current remaining count) points; the fraction is measured
    against the shrinking remainder, so late clusters may be small in
    absolute terms. Centers are chosen by largest cap, ties to the
    smallest index.

    Returns (clusters, remainder) where clusters is a list of
    (center_index, member_indices) into X and remainder is an index array
    holding everything not peeled. Every point lands in exactly one place.
    """
    if not 0 < tau <= 1:
        raise DataError("tau must lie in (0, 1]")
    if eps <= 0 or eps >= math.sqrt(2.0):
        raise DataError("eps must lie in (0, sqrt(2))")
    X = np.asarray(X, dtype=np.float64)
    _check_unit_rows(X)
    h = cap_offset(eps)
    remaining = np.arange(X.shape[0])
    clusters = []
    while remaining.size:
        pts = X[remaining]
        gram = pts @ pts.T
        counts = (gram >= h - 1e-12).sum(axis=1)
        best = int(np.argmax(counts))
        need = tau * remaining.size
        if counts[best] < need:
            break
        members_local = np.flatnonzero(gram[best] >= h - 1e-12)
        clusters.append((int(remaining[best]), remaining[members_local]))
        keep = np.ones(remaining.size, dtype=bool)
        keep[members_local] = False
        remaining = remaining[keep]
    return clusters, remaining


def recenter_cluster(u: np.ndarray, members: np.ndarray, eps: float):
    """Certified smaller enclosing ball for a peeled cap.

    Members of B(u, sqrt(2) - eps) on the sphere satisfy <x, u> >= h with
    h = sqrt(2) eps - eps^2 / 2, hence lie within sqrt(1 - h^2) of h u.
    Verifies the containment for every member and returns
    (h * u, sqrt(1 - h^2)).
    """
    h = cap_offset(eps)
    center = h * np.asarray(u, dtype=np.float64)
    radius = math.sqrt(1.0 - h * h)
    dists = np.linalg.norm(np.asarray(members, dtype=np.float64) - center[None, :], axis=1)
    if np.any(dists > radius + 1e-9):
        raise DataError("cluster member escapes the certified ball; eps too large for this cap")
    return center, radius


@dataclass
class DdParams:
    eps: Optional[float] = None
    tau: Optional[float] = None
    n0: int = 64
    depth_max: int = 40
    eta: float = 1.5

    def resolved(self, n: int) -> "DdParams":
        return DdParams(
            eps=self.eps if self.eps is not None else default_eps(n),
            tau=self.tau if self.tau is not None else default_tau(n),
            n0=self.n0, depth_max=self.depth_max, eta=self.eta)


@dataclass
class Leaf:
    indices: np.ndarray


@dataclass
class ClusterChild:
    center: np.ndarray
    offset: float
    radius: float
    child: object


@dataclass
class ClusterNode:
    children: list
    remainder: object


@dataclass
class SplitNode:
    hasher: _SphericalHasher
    children: dict


@dataclass
class BuildReport:
    levels: dict = field(default_factory=dict)
    forced_leaves: int = 0
    degenerate_leaves: int = 0
    max_depth: int = 0
    cluster_count: int = 0
    split_count: int = 0

    def bump(self, depth: int, kind: str):
        self.max_depth = max(self.max_depth, depth)
        self.levels.setdefault(depth, {"cluster": 0, "split": 0, "leaf": 0})
        self.levels[depth][kind] += 1


class DdTree:
    """The partition tree plus everything needed to route queries."""

    def __init__(self, dataset: core.Dataset, params: DdParams, seed: int):
        if dataset.metric.kind != "l2":
            raise DataError("tree requires an l2 dataset")
        _check_unit_rows(dataset.points)
        self.dataset = dataset
        self.params = params.resolved(dataset.n)
        self.seed = seed
        self.report = BuildReport()
        self._node_counter = 0
        self.root = self._build(dataset.points, np.arange(dataset.n), 0)

    # -- construction ------------------------------------------------------

    def _build(self, X, gidx, depth):
        p = self.params
        if gidx.size <= p.n0 or depth >= p.depth_max or _degenerate(X):
            if depth >= p.depth_max:
                self.report.forced_leaves += 1
            if _degenerate(X) and gidx.size > p.n0:
                self.report.degenerate_leaves += 1
            self.report.bump(depth, "leaf")
            return Leaf(gidx)
        clusters, rem = extract_clusters(X, p.eps, p.tau)
        if clusters:
            self.report.bump(depth, "cluster")
            self.report.cluster_count += len(clusters)
            children = []
            for center_i, members in clusters:
                u = X[center_i]
                center, radius = recenter_cluster(u, X[members], p.eps)
                Y = _reproject(X[members], u, cap_offset(p.eps))
                child = self._build(Y, gidx[members], depth + 1)
                children.append(ClusterChild(u, cap_offset(p.eps), radius, child))
            remainder = None
            if rem.size:
                remainder = self._split(X[rem], gidx[rem], depth)
            return ClusterNode(children, remainder)
        return self._split(X, gidx, depth)

    def _split(self, X, gidx, depth):
        p = self.params
        if gidx.size <= p.n0 or depth >= p.depth_max:
            if depth >= p.depth_max and gidx.size > p.n0:
                self.report.forced_leaves += 1
            self.report.bump(depth, "leaf")
            return Leaf(gidx)
        self._node_counter += 1
        t_max = math.ceil(40.0 * math.exp(p.eta * p.eta / 2.0))
        hasher = _SphericalHasher(
            X.shape[1], p.eta, t_max,
            child_seed(self.seed, f"ddpart/split/{self._node_counter}") & ((1 << 62) - 1))
        vals = hasher.hash_many(X)
        buckets = {}
        for v in np.unique(vals):
            buckets[int(v)] = np.flatnonzero(vals == v)
        if len(buckets) <= 1:
            self.report.bump(depth, "leaf")
            return Leaf(gidx)
        self.report.bump(depth, "split")
        self.report.split_count += 1
        children = {
            v: self._build(X[idx], gidx[idx], depth + 1) for v, idx in buckets.items()
        }
        return SplitNode(hasher, children)

    # -- queries -----------------------------------------------------------

    def query(self, q: np.ndarray, c: float, r: float):
        """First point found at distance <= c r from q in the original
        space, plus the number of leaf candidates examined."""
        q = np.asarray(q, dtype=np.float64)
        _check_unit_rows(q[None, :])
        counter = {"candidates": 0}
        idx = self._query(self.root, q, q, c * r, counter)
        return idx, counter["candidates"]

    def _query(self, node, q_local, q_orig, cr, counter):
        if isinstance(node, Leaf):
            if node.indices.size == 0:
                return None
            dists = core.distances_to(self.dataset.metric,
                                      self.dataset.points[node.indices], q_orig)
            counter["candidates"] += node.indices.size
            best = int(np.argmin(dists))
            if dists[best] <= cr:
                return int(node.indices[best])
            return None
        if isinstance(node, ClusterNode):
            for cc in node.children:
                shifted = q_local - cc.offset * cc.center
                norm = np.linalg.norm(shifted)
                q_child = shifted / norm if norm > 1e-12 else cc.center
                got = self._query(cc.child, q_child, q_orig, cr, counter)
                if got is not None:
                    return got
            if node.remainder is not None:
                return self._query(node.remainder, q_local, q_orig, cr, counter)
            return None
        # split node: descend the single bucket the query lands in
        v = int(node.hasher(q_local))
        child = node.children.get(v)
        if child is None:
            return None
        return self._query(child, q_local, q_orig, cr, counter)


def _degenerate(X) -> bool:
    return bool(np.all(np.ptp(X, axis=0) < 1e-12))


def _reproject(members: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """Shift a peeled cap to its certified center and push back onto the sphere."""
    shifted = members - h * u[None, :]
    norms = np.linalg.norm(shifted, axis=1, keepdims=True)
    out = np.where(norms > 1e-12, shifted / np.maximum(norms, 1e-300), u[None, :])
    return out


def dd_build(dataset: core.Dataset, params: Optional[DdParams] = None, seed: int = 0) -> DdTree:
    return DdTree(dataset, params or DdParams(), seed)


def lift_to_sphere(X: np.ndarray, queries: Optional[np.ndarray] = None):
    """Map an arbitrary l2 instance onto the unit sphere.

    Points are centered, scaled into the unit ball, and lifted with an
    extra coordinate sqrt(1 - ||z||^2). Lifted distances never shrink
    below (original distance) / scale; they can stretch for points near
    the rim, which only costs recall since answers are verified in the
    original space.

    Returns (lifted points, lifted queries or None, scale).
    """
    X = np.asarray(X, dtype=np.float64)
    center = X.mean(axis=0)
    Z = X - center
    norms = np.linalg.norm(Z, axis=1)
    scale = float(norms.max())
    if queries is not None:
        qn = np.linalg.norm(np.asarray(queries, dtype=np.float64) - center, axis=1)
        scale = max(scale, float(qn.max()))
    scale = scale * (1.0 + 1e-9) if scale > 0 else 1.0
    def lift(rows):
        z = (np.asarray(rows, dtype=np.float64) - center) / scale
        extra = np.sqrt(np.maximum(0.0, 1.0 - np.einsum("ij,ij->i", z, z)))
        return np.hstack([z, extra[:, None]])
    lifted_q = lift(queries) if queries is not None else None
    return lift(X), lifted_q, scale


# ---------------------------------------------------------------------------
# Query/space trade-off frontier


def _check_c(c: float):
    if c <= 1:
        raise DataError("c must exceed 1")


def tradeoff_rho_q(c: float, rho_s: float) -> float:
    """Query exponent on the frontier at space exponent rho_s (clamped at 0)."""
    _check_c(c)
    if rho_s < 0:
        raise DataError("rho_s must be nonnegative")
    bracket = math.sqrt(2 * c * c - 1) - (c * c - 1) * math.sqrt(rho_s)
    return (bracket / (c * c)) ** 2 if bracket > 0 else 0.0


def tradeoff_rho_s(c: float, rho_q: float) -> float:
    """Space exponent on the frontier at query exponent rho_q (clamped at 0)."""
    _check_c(c)
    if rho_q < 0:
        raise DataError("rho_q must be nonnegative")
    bracket = math.sqrt(2 * c * c - 1) - c * c * math.sqrt(rho_q)
    return (bracket / (c * c - 1)) ** 2 if bracket > 0 else 0.0


def tradeoff_feasible(c: float, rho_q: float, rho_s: float, slack: float = 1e-12) -> bool:
    """Whether (rho_q, rho_s) lies on or above the frontier."""
    _check_c(c)
    lhs = c * c * math.sqrt(max(rho_q, 0.0)) + (c * c - 1) * math.sqrt(max(rho_s, 0.0))
    return lhs >= math.sqrt(2 * c * c - 1) - slack


def tradeoff_regimes(c: float) -> dict:
    """The three named operating points: near-linear space, balanced, fast
    queries. Total space grows as n^(1 + rho_s)."""
    _check_c(c)
    balanced = 1.0 / (2 * c * c - 1)
    fast_rho_s = (2 * c * c - 1) / (c * c - 1) ** 2
    return {
        "near_linear_space": {"rho_s": 0.0, "rho_q": 2.0 / c ** 2 - 1.0 / c ** 4},
        "balanced": {"rho_s": balanced, "rho_q": balanced},
        "fast_queries": {"rho_s": fast_rho_s, "rho_q": 0.0,
                         "space_exponent": 1.0 + fast_rho_s},
    }


def tradeoff_frontier(c: float, num: int = 50):
    """num frontier samples (rho_s, rho_q) satisfying the equality."""
    _check_c(c)
    rho_s_max = tradeoff_rho_s(c, 0.0)
    out = []
    for t in np.linspace(0.0, 1.0, num):
        rho_s = t * rho_s_max
        out.append((float(rho_s), tradeoff_rho_q(c, float(rho_s))))
    return out
