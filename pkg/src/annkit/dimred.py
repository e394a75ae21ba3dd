"""Randomized dimension reduction and the small dictionary indexes built on it.

Two maps: a scaled Gaussian projection for Euclidean inputs and a random
GF(2) linear map for Hamming inputs. On top of them, two exact-lookup
structures for the decision version of near neighbor search: a dictionary
of grid cells in the projected Euclidean space, and a complete table over
the projected Hamming cube.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .errors import BudgetError, DataError
from .seeds import stream


class GaussianProjection:
    """Linear map x -> (1/sqrt(k)) A x with i.i.d. standard Gaussian A.

    The scaling makes the map norm-preserving in expectation:
    E ||f(x)||^2 = ||x||^2. Distortion beyond a factor (1 +- eps) on a unit
    direction happens with probability at most exp(-C eps^2 k) for a
    dimension-free constant C.
    """

    def __init__(self, d: int, k: int, seed: int):
        if d < 1 or k < 1:
            raise DataError("projection needs d >= 1 and k >= 1")
        self.d = d
        self.k = k
        self.seed = seed
        rng = stream(seed, "dimred/gaussian")
        self.matrix = rng.standard_normal((k, d))
        self._scale = 1.0 / np.sqrt(k)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise DataError("input dimension mismatch")
        return self._scale * (x @ self.matrix.T)


class BinaryProjection:
    """GF(2) linear map f(x) = A x mod 2 with A_ij ~ Bernoulli(p), p = 1/(2r).

    Input and output are packed bit vectors. For inputs at Hamming distance
    h, each output coordinate disagrees independently with probability
    q(h) = (1 - (1 - 2p)^h) / 2, which is increasing in h, so thresholding
    the output distance separates distance r from distance (1+eps) r.
    """

    def __init__(self, d: int, k: int, r: float, seed: int):
        if d < 1 or k < 1:
            raise DataError("projection needs d >= 1 and k >= 1")
        if not 0.5 <= r < d:
            raise DataError("requires 0.5 <= r < d so the sampling rate 1/(2r) is a probability")
        self.d = d
        self.k = k
        self.r = float(r)
        self.p = 1.0 / (2.0 * self.r)
        self.seed = seed
        rng = stream(seed, "dimred/gf2")
        rows = (rng.random((k, d)) < self.p).astype(np.uint8)
        self.rows = core.pack_bits(rows)
        if self.rows.ndim == 1:
            self.rows = self.rows[None, :]

    def disagree_rate(self, h: float) -> float:
        """Per-coordinate disagreement probability at input distance h."""
        return (1.0 - (1.0 - 2.0 * self.p) ** h) / 2.0

    def decision_threshold(self, eps: float) -> float:
        """Midpoint output-distance threshold separating r from (1+eps) r."""
        return self.k * (self.disagree_rate(self.r) + self.disagree_rate((1.0 + eps) * self.r)) / 2.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Project one packed vector; returns a packed vector of k bits."""
        parity = (core.popcount(self.rows & x[None, :]).sum(axis=1) & 1).astype(np.uint8)
        return core.pack_bits(parity)

    def apply_many(self, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Project packed rows of X; returns packed rows of k bits."""
        out = np.empty((X.shape[0], core.words_needed(self.k)), dtype=np.uint64)
        for lo in range(0, X.shape[0], chunk):
            block = X[lo:lo + chunk]
            counts = core.popcount(block[:, None, :] & self.rows[None, :, :]).sum(axis=2)
            out[lo:lo + chunk] = core.pack_bits((counts & 1).astype(np.uint8))
        return out


# ---------------------------------------------------------------------------
# Grid-cell dictionary over the Gaussian projection


def _cell_min_sqdist(cell: np.ndarray, center: np.ndarray, side: float) -> float:
    """Squared distance from center to the axis-aligned cube of this cell."""
    lo = cell * side
    gap = np.maximum(0.0, np.maximum(lo - center, center - (lo + side)))
    return float(np.dot(gap, gap))


class CubeDictionary:
    """Dictionary of grid cells covering shrunken balls around projected points.

    Projects to k dimensions, overlays a grid of cubes with side
    eps * r / sqrt(k) (so each cube has diameter eps * r), and stores every
    cube whose minimum distance to some projected point is at most
    r (1 + eps). A query returns the stored representative of the cube its
    projection lands in, giving the guarantee
    ||f(q) - f(p)|| <= r (1 + 2 eps) for any returned p.
    """

    def __init__(self, dataset: core.Dataset, r: float, eps: float, k: int,
                 seed: int, cell_budget: int = 2_000_000):
        if dataset.metric.kind != "l2":
            raise DataError("cube dictionary requires an l2 dataset")
        if r <= 0 or eps <= 0:
            raise DataError("requires r > 0 and eps > 0")
        self.r = float(r)
        self.eps = float(eps)
        self.k = k
        self.projection = GaussianProjection(dataset.dim, k, seed)
        self.side = eps * r / np.sqrt(k)
        self.radius = r * (1.0 + eps)
        self.table: dict[tuple, int] = {}
        self.dataset = dataset
        embedded = self.projection.apply(dataset.points)
        budget = cell_budget
        rad2 = self.radius ** 2
        for idx in range(dataset.n):
            center = embedded[idx]
            start = tuple(np.floor(center / self.side).astype(np.int64))
            seen = {start}
            queue = deque([np.array(start, dtype=np.int64)])
            while queue:
                cell = queue.popleft()
                if _cell_min_sqdist(cell, center, self.side) > rad2:
                    continue
                key = tuple(int(v) for v in cell)
                # first generating point wins, matching scan order
                if key not in self.table:
                    self.table[key] = idx
                    budget -= 1
                    if budget < 0:
                        raise BudgetError(
                            f"cube dictionary exceeded cell budget {cell_budget}")
                for axis in range(self.k):
                    for step in (-1, 1):
                        nxt = cell.copy()
                        nxt[axis] += step
                        tup = tuple(int(v) for v in nxt)
                        if tup not in seen:
                            seen.add(tup)
                            queue.append(nxt)

    def cell_of(self, q: np.ndarray) -> tuple:
        f = self.projection.apply(np.asarray(q, dtype=np.float64))
        return tuple(np.floor(f / self.side).astype(np.int64).tolist())

    def query(self, q: np.ndarray) -> Optional[int]:
        """Index of a stored point whose shrunken ball's cube covers f(q), or None."""
        return self.table.get(self.cell_of(q))

    def __len__(self):
        return len(self.table)


# ---------------------------------------------------------------------------
# Complete lookup table over the projected Hamming cube


@dataclass
class HammingLookup:
    """Precomputed answers for every point of the k-bit cube.

    Built by a multi-source breadth-first search from the projected data
    points, so entry z holds a data point whose projection is closest to z
    in Hamming distance (ties are broken deterministically). Memory is
    2^k entries; k is capped to keep that explicit.
    """

    projection: BinaryProjection
    owner: np.ndarray
    dist: np.ndarray
    threshold: Optional[float]

    @classmethod
    def build(cls, dataset: core.Dataset, r: float, eps: float, k: int, seed: int,
              k_max: int = 24, threshold: Optional[float] = "auto") -> "HammingLookup":
        if dataset.metric.kind != "hamming":
            raise DataError("hamming lookup requires a hamming dataset")
        if k > k_max:
            raise BudgetError(f"table of 2^{k} entries exceeds k_max={k_max}")
        proj = BinaryProjection(dataset.dim, k, r, seed)
        codes = _packed_to_ints(proj.apply_many(dataset.points), k)
        size = 1 << k
        owner = np.full(size, -1, dtype=np.int64)
        dist = np.full(size, np.iinfo(np.int32).max, dtype=np.int32)
        # seed sources in index order so the first point wins duplicate cells
        frontier = []
        for idx, z in enumerate(codes):
            z = int(z)
            if owner[z] < 0:
                owner[z] = idx
                dist[z] = 0
                frontier.append(z)
        frontier = np.array(frontier, dtype=np.int64)
        flips = np.array([1 << b for b in range(k)], dtype=np.int64)
        layer = 0
        while frontier.size:
            layer += 1
            cand = (frontier[:, None] ^ flips[None, :]).ravel()
            src = np.repeat(np.arange(frontier.size), k)
            fresh = dist[cand] > layer
            cand = cand[fresh]
            src = src[fresh]
            # keep the first occurrence of each cell, i.e. the earliest source
            uniq, first = np.unique(cand, return_index=True)
            owner[uniq] = owner[frontier[src[first]]]
            dist[uniq] = layer
            frontier = uniq
        thr = proj.decision_threshold(eps) if threshold == "auto" else threshold
        return cls(proj, owner, dist, thr)

    def query(self, q: np.ndarray) -> Optional[int]:
        """Table answer for q, or None when the best projected match is
        farther than the decision threshold."""
        z = int(_packed_to_ints(self.projection.apply(q)[None, :], self.projection.k)[0])
        if self.threshold is not None and self.dist[z] > self.threshold:
            return None
        return int(self.owner[z])

    def lookup(self, q: np.ndarray) -> tuple[int, int]:
        """(owner, projected distance) for q regardless of threshold."""
        z = int(_packed_to_ints(self.projection.apply(q)[None, :], self.projection.k)[0])
        return int(self.owner[z]), int(self.dist[z])


def _packed_to_ints(packed: np.ndarray, k: int) -> np.ndarray:
    """Packed rows of <= 64 bits as plain integers."""
    if k > 64:
        raise DataError("integer codes supported only for k <= 64")
    return packed[:, 0].astype(np.int64)
