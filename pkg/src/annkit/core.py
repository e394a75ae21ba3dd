"""Metric kernels, packed bit vectors, and exhaustive-search baselines.

Dense points are float64 arrays of shape (d,). Binary points are packed
64 bits per uint64 word, LSB first within each word, so a vector of
dimension d occupies ceil(d/64) words with unused high bits zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DataError

WORD_BITS = 64


# ---------------------------------------------------------------------------
# Packed bit vectors


def words_needed(d: int) -> int:
    return (d + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (n, d) or (d,) array of {0,1} into uint64 words, LSB first."""
    bits = np.asarray(bits)
    single = bits.ndim == 1
    if single:
        bits = bits[None, :]
    n, d = bits.shape
    if d == 0:
        raise DataError("bit vectors must have dimension >= 1")
    if not np.isin(bits, (0, 1)).all():
        raise DataError("bit vectors may only contain 0 and 1")
    w = words_needed(d)
    packed = np.zeros((n, w), dtype=np.uint64)
    shifts = (np.arange(d) % WORD_BITS).astype(np.uint64)
    words = np.arange(d) // WORD_BITS
    vals = bits.astype(np.uint64) << shifts[None, :]
    for j in range(w):
        packed[:, j] = np.bitwise_or.reduce(vals[:, words == j], axis=1)
    return packed[0] if single else packed


def unpack_bits(packed: np.ndarray, d: int) -> np.ndarray:
    """Inverse of pack_bits; returns uint8 {0,1} of shape (..., d)."""
    packed = np.asarray(packed, dtype=np.uint64)
    single = packed.ndim == 1
    if single:
        packed = packed[None, :]
    shifts = (np.arange(d) % WORD_BITS).astype(np.uint64)
    words = np.arange(d) // WORD_BITS
    bits = ((packed[:, words] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    return bits[0] if single else bits


def random_bits(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n random packed bit vectors of dimension d."""
    return pack_bits(rng.integers(0, 2, size=(n, d), dtype=np.uint8))


def popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words)


def hamming_distance(x: np.ndarray, y: np.ndarray) -> int:
    """Number of differing bits between two packed vectors."""
    return int(popcount(np.bitwise_xor(x, y)).sum())


def hamming_distances(X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamming distance from each packed row of X to packed vector q."""
    return popcount(np.bitwise_xor(X, q[None, :])).sum(axis=1)


def get_bit(packed: np.ndarray, j: int) -> int:
    return int((packed[j // WORD_BITS] >> np.uint64(j % WORD_BITS)) & np.uint64(1))


def get_bit_column(packed: np.ndarray, j: int) -> np.ndarray:
    """Bit j of every packed row, as a uint64 array of 0/1."""
    return (packed[:, j // WORD_BITS] >> np.uint64(j % WORD_BITS)) & np.uint64(1)


# ---------------------------------------------------------------------------
# Orlicz functions and norms


def _safe_eval(fn: Callable[[float], float], t: float) -> float:
    """Evaluate a gauge, mapping float overflow to +inf."""
    try:
        return float(fn(t))
    except OverflowError:
        return math.inf


class OrliczFunction:
    """A convex, increasing function psi with psi(0) = 0, used as a norm gauge.

    The constructor spot-checks monotonicity and convexity on a geometric
    grid and rejects functions that fail, since a bad gauge makes the norm
    below meaningless.
    """

    def __init__(self, fn: Callable[[float], float], name: str = "psi"):
        self.fn = fn
        self.name = name
        if abs(float(fn(0.0))) > 1e-12:
            raise DataError(f"{name}(0) must be 0")
        grid = np.concatenate([[0.0], np.geomspace(1e-6, 50.0, 40)])
        vals = np.array([_safe_eval(fn, t) for t in grid])
        if np.any(np.isnan(vals)) or np.any(np.diff(vals) < -1e-12):
            raise DataError(f"{name} must be non-decreasing")
        # convexity on a uniform grid: midpoint value below chord
        ugrid = np.linspace(0.0, 8.0, 33)
        uvals = np.array([float(fn(t)) for t in ugrid])
        chords = (uvals[:-2] + uvals[2:]) / 2.0
        if np.any(uvals[1:-1] > chords + 1e-9 * (1.0 + np.abs(chords))):
            raise DataError(f"{name} must be convex")
        if vals[-1] <= 0:
            raise DataError(f"{name} must be strictly positive somewhere")

    def __call__(self, t):
        return self.fn(t)

    def inverse(self, y: float, tol: float = 1e-12) -> float:
        """Smallest t with psi(t) >= y, by bracketed bisection."""
        if y < 0:
            raise DataError("inverse requires y >= 0")
        if y == 0:
            return 0.0
        hi = 1.0
        for _ in range(200):
            if _safe_eval(self.fn, hi) >= y:
                break
            hi *= 2.0
        else:
            raise DataError(f"{self.name} never reaches {y}")
        lo = 0.0
        while hi - lo > tol * max(1.0, hi):
            mid = (lo + hi) / 2.0
            if _safe_eval(self.fn, mid) >= y:
                hi = mid
            else:
                lo = mid
        return hi

    def __repr__(self):
        return f"OrliczFunction({self.name})"


def orlicz_norm(psi: OrliczFunction, x: np.ndarray, tol: float = 1e-10) -> float:
    """Luxemburg-style norm: the lambda with sum_i psi(|x_i| / lambda) = 1.

    Returns 0.0 exactly for the zero vector. The defining sum is strictly
    decreasing in lambda, so bracketed bisection converges; iteration stops
    once the sum is within tol of 1 or the bracket is relatively tighter
    than tol.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DataError("orlicz_norm expects a nonempty 1-d vector")
    if not np.isfinite(x).all():
        raise DataError("orlicz_norm rejects NaN/Inf coordinates")
    a = np.abs(x)
    if not a.any():
        return 0.0

    def total(lam: float) -> float:
        return float(np.sum([_safe_eval(psi, v / lam) for v in a]))

    lo = hi = max(float(a.max()), 1e-300)
    if total(hi) > 1.0:
        while total(hi) > 1.0:
            hi *= 2.0
        lo = hi / 2.0
    else:
        while total(lo) <= 1.0 and lo > 1e-280:
            lo /= 2.0
    # invariant: total(lo) > 1 >= total(hi) within bracket
    for _ in range(200):
        mid = (lo + hi) / 2.0
        s = total(mid)
        if abs(s - 1.0) <= tol:
            return mid
        if s > 1.0:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= tol * hi:
            break
    return (lo + hi) / 2.0


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class Metric:
    """A distance kind plus its parameters.

    kind is one of "hamming", "l1", "l2", "lp", "linf", "orlicz", "topk".
    """

    kind: str
    p: Optional[float] = None
    psi: Optional[OrliczFunction] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind == "lp":
            if self.p is None or self.p < 1:
                raise DataError("lp metric requires p >= 1")
        elif self.kind == "orlicz":
            if self.psi is None:
                raise DataError("orlicz metric requires a gauge function")
        elif self.kind == "topk":
            if self.k is None or self.k < 1:
                raise DataError("topk metric requires k >= 1")
        elif self.kind not in ("hamming", "l1", "l2", "linf"):
            raise DataError(f"unknown metric kind {self.kind!r}")

    @property
    def binary(self) -> bool:
        return self.kind == "hamming"

    def label(self) -> str:
        if self.kind == "lp":
            return f"lp:{self.p:g}"
        if self.kind == "topk":
            return f"topk:{self.k}"
        if self.kind == "orlicz":
            return f"orlicz:{self.psi.name}"
        return self.kind


HAMMING = Metric("hamming")
L1 = Metric("l1")
L2 = Metric("l2")
LINF = Metric("linf")


def lp(p: float) -> Metric:
    return Metric("lp", p=float(p))


def orlicz(psi: OrliczFunction) -> Metric:
    return Metric("orlicz", psi=psi)


def topk(k: int) -> Metric:
    return Metric("topk", k=int(k))


def _check_dense(x: np.ndarray, kind: str) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype == np.uint64:
        raise DataError(f"{kind} metric expects dense float vectors, got packed bits")
    return x.astype(np.float64, copy=False)


def distance(metric: Metric, x: np.ndarray, y: np.ndarray) -> float:
    """Distance between two points under metric. Representation must match."""
    if metric.kind == "hamming":
        x = np.asarray(x)
        y = np.asarray(y)
        if x.dtype != np.uint64 or y.dtype != np.uint64:
            raise DataError("hamming metric expects packed uint64 bit vectors")
        return float(hamming_distance(x, y))
    x = _check_dense(x, metric.kind)
    y = _check_dense(y, metric.kind)
    if x.shape != y.shape:
        raise DataError("dimension mismatch")
    diff = x - y
    if metric.kind == "l2":
        return float(np.sqrt(np.dot(diff, diff)))
    if metric.kind == "l1":
        return float(np.abs(diff).sum())
    if metric.kind == "linf":
        return float(np.abs(diff).max())
    if metric.kind == "lp":
        return float((np.abs(diff) ** metric.p).sum() ** (1.0 / metric.p))
    if metric.kind == "topk":
        k = metric.k
        if k > diff.size:
            raise DataError("topk k exceeds dimension")
        a = np.abs(diff)
        if k == diff.size:
            return float(a.sum())
        return float(np.partition(a, a.size - k)[a.size - k:].sum())
    if metric.kind == "orlicz":
        return orlicz_norm(metric.psi, diff)
    raise DataError(f"unknown metric kind {metric.kind!r}")


def distances_to(metric: Metric, X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distance from every row of X to q. Vectorized where possible."""
    if metric.kind == "hamming":
        return hamming_distances(X, q).astype(np.float64)
    X = _check_dense(X, metric.kind)
    q = _check_dense(q, metric.kind)
    diff = X - q[None, :]
    if metric.kind == "l2":
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if metric.kind == "l1":
        return np.abs(diff).sum(axis=1)
    if metric.kind == "linf":
        return np.abs(diff).max(axis=1)
    if metric.kind == "lp":
        return (np.abs(diff) ** metric.p).sum(axis=1) ** (1.0 / metric.p)
    if metric.kind == "topk":
        k = metric.k
        a = np.abs(diff)
        if k > a.shape[1]:
            raise DataError("topk k exceeds dimension")
        if k == a.shape[1]:
            return a.sum(axis=1)
        part = np.partition(a, a.shape[1] - k, axis=1)
        return part[:, a.shape[1] - k:].sum(axis=1)
    return np.array([distance(metric, row, q) for row in X])


# ---------------------------------------------------------------------------
# Datasets and exhaustive baselines


@dataclass(frozen=True)
class Dataset:
    """A point set with its metric.

    points: (n, d) float64 for dense metrics, (n, words) uint64 for hamming.
    dim is the logical dimension d in both cases.
    """

    points: np.ndarray
    metric: Metric
    dim: int

    def __post_init__(self):
        pts = self.points
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DataError("dataset must contain at least one point")
        if self.dim < 1:
            raise DataError("dimension must be >= 1")
        if self.metric.binary:
            if pts.dtype != np.uint64:
                raise DataError("hamming dataset must hold packed uint64 rows")
            if pts.shape[1] != words_needed(self.dim):
                raise DataError("packed width inconsistent with dimension")
        else:
            if pts.dtype != np.float64:
                raise DataError("dense dataset must hold float64 rows")
            if pts.shape[1] != self.dim:
                raise DataError("point width inconsistent with dimension")
            if not np.isfinite(pts).all():
                raise DataError("dataset rejects NaN/Inf coordinates")
        if self.metric.kind == "topk" and self.metric.k > self.dim:
            raise DataError("topk k exceeds dataset dimension")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def point(self, i: int) -> np.ndarray:
        return self.points[i]


def dense_dataset(points: np.ndarray, metric: Metric) -> Dataset:
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    return Dataset(pts, metric, pts.shape[1])


def bit_dataset(packed: np.ndarray, dim: int) -> Dataset:
    return Dataset(np.ascontiguousarray(packed, dtype=np.uint64), HAMMING, dim)


def brute_force_nn(dataset: Dataset, q: np.ndarray) -> tuple[int, float]:
    """Exact nearest neighbor; ties break to the smallest index."""
    dists = distances_to(dataset.metric, dataset.points, q)
    idx = int(np.argmin(dists))
    return idx, float(dists[idx])


def brute_force_cp(dataset: Dataset) -> tuple[int, int, float]:
    """Exact closest pair; ties break lexicographically on (i, j)."""
    n = dataset.n
    if n < 2:
        raise DataError("closest pair needs at least two points")
    best = (0, 1, math.inf)
    for i in range(n - 1):
        dists = distances_to(dataset.metric, dataset.points[i + 1:], dataset.points[i])
        j_rel = int(np.argmin(dists))
        d = float(dists[j_rel])
        if d < best[2]:
            best = (i, i + 1 + j_rel, d)
    return best
