"""Generic locality-sensitive hashing: families, tensoring, and the index.

A family is (r, cr, p1, p2)-sensitive for its metric: points within r
collide with probability at least p1, points beyond cr collide with
probability at most p2. The index concatenates k draws per table to push
p2 down and repeats over L tables to recover recall; any returned point is
hard-verified to lie within cr of the query.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .errors import DataError
from .seeds import stream

_MIX_INIT = np.uint64(0x9E3779B97F4A7C15)
_MIX_MUL1 = np.uint64(0xFF51AFD7ED558CCD)
_MIX_MUL2 = np.uint64(0xC4CEB9FE1A85EC53)


class Hasher(ABC):
    """One sampled hash function. Output is an integer bucket id."""

    @abstractmethod
    def __call__(self, x) -> int:
        ...

    def hash_many(self, X) -> np.ndarray:
        return np.array([self(row) for row in X], dtype=np.int64)


class LshFamily(ABC):
    """Declares (r, cr, p1, p2) sensitivity and samples hash functions."""

    metric: core.Metric
    r: float
    c: float
    p1: float
    p2: float

    def _validate(self):
        if self.r <= 0 or self.c <= 1:
            raise DataError("family requires r > 0 and c > 1")
        if not (0.0 < self.p2 < self.p1 <= 1.0):
            raise DataError(
                f"sensitivity must satisfy 0 < p2 < p1 <= 1, got p1={self.p1}, p2={self.p2}")

    @property
    def cr(self) -> float:
        return self.c * self.r

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> Hasher:
        ...


def rho(family: LshFamily) -> float:
    """Query exponent log(1/p1) / log(1/p2) of a family."""
    return math.log(1.0 / family.p1) / math.log(1.0 / family.p2)


class _TupleHasher(Hasher):
    def __init__(self, parts):
        self.parts = parts

    def __call__(self, x):
        return tuple(h(x) for h in self.parts)

    def hash_many(self, X):
        cols = [h.hash_many(X) for h in self.parts]
        return np.stack(cols, axis=1)


class TensoredFamily(LshFamily):
    """k-fold concatenation: sensitivity (r, cr, p1^k, p2^k), same rho."""

    def __init__(self, base: LshFamily, k: int):
        if k < 1:
            raise DataError("tensoring requires k >= 1")
        self.base = base
        self.k = k
        self.metric = base.metric
        self.r = base.r
        self.c = base.c
        self.p1 = base.p1 ** k
        self.p2 = base.p2 ** k
        self._validate()

    def sample(self, rng):
        return _TupleHasher([self.base.sample(rng) for _ in range(self.k)])


def tensor(family: LshFamily, k: int) -> TensoredFamily:
    return TensoredFamily(family, k)


def choose_params(n: int, family: LshFamily, c_rep: float = 2.0) -> tuple[int, int]:
    """(k, L) for n points: k = ceil(log_{1/p2} n), L = ceil(c_rep / p1^k)."""
    if n < 1:
        raise DataError("n must be >= 1")
    k = math.ceil(math.log(n) / math.log(1.0 / family.p2)) if n > 1 else 0
    L = math.ceil(c_rep / family.p1 ** k)
    return k, L


def estimate_collision(family: LshFamily, x, y, trials: int, seed: int) -> float:
    """Monte Carlo collision probability of x and y over fresh draws."""
    if trials < 1:
        raise DataError("trials must be >= 1")
    rng = stream(seed, "lsh/collision")
    hits = 0
    for _ in range(trials):
        h = family.sample(rng)
        if h(x) == h(y):
            hits += 1
    return hits / trials


@dataclass
class QueryStats:
    tables_probed: int = 0
    candidates_examined: int = 0
    distance_evals: int = 0


def _mix_rows(H: np.ndarray) -> np.ndarray:
    """Fold an (n, k) array of hash values into 64-bit bucket keys."""
    n = H.shape[0]
    keys = np.full(n, _MIX_INIT, dtype=np.uint64)
    for j in range(H.shape[1]):
        v = H[:, j].astype(np.int64).astype(np.uint64)
        keys = (keys ^ ((v + np.uint64(j + 1)) * _MIX_MUL1)) * _MIX_MUL2
        keys ^= keys >> np.uint64(33)
    return keys


class LshIndex:
    """L hash tables, each keyed by k concatenated draws from the family.

    Bucket keys are the k-tuple folded into 64 bits; key collisions merely
    add candidates and are filtered by the exact distance check. Entries
    within a bucket keep point-index order.
    """

    def __init__(self, dataset: core.Dataset, family: LshFamily, k: int, L: int, seed: int):
        if family.metric.kind != dataset.metric.kind:
            raise DataError("family metric does not match dataset metric")
        if k < 0 or L < 1:
            raise DataError("requires k >= 0 and L >= 1")
        self.dataset = dataset
        self.family = family
        self.k = k
        self.L = L
        self.seed = seed
        self.hashers: list[list[Hasher]] = []
        self.tables: list[dict[int, np.ndarray]] = []
        for i in range(L):
            rng = stream(seed, f"lsh/table/{i}")
            hs = [family.sample(rng) for _ in range(k)]
            self.hashers.append(hs)
            keys = self._keys_for_table(hs, dataset.points)
            order = np.argsort(keys, kind="stable")
            sorted_keys = keys[order]
            boundaries = np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]])
            table = {}
            for b, start in enumerate(boundaries):
                end = boundaries[b + 1] if b + 1 < len(boundaries) else len(order)
                table[int(sorted_keys[start])] = np.sort(order[start:end])
            self.tables.append(table)

    def _keys_for_table(self, hashers, X) -> np.ndarray:
        n = X.shape[0]
        if not hashers:
            return np.zeros(n, dtype=np.uint64)
        H = np.stack([h.hash_many(X) for h in hashers], axis=1)
        return _mix_rows(H)

    def _key_of(self, i: int, q) -> int:
        if not self.hashers[i]:
            return 0
        vals = np.array([[h(q) for h in self.hashers[i]]], dtype=np.int64)
        return int(_mix_rows(vals)[0])

    def _probe(self, i: int, key: int, q, stats: QueryStats, seen: set,
               stop_early: bool) -> Optional[int]:
        """Scan table i's bucket for key; first fresh point within cr."""
        bucket = self.tables[i].get(key)
        if bucket is None:
            return None
        cr = self.family.cr
        hit: Optional[int] = None
        for idx in bucket:
            idx = int(idx)
            stats.candidates_examined += 1
            if idx in seen:
                continue
            seen.add(idx)
            stats.distance_evals += 1
            d = core.distance(self.dataset.metric, q, self.dataset.points[idx])
            if d <= cr and hit is None:
                hit = idx
                if stop_early:
                    return hit
        return hit

    def query(self, q, stop_early: bool = True) -> tuple[Optional[int], QueryStats]:
        """First point within cr across tables, with probe statistics.

        Any returned index is guaranteed to satisfy distance(q, p) <= cr;
        None means no bucket candidate passed that check.
        """
        self._check_query(q)
        stats = QueryStats()
        seen: set[int] = set()
        best: Optional[int] = None
        for i in range(self.L):
            stats.tables_probed += 1
            got = self._probe(i, self._key_of(i, q), q, stats, seen, stop_early)
            if got is not None:
                if stop_early:
                    return got, stats
                if best is None:
                    best = got
        return best, stats

    def query_many(self, Q, stop_early: bool = True) -> list:
        """query() for every row of Q, returning [(index, stats), ...].

        Hashing runs table by table over the whole batch, the same
        vectorized path the build uses, so this is the right entry point
        when the query set is large.
        """
        Q = np.asarray(Q)
        width = (self.dataset.points.shape[1] if self.dataset.metric.binary
                 else self.dataset.dim)
        if Q.ndim != 2 or Q.shape[1] != width:
            raise DataError("query batch does not match the dataset")
        if self.dataset.metric.binary and Q.dtype != np.uint64:
            raise DataError("query representation does not match the dataset")
        keys = [self._keys_for_table(hs, Q) for hs in self.hashers]
        out = []
        for t in range(Q.shape[0]):
            q = Q[t]
            stats = QueryStats()
            seen: set[int] = set()
            best: Optional[int] = None
            for i in range(self.L):
                stats.tables_probed += 1
                got = self._probe(i, int(keys[i][t]), q, stats, seen, stop_early)
                if got is not None:
                    if stop_early:
                        best = got
                        break
                    if best is None:
                        best = got
            out.append((best, stats))
        return out

    def _check_query(self, q):
        q = np.asarray(q)
        if self.dataset.metric.binary:
            if q.dtype != np.uint64 or q.shape != (self.dataset.points.shape[1],):
                raise DataError("query representation does not match the dataset")
        elif q.shape != (self.dataset.dim,):
            raise DataError("query dimension does not match the dataset")


def build_index(dataset: core.Dataset, family: LshFamily, k: int, L: int, seed: int) -> LshIndex:
    return LshIndex(dataset, family, k, L, seed)
