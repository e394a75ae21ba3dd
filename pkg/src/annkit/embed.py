"""Randomized embeddings between metrics.

The workhorse maps a vector x to x / u coordinatewise, where the random
divisors u are drawn once per embedding. With the right divisor law the
sup norm of the image is a scale family in the source norm:

  l1      u ~ Exp(1)          Pr[||x/u||_inf <= t] = exp(-||x||_1 / t)
  lp      u ~ Exp(1)^(1/p)    Pr[... <= t] = exp(-(||x||_p / t)^p)
  orlicz  u with tail e^(-psi) puts the e^(-1) quantile at ||x||_psi
  top-k   Exp(1) truncated at ln(d/k) + 1, sup norm tracks the sum of
          the k largest magnitudes up to a constant factor

Because the map is coordinatewise division it is linear, so differences
embed the same way as points and near-neighbor problems in the source
norm reduce to l_infty ones. The reduction here runs several independent
embeddings, collects candidates from an l_infty tree per embedding, and
verifies every candidate in the source metric, so false positives cost
time but never correctness.

A separate dense Gaussian map sends l2 into l1: with m rows and scale
sqrt(pi/2)/m the image l1 norm is an unbiased, concentrating estimate of
the source l2 norm.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import core
from .errors import DataError
from .linf import LinfTree
from .seeds import child_seed, stream

_TINY = 1e-15


def truncation_point(d: int, k: int) -> float:
    """Divisor cap ln(d/k) + 1 for the top-k norm."""
    if not 1 <= k <= d:
        raise DataError("need 1 <= k <= d")
    return math.log(d / k) + 1.0


def sample_divisors(kind: str, shape, rng: np.random.Generator,
                    p: Optional[float] = None,
                    psi: Optional[core.OrliczFunction] = None,
                    tau: Optional[float] = None) -> np.ndarray:
    """Divisor draws for one of the supported source norms."""
    if kind == "l1":
        return np.maximum(rng.exponential(1.0, size=shape), _TINY)
    if kind == "lp":
        if p is None or p < 1:
            raise DataError("lp divisors need p >= 1")
        return np.maximum(rng.exponential(1.0, size=shape), _TINY) ** (1.0 / p)
    if kind == "orlicz":
        if psi is None:
            raise DataError("orlicz divisors need a gauge function")
        v = np.maximum(rng.random(size=shape), 1e-300)
        flat = np.array([psi.inverse(float(w)) for w in (-np.log(v)).ravel()])
        return np.maximum(flat.reshape(shape), _TINY)
    if kind == "topk":
        if tau is None or tau <= 0:
            raise DataError("topk divisors need a positive truncation point")
        v = rng.random(size=shape)
        return np.maximum(-np.log1p(-v * (1.0 - math.exp(-tau))), _TINY)
    raise DataError(f"unknown divisor kind: {kind}")


class DivisorEmbedding:
    """Coordinatewise division by one fixed draw of divisors.

    The output lives in the same dimension; only the norm that is
    meaningful on it changes (to sup norm).
    """

    def __init__(self, d: int, kind: str, seed: int,
                 p: Optional[float] = None,
                 psi: Optional[core.OrliczFunction] = None,
                 k: Optional[int] = None):
        if d < 1:
            raise DataError("d must be positive")
        self.d = d
        self.kind = kind
        tau = truncation_point(d, k) if kind == "topk" else None
        rng = stream(seed, f"embed/divisor/{kind}")
        self.divisors = sample_divisors(kind, (d,), rng, p=p, psi=psi, tau=tau)
        self.p = p
        self.k = k
        self.tau = tau

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise DataError("input dimension mismatch")
        return x / self.divisors

    def apply_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DataError("input dimension mismatch")
        return X / self.divisors[None, :]

    def embedded_norm(self, x: np.ndarray) -> float:
        return float(np.abs(self.apply(x)).max())


def embed_l1_to_linf(d: int, seed: int) -> DivisorEmbedding:
    return DivisorEmbedding(d, "l1", seed)


def embed_lp_to_linf(d: int, p: float, seed: int) -> DivisorEmbedding:
    return DivisorEmbedding(d, "lp", seed, p=p)


def embed_orlicz_to_linf(d: int, psi: core.OrliczFunction, seed: int) -> DivisorEmbedding:
    return DivisorEmbedding(d, "orlicz", seed, psi=psi)


def embed_topk_to_linf(d: int, k: int, tau_trunc: Optional[float] = None,
                       seed: int = 0) -> DivisorEmbedding:
    emb = DivisorEmbedding(d, "topk", seed, k=k)
    if tau_trunc is not None:
        if tau_trunc <= 0:
            raise DataError("tau_trunc must be positive")
        rng = stream(seed, "embed/divisor/topk")
        emb.tau = float(tau_trunc)
        emb.divisors = sample_divisors("topk", (d,), rng, tau=emb.tau)
    return emb


def estimate_scale(samples: np.ndarray) -> float:
    """Maximum-likelihood scale from i.i.d. embedded sup norms.

    For the l1 divisor law the sup norm v satisfies 1/v ~ Exp(scale), so
    the harmonic mean of the samples is the MLE of ||x||_1.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0 or np.any(samples <= 0):
        raise DataError("need positive samples")
    return samples.size / float(np.sum(1.0 / samples))


class GaussianL1Embedding:
    """l2 -> l1 via a dense Gaussian matrix, scaled so the image l1 norm
    estimates the source l2 norm without bias."""

    def __init__(self, d: int, m: int, seed: int):
        if d < 1 or m < 1:
            raise DataError("d and m must be positive")
        self.d = d
        self.m = m
        rng = stream(seed, "embed/gaussian-l1")
        self.matrix = rng.standard_normal((m, d))
        self.scale = math.sqrt(math.pi / 2.0) / m

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise DataError("input dimension mismatch")
        return self.scale * (self.matrix @ x)

    def apply_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DataError("input dimension mismatch")
        return self.scale * (X @ self.matrix.T)


def embed_l2_to_l1(d: int, m: int, seed: int) -> GaussianL1Embedding:
    return GaussianL1Embedding(d, m, seed)


class AnnL1:
    """Near-neighbor search in l1 through several l_infty reductions.

    Each structure embeds the data with fresh divisors and answers
    queries from its own tree; candidates are always re-checked in l1
    against c * r before being returned, so an answer is never wrong and
    repetitions only push the miss probability down.
    """

    def __init__(self, dataset: core.Dataset, c: float, r: float,
                 m_structs: int = 6, r_embed: Optional[float] = None,
                 eps: float = 1.0, seed: int = 0):
        if dataset.metric.kind != "l1":
            raise DataError("reduction expects an l1 dataset")
        if r <= 0 or c <= 1:
            raise DataError("need r > 0 and c > 1")
        if m_structs < 1:
            raise DataError("need at least one structure")
        self.dataset = dataset
        self.r = float(r)
        self.c = float(c)
        self.r_embed = float(r_embed) if r_embed is not None else 2.0 * r
        self.structs = []
        for i in range(m_structs):
            emb = DivisorEmbedding(dataset.dim, "l1", child_seed(seed, f"embed/struct/{i}"))
            Y = emb.apply_many(dataset.points)
            tree = LinfTree(core.dense_dataset(Y, core.LINF), r=self.r_embed, eps=eps)
            self.structs.append((emb, tree))

    def query(self, q: np.ndarray):
        """(index or None, stats). Any returned index satisfies
        ||x - q||_1 <= c r exactly."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dataset.dim,):
            raise DataError("query dimension mismatch")
        stats = {"structs_probed": 0, "candidates": 0, "distance_evals": 0}
        for emb, tree in self.structs:
            stats["structs_probed"] += 1
            idx, _ = tree.candidates(emb.apply(q))
            stats["candidates"] += int(idx.size)
            if idx.size == 0:
                continue
            dists = core.distances_to(self.dataset.metric, self.dataset.points[idx], q)
            stats["distance_evals"] += int(idx.size)
            best = int(np.argmin(dists))
            if dists[best] <= self.c * self.r:
                return int(idx[best]), stats
        return None, stats


def ann_l1_via_linf(dataset: core.Dataset, c: float, r: float, **kwargs) -> AnnL1:
    return AnnL1(dataset, c, r, **kwargs)
