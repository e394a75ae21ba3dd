"""Closest-pair search: the ANN reduction and sign-aggregated products.

Two routes are implemented. cp_via_ann splits the points into two random
halves, indexes one half, queries the other, and repeats three times, so
a pair within r is found with constant probability while any output pair
is distance-verified. ip_grouped targets the inner-product formulation:
points are permuted into groups, each group is summed with random signs,
and one exact matrix product reveals which pair of groups hides an
outlier inner product; the <= g^2 cross pairs of the two implicated
groups are then scanned exactly, so the output never depends on unproven
noise bounds.

Amplification helpers sharpen weak inner-product gaps before grouping:
tensoring k-th powers turns a gap of c into c^k, and the asymmetric
Chebyshev embedding realizes T_k(<x,y>/scale), which grows like
e^(sqrt(eps) k) just above the background band instead of e^(eps k).
The cp_pipeline driver chains embed -> optional Gaussian compression ->
grouped product -> original-space verification.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import core
from .dimred import GaussianProjection
from .errors import BudgetError, DataError
from .seeds import child_seed, stream


# ---------------------------------------------------------------------------
# exact matrix-product backends (deliberately simple; a fast rectangular
# multiply would slot in behind the same two-argument interface)


class NaiveMatmul:
    name = "naive"

    def multiply(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        if A.shape[1] != B.shape[0]:
            raise DataError("inner dimensions disagree")
        out = np.empty((A.shape[0], B.shape[1]))
        for i in range(A.shape[0]):
            out[i] = A[i] @ B
        return out


class BlockedMatmul:
    name = "blocked"

    def __init__(self, block: int = 64):
        if block < 1:
            raise DataError("block must be positive")
        self.block = block

    def multiply(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        if A.shape[1] != B.shape[0]:
            raise DataError("inner dimensions disagree")
        m, k = A.shape
        p = B.shape[1]
        out = np.zeros((m, p))
        b = self.block
        for i0 in range(0, m, b):
            for k0 in range(0, k, b):
                out[i0:i0 + b] += A[i0:i0 + b, k0:k0 + b] @ B[k0:k0 + b]
        return out


def get_backend(tag: str):
    if tag == "naive":
        return NaiveMatmul()
    if tag == "blocked":
        return BlockedMatmul()
    raise DataError(f"unknown matmul backend: {tag}")


# ---------------------------------------------------------------------------
# planted inner-product instances


@dataclass(frozen=True)
class PlantedIpInstance:
    points: np.ndarray
    pair: tuple
    theta: float
    c: float

    @property
    def n(self) -> int:
        return self.points.shape[0]


def planted_ip_instance(n: int, d: int, theta: float, c: float, seed: int,
                        verify: bool = True) -> PlantedIpInstance:
    """Unit vectors with all background inner products in [-theta, theta]
    and one planted pair at exactly c * theta.

    Construction: perturbed orthonormal directions, which needs d >= n;
    packing n unit vectors into fewer dimensions with max inner product
    below theta quickly becomes impossible (the Welch bound), so the
    dimension requirement is explicit rather than silently violated.
    The instance is verified by an exhaustive Gram scan before use.
    """
    if n < 2:
        raise DataError("need at least two points")
    if d < n:
        raise DataError("construction needs d >= n to keep the background flat")
    if theta <= 0 or not 1 < c or c * theta > 1:
        raise DataError("need theta > 0, c > 1, c * theta <= 1")
    rng = stream(seed, "cpair/ip-instance")
    # background pair inner products are ~ sigma * sqrt(2/d) in rms; pick
    # sigma so the max over all ~n^2/2 pairs stays below theta with margin
    pairs = max(n * (n - 1) // 2, 2)
    target_rms = theta / (math.sqrt(2.0 * math.log(pairs)) + 3.0)
    sigma = min(target_rms * math.sqrt(d / 2.0), 0.6)
    X = np.eye(n, d) + sigma * rng.standard_normal((n, d)) / math.sqrt(d)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    i, j = rng.choice(n, size=2, replace=False)
    i, j = int(min(i, j)), int(max(i, j))
    # rotate x_j to sit at inner product exactly c*theta with x_i
    w = X[j] - (X[j] @ X[i]) * X[i]
    w /= np.linalg.norm(w)
    X[j] = (c * theta) * X[i] + math.sqrt(1.0 - (c * theta) ** 2) * w
    inst = PlantedIpInstance(X, (i, j), float(theta), float(c))
    if verify:
        verify_ip_instance(inst)
    return inst


def verify_ip_instance(inst: PlantedIpInstance):
    """Exhaustive Gram check of the declared invariants."""
    X = inst.points
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise DataError("instance points must be unit vectors")
    G = X @ X.T
    i, j = inst.pair
    if G[i, j] < inst.c * inst.theta - 1e-9:
        raise DataError("planted pair misses its inner-product floor")
    off = np.abs(G - np.diag(np.diag(G)))
    off[i, j] = off[j, i] = 0.0
    if off.max() > inst.theta + 1e-9:
        raise DataError("background inner product exceeds theta")


# ---------------------------------------------------------------------------
# grouped sign aggregation


def sign_aggregate(left: np.ndarray, right: np.ndarray, g: int, seed: int,
                   backend=None):
    """Group rows (zero-padding to a multiple of g), sum each group with
    Rademacher signs, and multiply the aggregates.

    Returns (M, perm, signs) where M[a, b] = <sum of signed left rows in
    group a, sum of signed right rows in group b>, perm is the row
    permutation (padded slots hold -1) and signs the +-1 vector. The same
    permutation and signs apply to both sides, which is what makes the
    planted contribution survive in M with magnitude |<f_i, g_j>|.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise DataError("left and right rows must align")
    n = left.shape[0]
    if g < 1:
        raise DataError("g must be >= 1")
    backend = backend or NaiveMatmul()
    rng = stream(seed, "cpair/signs")
    n_pad = ((n + g - 1) // g) * g
    perm = np.full(n_pad, -1, dtype=np.int64)
    perm[:n] = rng.permutation(n)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    m = n_pad // g
    d = left.shape[1]
    VL = np.zeros((m, d))
    VR = np.zeros((m, d))
    for a in range(m):
        rows = perm[a * g:(a + 1) * g]
        rows = rows[rows >= 0]
        if rows.size:
            VL[a] = (signs[rows][:, None] * left[rows]).sum(axis=0)
            VR[a] = (signs[rows][:, None] * right[rows]).sum(axis=0)
    M = backend.multiply(VL, VR.T)
    return M, perm, signs


def _group_members(perm: np.ndarray, g: int, a: int) -> np.ndarray:
    rows = perm[a * g:(a + 1) * g]
    return rows[rows >= 0]


def ip_grouped(instance, g: int, backend: str = "naive", seed: int = 0):
    """Largest inner-product pair, located through one grouped product.

    Accepts a PlantedIpInstance or a raw (n, d) array. The matrix product
    only points at two groups; the returned pair always comes from an
    exact scan of the cross pairs, so a wrong pointer degrades recall,
    never correctness of the reported inner product.
    """
    X = instance.points if isinstance(instance, PlantedIpInstance) else np.asarray(instance)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise DataError("need at least two points")
    be = get_backend(backend)
    m = ((n + g - 1) // g)
    if m <= 1:
        # single group: nothing to aggregate, fall back to the full scan
        G = X @ X.T
        np.fill_diagonal(G, -np.inf)
        i, j = np.unravel_index(int(np.argmax(G)), G.shape)
        return (int(min(i, j)), int(max(i, j)))
    M, perm, _ = sign_aggregate(X, X, g, seed, be)
    np.fill_diagonal(M, 0.0)
    a, b = np.unravel_index(int(np.argmax(np.abs(M))), M.shape)
    rows_a = _group_members(perm, g, int(a))
    rows_b = _group_members(perm, g, int(b))
    best, best_ip = None, -np.inf
    for i in rows_a:
        ips = np.where(rows_b != i, X[rows_b] @ X[i], -np.inf)
        t = int(np.argmax(ips))
        if ips[t] > best_ip:
            best_ip = float(ips[t])
            best = (int(i), int(rows_b[t]))
    if best is None:
        return (0, 1)
    i, j = best
    return (min(i, j), max(i, j))


# ---------------------------------------------------------------------------
# closest pair through ANN


class BruteIndex:
    """Exhaustive (c, r)-ANN used as the reference builder."""

    def __init__(self, dataset: core.Dataset, c: float, r: float):
        self.dataset = dataset
        self.cr = c * r

    def query(self, q: np.ndarray):
        idx, dist = core.brute_force_nn(self.dataset, q)
        return (idx if dist <= self.cr else None), None


def cp_via_ann(dataset: core.Dataset, c: float, r: float,
               builder: Callable[[core.Dataset, int], object],
               seed: int = 0, reps: int = 3) -> Optional[tuple]:
    """Random-split closest pair: index half the points, query the rest.

    builder(sub_dataset, seed) must return an object whose query(q)
    yields an index into sub_dataset (optionally with stats) or None.
    Any returned pair is re-verified at distance <= c r. A pair within r
    straddles the split with probability 1/2 per repetition, so three
    repetitions succeed with probability >= 1 - (1/2 + delta)^3 for an
    ANN with failure rate delta.
    """
    n = dataset.n
    if n < 2:
        raise DataError("closest pair needs at least two points")
    if r < 0:
        raise DataError("r must be nonnegative")
    for rep in range(reps):
        perm = stream(seed, f"cpair/split/{rep}").permutation(n)
        half = n // 2
        A, B = perm[:half], perm[half:]
        sub = core.Dataset(dataset.points[A], dataset.metric, dataset.dim)
        index = builder(sub, child_seed(seed, f"cpair/index/{rep}"))
        if hasattr(index, "query_many"):
            results = index.query_many(dataset.points[B])
        else:
            results = [index.query(dataset.points[b]) for b in B]
        for b, got in zip(B, results):
            idx = got[0] if isinstance(got, tuple) else got
            if idx is None:
                continue
            gi = int(A[int(idx)])
            if core.distance(dataset.metric, dataset.points[gi], dataset.points[b]) <= c * r + 1e-9:
                return (min(gi, int(b)), max(gi, int(b)))
    return None


# ---------------------------------------------------------------------------
# amplification embeddings


def tensor_embed(x: np.ndarray, k: int, budget: int = 1_000_000) -> np.ndarray:
    """Exact k-th tensor power, flattened. <x^(k), y^(k)> = <x, y>^k."""
    x = np.asarray(x, dtype=np.float64)
    if k < 1:
        raise DataError("k must be >= 1")
    if x.size ** k > budget:
        raise BudgetError(f"tensor dimension {x.size}^{k} exceeds budget {budget}")
    out = x
    for _ in range(k - 1):
        out = np.outer(out, x).ravel()
    return out


def _tensor_rows(X: np.ndarray, k: int, budget: int) -> np.ndarray:
    n, d = X.shape
    if d ** k > budget:
        raise BudgetError(f"tensor dimension {d}^{k} exceeds budget {budget}")
    out = X
    for _ in range(k - 1):
        out = np.einsum("na,nb->nab", out, X).reshape(n, -1)
    return out


@functools.lru_cache(maxsize=None)
def chebyshev_coefficients(k: int) -> tuple:
    """Integer coefficients of T_k, lowest degree first (exact)."""
    if k < 0:
        raise DataError("k must be nonnegative")
    if k == 0:
        return (1,)
    prev, cur = (1,), (0, 1)
    for _ in range(k - 1):
        doubled = (0,) + tuple(2 * c for c in cur)
        nxt = tuple(doubled[i] - (prev[i] if i < len(prev) else 0)
                    for i in range(len(doubled)))
        prev, cur = cur, nxt
    return cur


def chebyshev_value(k: int, x):
    """T_k(x) by the three-term recurrence; works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    if k == 0:
        return np.ones_like(x) if x.shape else 1.0
    prev, cur = np.ones_like(x), x.copy()
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur if cur.shape else float(cur)


def polynomial_embed(x: np.ndarray, coeffs, side: str,
                     budget: int = 2_000_000) -> np.ndarray:
    """Asymmetric embedding realizing <f(x), g(y)> = sum_j c_j <x,y>^j.

    The left side carries the coefficient signs, the right side the
    magnitudes, block j being sqrt(|c_j|) times the j-th tensor power.
    Both sides share one block layout (zero coefficients skipped).
    """
    if side not in ("left", "right"):
        raise DataError("side must be left or right")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    active = [j for j, cj in enumerate(coeffs) if cj != 0]
    total = sum(d ** j if j else 1 for j in active)
    if total > budget:
        raise BudgetError(f"embedding dimension {total} exceeds budget {budget}")
    blocks = []
    for j in active:
        cj = coeffs[j]
        w = math.sqrt(abs(cj))
        if side == "left" and cj < 0:
            w = -w
        blocks.append(np.array([w]) if j == 0 else w * tensor_embed(x, j, budget=budget))
    return np.concatenate(blocks)


def chebyshev_embed(x: np.ndarray, k: int, side: str, scale: float = 1.0,
                    budget: int = 2_000_000) -> np.ndarray:
    """Embedding pair with <f(x), g(y)> = T_k(<x, y> / scale) exactly."""
    if scale <= 0:
        raise DataError("scale must be positive")
    coeffs = [c / scale ** j for j, c in enumerate(chebyshev_coefficients(k))]
    return polynomial_embed(x, coeffs, side, budget=budget)


def _poly_rows(X: np.ndarray, coeffs, side: str, budget: int) -> np.ndarray:
    n, d = X.shape
    active = [j for j, cj in enumerate(coeffs) if cj != 0]
    total = sum(d ** j if j else 1 for j in active)
    if total > budget:
        raise BudgetError(f"embedding dimension {total} exceeds budget {budget}")
    blocks = []
    for j in active:
        cj = coeffs[j]
        w = math.sqrt(abs(cj))
        if side == "left" and cj < 0:
            w = -w
        if j == 0:
            blocks.append(np.full((n, 1), w))
        else:
            blocks.append(w * _tensor_rows(X, j, budget))
    return np.hstack(blocks)


# ---------------------------------------------------------------------------
# the full pipeline


def cp_pipeline(dataset: core.Dataset, eps: float, r: float,
                mode: str = "tensor", k: int = 2, g: int = 8,
                jl_dim: Optional[int] = None, theta: float = 0.5,
                backend: str = "naive", seed: int = 0,
                budget: int = 2_000_000) -> Optional[tuple]:
    """Closest pair on the unit sphere via amplify -> compress -> group.

    Near pairs map to big inner products (||x - y||^2 = 2 - 2 <x, y>);
    tensoring raises the whole Gram matrix to the k-th power, while
    chebyshev applies T_k(<x,y>/theta) so anything below theta stays in
    [-1, 1] and the planted value grows like cosh(k arccosh(.)). The pair
    implicated by the grouped product is verified in the original metric
    at (1 + eps) r, so the return value is trustworthy even with eps = 0.
    """
    if dataset.metric.kind != "l2":
        raise DataError("pipeline expects an l2 dataset")
    if r <= 0 or eps < 0:
        raise DataError("need r > 0 and eps >= 0")
    X = dataset.points
    if np.any(np.abs(np.linalg.norm(X, axis=1) - 1.0) > 1e-6):
        raise DataError("pipeline expects unit-normalized points")
    n = X.shape[0]
    if n < 2:
        raise DataError("closest pair needs at least two points")
    if mode == "tensor":
        F = G = _tensor_rows(X, k, budget)
    elif mode == "chebyshev":
        coeffs = [c / theta ** j for j, c in enumerate(chebyshev_coefficients(k))]
        F = _poly_rows(X, coeffs, "left", budget)
        G = _poly_rows(X, coeffs, "right", budget)
    else:
        raise DataError("mode must be tensor or chebyshev")
    if jl_dim is not None:
        proj = GaussianProjection(F.shape[1], jl_dim, child_seed(seed, "cpair/jl"))
        F = proj.apply(F)
        G = F if mode == "tensor" else proj.apply(G)
    be = get_backend(backend)
    m = (n + g - 1) // g
    if m <= 1:
        i, j, dist = core.brute_force_cp(dataset)
        return (i, j) if dist <= (1.0 + eps) * r + 1e-9 else None
    M, perm, _ = sign_aggregate(F, G, g, child_seed(seed, "cpair/signs"), be)
    np.fill_diagonal(M, 0.0)
    a, b = np.unravel_index(int(np.argmax(np.abs(M))), M.shape)
    rows_a = _group_members(perm, g, int(a))
    rows_b = _group_members(perm, g, int(b))
    best, best_dist = None, np.inf
    for i in rows_a:
        dists = np.where(rows_b != i,
                         np.linalg.norm(X[rows_b] - X[int(i)][None, :], axis=1),
                         np.inf)
        t = int(np.argmin(dists))
        if dists[t] < best_dist:
            best_dist = float(dists[t])
            best = (int(i), int(rows_b[t]))
    if best is not None and best_dist <= (1.0 + eps) * r + 1e-9:
        i, j = best
        return (min(i, j), max(i, j))
    return None
