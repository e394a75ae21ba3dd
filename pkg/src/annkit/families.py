"""Concrete LSH families and their analytic collision probabilities.

Bit sampling for Hamming space, scalar-quantized Gaussian projections for
Euclidean space, and a Gaussian threshold family for the unit sphere. The
collision probabilities are computed by deterministic 1-D quadrature so
declared sensitivities are reproducible to high accuracy.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from . import core
from .errors import DataError
from .lsh import Hasher, LshFamily

UNIT_NORM_TOL = 1e-6


# ---------------------------------------------------------------------------
# Bit sampling (Hamming)


class _BitHasher(Hasher):
    def __init__(self, j: int):
        self.j = j

    def __call__(self, x):
        return core.get_bit(np.asarray(x, dtype=np.uint64), self.j)

    def hash_many(self, X):
        return core.get_bit_column(X, self.j).astype(np.int64)


class BitSamplingFamily(LshFamily):
    """h(x) = one uniformly chosen bit of x.

    Sensitivity (1 - r/d, 1 - cr/d); collision probability for points at
    distance h is exactly 1 - h/d.
    """

    def __init__(self, d: int, r: float, c: float):
        if d < 1:
            raise DataError("d must be >= 1")
        if c * r >= d:
            raise DataError("requires cr < d")
        self.d = d
        self.metric = core.HAMMING
        self.r = float(r)
        self.c = float(c)
        self.p1 = 1.0 - r / d
        self.p2 = 1.0 - c * r / d
        self._validate()

    def sample(self, rng):
        return _BitHasher(int(rng.integers(self.d)))


def bit_sampling_sensitivity(d: int, r: float, c: float) -> tuple[float, float]:
    fam = BitSamplingFamily(d, r, c)
    return fam.p1, fam.p2


# ---------------------------------------------------------------------------
# Quantized Gaussian projections (l2)


def pstable_collision(s: float, width: float) -> float:
    """Collision probability of two points at l2 distance s under
    h(x) = floor(<x, g> / width + b).

    Computed by integrating the density of |<x - y, g>| = |N(0, s^2)|
    against the bucket overlap kernel (1 - t/width) on [0, width].
    """
    if width <= 0:
        raise DataError("width must be positive")
    if s < 0:
        raise DataError("distance must be nonnegative")
    if s == 0:
        return 1.0

    def integrand(t):
        return (2.0 / s) * norm.pdf(t / s) * (1.0 - t / width)

    val, _ = integrate.quad(integrand, 0.0, width, epsabs=1e-13, epsrel=1e-12)
    return float(min(1.0, max(0.0, val)))


class _ProjectionHasher(Hasher):
    def __init__(self, g: np.ndarray, b: float, width: float):
        self.g = g
        self.b = b
        self.width = width

    def __call__(self, x):
        return int(math.floor(float(np.dot(self.g, x)) / self.width + self.b))

    def hash_many(self, X):
        return np.floor(X @ self.g / self.width + self.b).astype(np.int64)


class PStableFamily(LshFamily):
    """h(x) = floor(<x, g> / (w r) + b) with Gaussian g and uniform shift b.

    w is the bucket width in units of r; larger w raises both collision
    probabilities. optimal_width searches w numerically for minimal rho.
    """

    def __init__(self, d: int, r: float, c: float, w: float = 4.0):
        if d < 1:
            raise DataError("d must be >= 1")
        if w <= 0:
            raise DataError("w must be positive")
        self.d = d
        self.metric = core.L2
        self.r = float(r)
        self.c = float(c)
        self.w = float(w)
        self.width = self.w * self.r
        self.p1 = pstable_collision(self.r, self.width)
        self.p2 = pstable_collision(self.c * self.r, self.width)
        self._validate()

    def sample(self, rng):
        g = rng.standard_normal(self.d)
        b = float(rng.random())
        return _ProjectionHasher(g, b, self.width)


def pstable_rho(c: float, w: float) -> float:
    """rho of the quantized-projection family at approximation c, width w."""
    p1 = pstable_collision(1.0, w)
    p2 = pstable_collision(c, w)
    return math.log(1.0 / p1) / math.log(1.0 / p2)


def optimal_width(c: float, lo: float = 0.5, hi: float = 30.0) -> float:
    """Bucket width (in units of r) minimizing rho for approximation c."""
    res = optimize.minimize_scalar(lambda w: pstable_rho(c, w),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-6})
    return float(res.x)


# ---------------------------------------------------------------------------
# Gaussian threshold family (unit sphere)


def _bvn_tail(eta: float, corr: float) -> float:
    """Pr[Z1 >= eta, Z2 >= eta] for standard bivariate normal with
    correlation corr, by 1-D quadrature."""
    if corr >= 1.0:
        return float(norm.sf(eta))
    if corr <= -1.0:
        return float(norm.sf(eta) - norm.cdf(eta)) if eta < 0 else 0.0
    denom = math.sqrt(1.0 - corr * corr)

    def integrand(z):
        return norm.pdf(z) * norm.sf((eta - corr * z) / denom)

    val, _ = integrate.quad(integrand, eta, np.inf, epsabs=1e-14, epsrel=1e-12)
    return float(val)


def spherical_collision(s: float, eta: float) -> float:
    """Collision probability of unit vectors at distance s under the
    Gaussian threshold family: Pr[both caps hit] / Pr[either cap hit].

    The two projections <x, g>, <y, g> are standard normals with
    correlation <x, y> = 1 - s^2 / 2.
    """
    if not 0.0 <= s < 2.0:
        raise DataError("distance on the unit sphere must lie in [0, 2)")
    if eta <= 0:
        raise DataError("eta must be positive")
    tail = norm.sf(eta)
    if s == 0.0:
        return 1.0
    corr = 1.0 - s * s / 2.0
    joint = _bvn_tail(eta, corr)
    union = 2.0 * tail - joint
    return float(joint / union)


def rho_spherical(c: float, r: float) -> float:
    """Closed-form first-order query exponent of the threshold family,
    (4 - c^2 r^2) / ((4 - r^2) c^2), for unit-sphere instances.

    Equals 1/c^2 as r -> 0, 1/(2 c^2 - 1) at r = sqrt(2)/c, and 0 at
    r = 2/c. The finite-eta family achieves this only up to an additive
    gap; see spherical_rho_gap.
    """
    if c <= 1:
        raise DataError("c must exceed 1")
    if not 0.0 <= r <= 2.0 / c:
        raise DataError("requires 0 <= r <= 2/c on the unit sphere")
    return (4.0 - c * c * r * r) / ((4.0 - r * r) * c * c)


def spherical_rho_measured(c: float, r: float, eta: float) -> float:
    p1 = spherical_collision(r, eta)
    p2 = spherical_collision(c * r, eta)
    return math.log(1.0 / p1) / math.log(1.0 / p2)


def spherical_rho_gap(c: float, r: float, eta: float) -> float:
    """Additive gap between the measured exponent at threshold eta and the
    closed form; nonnegative and shrinking as eta grows."""
    return spherical_rho_measured(c, r, eta) - rho_spherical(c, r)


class _SphericalHasher(Hasher):
    """First Gaussian direction whose projection clears the threshold.

    Directions are drawn lazily in fixed blocks keyed by (instance seed,
    block index), so values do not depend on evaluation order. Points that
    clear no direction up to t_max fall into an overflow bucket unique to
    this instance.
    """

    BLOCK = 32

    def __init__(self, d: int, eta: float, t_max: int, instance_seed: int):
        self.d = d
        self.eta = eta
        self.t_max = t_max
        self.instance_seed = instance_seed
        self.overflow = -1 - instance_seed
        self._blocks: dict[int, np.ndarray] = {}

    def _block(self, b: int) -> np.ndarray:
        blk = self._blocks.get(b)
        if blk is None:
            rng = np.random.default_rng([self.instance_seed, b])
            count = min(self.BLOCK, self.t_max - b * self.BLOCK)
            blk = rng.standard_normal((count, self.d))
            self._blocks[b] = blk
        return blk

    def _check_unit(self, X):
        norms = np.linalg.norm(X, axis=-1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise DataError("spherical family requires unit-norm inputs")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check_unit(x[None, :])
        nblocks = (self.t_max + self.BLOCK - 1) // self.BLOCK
        for b in range(nblocks):
            dots = self._block(b) @ x
            hits = np.flatnonzero(dots >= self.eta)
            if hits.size:
                return b * self.BLOCK + int(hits[0]) + 1
        return self.overflow

    def hash_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_unit(X)
        n = X.shape[0]
        out = np.full(n, self.overflow, dtype=np.int64)
        active = np.arange(n)
        nblocks = (self.t_max + self.BLOCK - 1) // self.BLOCK
        for b in range(nblocks):
            if active.size == 0:
                break
            dots = X[active] @ self._block(b).T
            hit_mask = dots >= self.eta
            any_hit = hit_mask.any(axis=1)
            if any_hit.any():
                first = np.argmax(hit_mask[any_hit], axis=1)
                out[active[any_hit]] = b * self.BLOCK + first + 1
                active = active[~any_hit]
        return out


class SphericalFamily(LshFamily):
    """Gaussian threshold hashing on the unit sphere.

    h(x) is the first direction in an i.i.d. Gaussian sequence with
    <x, g_t> >= eta, truncated at t_max = ceil(40 e^{eta^2/2}) draws. The
    declared sensitivity uses the untruncated collision probabilities; the
    truncation changes them by far less than Monte Carlo resolution.
    """

    def __init__(self, d: int, r: float, c: float, eta: float,
                 t_max: Optional[int] = None):
        if d < 1:
            raise DataError("d must be >= 1")
        if eta <= 0:
            raise DataError("eta must be positive")
        if c * r >= 2.0:
            raise DataError("requires cr < 2 on the unit sphere")
        self.d = d
        self.metric = core.L2
        self.r = float(r)
        self.c = float(c)
        self.eta = float(eta)
        self.t_max = int(t_max) if t_max is not None else math.ceil(40.0 * math.exp(eta * eta / 2.0))
        self.p1 = spherical_collision(self.r, eta)
        self.p2 = spherical_collision(self.c * self.r, eta)
        self._validate()

    def sample(self, rng):
        instance_seed = int(rng.integers(0, 2 ** 62))
        return _SphericalHasher(self.d, self.eta, self.t_max, instance_seed)
