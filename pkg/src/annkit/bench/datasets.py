"""Planted benchmark instances with verified ground truth.

Every generator re-checks its own ground truth by brute force before
returning, so anything a driver consumes is already certified. Dense
instances are rounded to float32 first and verified on the rounded
values, i.e. on exactly what a dataset file would store.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import core, cpair, ddpart, seeds
from ..errors import DataError, InvariantError

_MAX_FIX_ROUNDS = 500
_MAX_INSTANCE_TRIES = 50

CAPS_EPS = 0.5
CAPS_SPREAD = 0.08


@dataclass(frozen=True)
class PlantedDatasetSpec:
    """What to plant: mode is near, cp, caps, or ip."""
    mode: str
    n: int
    d: int
    metric: str = "hamming"
    r: float = 4.0
    c: float = 2.0
    seed: int = 0
    queries: int = 10
    caps: int = 3
    theta: float = 0.05


@dataclass
class GeneratedInstance:
    data: core.Dataset
    queries: Optional[core.Dataset]
    gt: list
    meta: dict = field(default_factory=dict)


def generate(spec: PlantedDatasetSpec) -> GeneratedInstance:
    if spec.n <= 0:
        raise DataError("n must be positive")
    if spec.d <= 0:
        raise DataError("d must be positive")
    if spec.mode == "near":
        return planted_near(spec.n, spec.d, spec.metric, spec.r, spec.queries, spec.seed)
    if spec.mode == "cp":
        return planted_cp(spec.n, spec.d, spec.metric, spec.r, spec.seed)
    if spec.mode == "caps":
        return planted_caps(spec.n, spec.d, spec.caps, spec.seed)
    if spec.mode == "ip":
        return planted_ip(spec.n, spec.d, spec.theta, spec.c, spec.seed)
    raise DataError(f"unknown planting mode {spec.mode!r}")


# -- shared helpers ---------------------------------------------------------


def _fresh_rows(rng, metric, count, d):
    if metric.binary:
        return core.random_bits(rng, count, d)
    return rng.standard_normal((count, d)).astype(np.float32)


def _displace(rng, metric, x, d, r):
    """A query at distance (just under) r from stored point x."""
    if metric.binary:
        bits = core.unpack_bits(x, d)
        flips = rng.choice(d, size=int(r), replace=False)
        bits[flips] ^= 1
        return core.pack_bits(bits)
    safe_r = r * (1.0 - 1e-4)  # float32 rounding must not push past r
    if metric.kind == "l2":
        v = rng.standard_normal(d)
        disp = safe_r * v / np.linalg.norm(v)
    elif metric.kind == "l1":
        w = rng.exponential(size=d)
        disp = rng.choice([-1.0, 1.0], size=d) * safe_r * w / w.sum()
    elif metric.kind == "linf":
        disp = rng.uniform(-safe_r, safe_r, size=d)
        disp[int(rng.integers(d))] = safe_r * float(rng.choice([-1.0, 1.0]))
    else:
        raise DataError(f"near-neighbor planting unsupported for metric {metric.kind}")
    return (np.asarray(x, dtype=np.float64) + disp).astype(np.float32)


def _as_dataset(points, metric, d):
    if metric.binary:
        return core.bit_dataset(points, d)
    return core.dense_dataset(np.asarray(points, dtype=np.float64), metric)


# -- near-neighbor mode -----------------------------------------------------


def planted_near(n, d, metric_name, r, m_queries, seed) -> GeneratedInstance:
    """Each query has exactly one dataset point within r (its planted base).

    Background rows that stray inside some query's r-ball are redrawn
    until the instance is clean; the planted rows never move. The final
    instance is certified by an exhaustive distance scan.
    """
    from . import io as bio

    metric = bio.metric_from_name(metric_name)
    if metric.binary and not float(r).is_integer():
        raise DataError("hamming planting needs an integer r")
    if r <= 0:
        raise DataError("r must be positive")
    if m_queries < 1:
        raise DataError("need at least one query")
    if m_queries > n:
        raise DataError("more queries than points to anchor them on")
    rng = seeds.stream(seed, "bench/gen/near")
    points = _fresh_rows(rng, metric, n, d)
    bases = rng.choice(n, size=m_queries, replace=False).astype(int)
    queries = [_displace(rng, metric, points[b], d, r) for b in bases]

    base_of = {int(b): t for t, b in enumerate(bases)}
    for _ in range(_MAX_FIX_ROUNDS):
        ds = _as_dataset(points, metric, d)
        dirty = set()
        requery = set()
        for t, q in enumerate(queries):
            dists = core.distances_to(metric, ds.points, q)
            close = set(int(j) for j in np.flatnonzero(dists <= r))
            close.discard(int(bases[t]))
            for j in close:
                if j in base_of:
                    requery.add(base_of[j])  # moving a base breaks its query
                else:
                    dirty.add(j)
        if not dirty and not requery:
            break
        for j in sorted(dirty):
            points[j] = _fresh_rows(rng, metric, 1, d)[0]
        for t in sorted(requery):
            queries[t] = _displace(rng, metric, points[bases[t]], d, r)
    else:
        raise InvariantError("could not isolate the planted neighbors")

    data = _as_dataset(points, metric, d)
    gt = []
    for t, q in enumerate(queries):
        dists = core.distances_to(metric, data.points, q)
        within = np.flatnonzero(dists <= r)
        if within.size != 1 or int(within[0]) != int(bases[t]):
            raise InvariantError("ground-truth verification failed: neighbor not unique")
        gt.append((t, int(bases[t]), float(dists[bases[t]])))
    qarr = np.stack(queries)
    return GeneratedInstance(data, _as_dataset(qarr, metric, d), gt)


def planted_near_sphere(n, d, r, m_queries, seed) -> GeneratedInstance:
    """Unit-sphere variant: base points uniform on S^{d-1}, each query
    rotated to chordal distance exactly r from its base."""
    if not 0 < r < 2:
        raise DataError("sphere planting needs 0 < r < 2")
    rng = seeds.stream(seed, "bench/gen/near-sphere")
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    bases = rng.choice(n, size=m_queries, replace=False).astype(int)
    ip = 1.0 - r * r / 2.0

    def rotate(b):
        x = X[b]
        w = rng.standard_normal(d)
        w -= (w @ x) * x
        w /= np.linalg.norm(w)
        return ip * x + np.sqrt(1.0 - ip * ip) * w

    queries = [rotate(b) for b in bases]
    base_of = {int(b): t for t, b in enumerate(bases)}
    for _ in range(_MAX_FIX_ROUNDS):
        dirty, requery = set(), set()
        for t, q in enumerate(queries):
            dists = np.linalg.norm(X - q, axis=1)
            close = set(int(j) for j in np.flatnonzero(dists <= r + 1e-9))
            close.discard(int(bases[t]))
            for j in close:
                if j in base_of:
                    requery.add(base_of[j])
                else:
                    dirty.add(j)
        if not dirty and not requery:
            break
        for j in sorted(dirty):
            v = rng.standard_normal(d)
            X[j] = v / np.linalg.norm(v)
        for t in sorted(requery):
            queries[t] = rotate(bases[t])
    else:
        raise InvariantError("could not isolate the planted sphere neighbors")

    data = core.dense_dataset(X, core.L2)
    gt = []
    for t, q in enumerate(queries):
        dists = core.distances_to(core.L2, X, q)
        within = np.flatnonzero(dists <= r + 1e-9)
        if within.size != 1 or int(within[0]) != int(bases[t]):
            raise InvariantError("sphere ground truth failed verification")
        gt.append((t, int(bases[t]), float(dists[bases[t]])))
    return GeneratedInstance(data, core.dense_dataset(np.stack(queries), core.L2), gt)


def planted_rho_ring(n, d, kind, r, c, m_queries, seed) -> GeneratedInstance:
    """The hard instance for candidate-growth measurements.

    Every dataset point sits at distance exactly c*r from one of the
    m_queries anchors (round robin), and no point comes within r of any
    anchor. Collisions against an index are then pure far-point events,
    so the per-query candidate count tracks the table count's n^rho
    growth with no near-neighbor floor.
    """
    if m_queries < 1 or m_queries > n:
        raise DataError("need 1 <= queries <= n")
    if r <= 0 or c <= 1:
        raise DataError("need r > 0 and c > 1")
    rng = seeds.stream(seed, "bench/gen/rho-ring")
    if kind == "hamming":
        cr = c * r
        if not float(cr).is_integer():
            raise DataError("hamming rings need an integer c*r")
        flips_cr = int(cr)
        if flips_cr > d:
            raise DataError("c*r exceeds the dimension")
        anchors = core.random_bits(rng, m_queries, d)

        def ring_point(t):
            bits = core.unpack_bits(anchors[t], d)
            bits[rng.choice(d, size=flips_cr, replace=False)] ^= 1
            return core.pack_bits(bits)

        metric = core.HAMMING
        queries = core.bit_dataset(anchors, d)
    elif kind == "sphere":
        cr = c * r
        if not cr < 2.0:
            raise DataError("sphere rings need c*r < 2")
        A = rng.standard_normal((m_queries, d))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        ip = 1.0 - cr * cr / 2.0

        def ring_point(t):
            a = A[t]
            w = rng.standard_normal(d)
            w -= (w @ a) * a
            w /= np.linalg.norm(w)
            return ip * a + np.sqrt(1.0 - ip * ip) * w

        metric = core.L2
        queries = core.dense_dataset(A, core.L2)
    else:
        raise DataError(f"unknown ring kind {kind!r}")

    points = [ring_point(i % m_queries) for i in range(n)]
    if metric.binary:
        data = core.bit_dataset(np.stack(points), d)
    else:
        data = core.dense_dataset(np.stack(points), core.L2)

    # hamming rings are far apart, so foreign points must stay off the
    # whole shell; sphere rings all live on the sqrt(2)-ish shell of every
    # anchor (those are exactly the far colliders), so only the "no point
    # within r" guarantee is enforceable there
    cutoff = max(r, cr * 0.999) if metric.binary else r + 1e-9
    for _ in range(_MAX_FIX_ROUNDS):
        bad = set()
        for t in range(m_queries):
            dists = core.distances_to(metric, data.points, queries.points[t])
            own = np.arange(t, n, m_queries)
            if np.any(np.abs(dists[own] - cr) > 1e-9):
                raise InvariantError("ring point drifted off the c*r shell")
            close = np.flatnonzero(dists <= cutoff)
            bad.update(int(j) for j in close if j % m_queries != t)
        if not bad:
            break
        pts = data.points.copy()
        for j in sorted(bad):
            pts[j] = ring_point(j % m_queries)
        data = core.bit_dataset(pts, d) if metric.binary else core.dense_dataset(pts, metric)
    else:
        raise InvariantError("could not separate the rho rings")
    return GeneratedInstance(data, queries, [], meta={"cr": cr})


# -- closest-pair mode ------------------------------------------------------


def planted_cp(n, d, metric_name, r, seed, sphere=False) -> GeneratedInstance:
    """One pair at distance <= r, everything else farther apart.

    Certified by running the exhaustive closest-pair oracle on the
    stored values; a clash with a random background pair triggers a
    full redraw.
    """
    from . import io as bio

    metric = bio.metric_from_name(metric_name)
    if n < 2:
        raise DataError("need at least two points")
    if metric.binary and not float(r).is_integer():
        raise DataError("hamming planting needs an integer r")
    if r < 0:
        raise DataError("r must be nonnegative")
    rng = seeds.stream(seed, "bench/gen/cp")
    for _ in range(_MAX_INSTANCE_TRIES):
        points = _fresh_rows(rng, metric, n, d)
        if sphere:
            if metric.kind != "l2":
                raise DataError("sphere planting requires the l2 metric")
            pts = np.asarray(points, dtype=np.float64)
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            points = pts.astype(np.float32)
        pair = tuple(sorted(int(v) for v in rng.choice(n, size=2, replace=False)))
        i, j = pair
        if sphere:
            pts = np.asarray(points, dtype=np.float64)
            ip = 1.0 - (r * (1.0 - 1e-4)) ** 2 / 2.0
            w = pts[j] - (pts[j] @ pts[i]) * pts[i]
            w /= np.linalg.norm(w)
            points[j] = (ip * pts[i] + np.sqrt(1.0 - ip * ip) * w).astype(np.float32)
        else:
            points[j] = _displace(rng, metric, points[i], d, r)
        data = _as_dataset(points, metric, d)
        bi, bj, bdist = core.brute_force_cp(data)
        planted_dist = float(core.distance(metric, data.points[i], data.points[j]))
        if (bi, bj) == pair and bdist == planted_dist and planted_dist <= r:
            return GeneratedInstance(data, None, [(i, j, planted_dist)],
                                     meta={"pair": pair})
    raise InvariantError("could not plant a verified closest pair")


# -- dense caps mode --------------------------------------------------------


def planted_caps(n, d, n_caps, seed) -> GeneratedInstance:
    """Unit-sphere data with n_caps dense clusters plus background noise.

    Ground truth is the cap extraction run on the stored values, then
    independently audited: every labeled member must actually lie in its
    cap, and every peel step must have met the density threshold.
    """
    if d < 8:
        raise DataError("caps planting needs d >= 8")
    if n_caps < 1:
        raise DataError("need at least one cap")
    per_cap = n // (n_caps + 1)
    if per_cap < 4:
        raise DataError("n too small for the requested number of caps")
    rng = seeds.stream(seed, "bench/gen/caps")
    tau = 0.5 * per_cap / n
    h = ddpart.cap_offset(CAPS_EPS)

    for _ in range(_MAX_INSTANCE_TRIES):
        basis = np.linalg.qr(rng.standard_normal((d, n_caps)))[0].T
        rows = []
        for k in range(n_caps):
            noise = CAPS_SPREAD * rng.standard_normal((per_cap, d))
            rows.append(basis[k][None, :] + noise)
        bg = rng.standard_normal((n - n_caps * per_cap, d))
        X = np.vstack(rows + [bg])
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        order = rng.permutation(n)
        X = X[order]
        # verify on the exact float32 values a dataset file will hold;
        # the residual norm error is inside the unit-row tolerance
        stored = np.asarray(X.astype(np.float32), dtype=np.float64)

        clusters, remainder = ddpart.extract_clusters(stored, CAPS_EPS, tau)
        if len(clusters) != n_caps:
            continue
        if _audit_caps(stored, clusters, remainder, tau, h):
            gt = []
            labeled = {}
            for center_idx, members in clusters:
                for m in members:
                    labeled[int(m)] = (int(center_idx),
                                       float(np.linalg.norm(stored[m] - stored[center_idx])))
            for pid in range(n):
                cid, dist = labeled.get(pid, (-1, -1.0))
                gt.append((pid, cid, dist))
            data = core.dense_dataset(stored, core.L2)
            return GeneratedInstance(data, None, gt,
                                     meta={"eps": CAPS_EPS, "tau": tau})
    raise InvariantError("could not generate a verified caps instance")


def _audit_caps(X, clusters, remainder, tau, h) -> bool:
    """Recheck the peel sequence from raw inner products only."""
    n = X.shape[0]
    live = np.ones(n, dtype=bool)
    for center_idx, members in clusters:
        ips = X[members] @ X[center_idx]
        if np.any(ips < h - 1e-9):
            return False
        if members.size < tau * live.sum():
            return False
        if not np.all(live[members]):
            return False
        live[members] = False
    claimed = int(sum(m.size for _, m in clusters)) + int(np.asarray(remainder).size)
    return claimed == n and live.sum() == np.asarray(remainder).size


# -- planted inner-product mode ---------------------------------------------


def planted_ip(n, d, theta, c, seed) -> GeneratedInstance:
    """Unit vectors with one pair at inner product c*theta, all other
    off-diagonal inner products below theta. Verified on the float32
    rounding that a dataset file stores."""
    inst = cpair.planted_ip_instance(n, d, theta, c, seed)
    stored = np.asarray(inst.points.astype(np.float32), dtype=np.float64)
    i, j = inst.pair
    G = stored @ stored.T
    if abs(G[i, j] - c * theta) > 1e-5:
        raise InvariantError("planted inner product drifted under rounding")
    off = np.abs(G)
    np.fill_diagonal(off, 0.0)
    off[i, j] = off[j, i] = 0.0
    if off.max() > theta + 1e-5:
        raise InvariantError("background inner product exceeds theta")
    if np.any(np.abs(np.linalg.norm(stored, axis=1) - 1.0) > 1e-5):
        raise InvariantError("rows drifted off the unit sphere")
    dist = float(np.linalg.norm(stored[i] - stored[j]))
    data = core.dense_dataset(stored, core.L2)
    return GeneratedInstance(data, None, [(i, j, dist)],
                             meta={"pair": inst.pair, "theta": theta, "c": c})
