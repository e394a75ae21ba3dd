import numpy as np
import pytest

from annkit import core, dimred
from annkit.errors import BudgetError, DataError


def test_gaussian_projection_linear():
    proj = dimred.GaussianProjection(d=12, k=6, seed=7)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 12))
    lhs = proj.apply(2.0 * x - 3.0 * y)
    rhs = 2.0 * proj.apply(x) - 3.0 * proj.apply(y)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_gaussian_projection_norm_unbiased():
    # E ||f(x)||^2 = ||x||^2; check the Monte Carlo mean within 4 sigma
    x = np.random.default_rng(1).normal(size=32)
    x /= np.linalg.norm(x)
    k, trials = 16, 3000
    sq = np.array([
        np.sum(dimred.GaussianProjection(32, k, seed=s).apply(x) ** 2)
        for s in range(trials)
    ])
    # ||f(x)||^2 ~ chi^2_k / k, variance 2/k
    assert abs(sq.mean() - 1.0) < 4.0 * np.sqrt(2.0 / k / trials)


def test_gaussian_projection_distortion_decays_exponentially():
    # failure rate at fixed eps should fall off like exp(-C eps^2 k)
    eps, trials = 0.5, 1500
    x = np.random.default_rng(2).normal(size=24)
    x /= np.linalg.norm(x)
    fails = {}
    for k in (4, 8, 16):
        norms = np.array([
            np.linalg.norm(dimred.GaussianProjection(24, k, seed=10_000 + 31 * k + s).apply(x))
            for s in range(trials)
        ])
        fails[k] = max(np.mean((norms > 1 + eps) | (norms < 1 - eps)), 0.5 / trials)
    rate = np.polyfit(list(fails), [-np.log(f) for f in fails.values()], 1)[0]
    c_fit = rate / eps ** 2
    assert c_fit > 0.05
    assert fails[16] < fails[4]


def test_binary_projection_gf2_linear():
    proj = dimred.BinaryProjection(d=96, k=32, r=8.0, seed=3)
    rng = np.random.default_rng(4)
    x = core.random_bits(rng, 1, 96)[0]
    y = core.random_bits(rng, 1, 96)[0]
    assert np.array_equal(proj.apply(x ^ y), proj.apply(x) ^ proj.apply(y))
    assert core.hamming_distance(proj.apply(x), proj.apply(x)) == 0


def test_binary_projection_disagreement_rate():
    # frozen rate for p = 1/16, h = 8: (1 - (7/8)^8) / 2
    proj = dimred.BinaryProjection(d=128, k=256, r=8.0, seed=5)
    assert proj.p == pytest.approx(1 / 16)
    assert proj.disagree_rate(8) == pytest.approx(0.3281955420970917, abs=1e-12)
    assert proj.disagree_rate(12) == pytest.approx(0.39929138099978445, abs=1e-12)
    # monotone in h
    hs = np.arange(1, 40)
    qs = [proj.disagree_rate(h) for h in hs]
    assert all(b > a for a, b in zip(qs, qs[1:]))
    # Monte Carlo check at h = 8 within 4 sigma over fresh projections
    rng = np.random.default_rng(6)
    base = rng.integers(0, 2, size=128, dtype=np.uint8)
    other = base.copy()
    other[:8] ^= 1
    x, y = core.pack_bits(base), core.pack_bits(other)
    trials = 40
    total = k_total = 0
    for s in range(trials):
        p = dimred.BinaryProjection(128, 256, 8.0, seed=100 + s)
        total += core.hamming_distance(p.apply(x), p.apply(y))
        k_total += 256
    q = proj.disagree_rate(8)
    sigma = np.sqrt(k_total * q * (1 - q))
    assert abs(total - k_total * q) < 4 * sigma


def test_binary_projection_threshold_between_rates():
    proj = dimred.BinaryProjection(d=128, k=512, r=8.0, seed=7)
    t = proj.decision_threshold(eps=0.5)
    assert 512 * proj.disagree_rate(8) < t < 512 * proj.disagree_rate(12)


def test_binary_projection_validation():
    with pytest.raises(DataError):
        dimred.BinaryProjection(d=16, k=4, r=0.2, seed=0)
    with pytest.raises(DataError):
        dimred.BinaryProjection(d=16, k=4, r=16.0, seed=0)


def test_cube_dictionary_single_point_1d():
    # one point, k = 1: stored cells tile an interval of length 2 r (1+eps)
    ds = core.dense_dataset(np.array([[0.7]]), core.L2)
    cube = dimred.CubeDictionary(ds, r=1.0, eps=0.5, k=1, seed=11)
    expect = int(np.ceil(2 * 1.5 / cube.side))
    assert abs(len(cube) - expect) <= 1


def test_cube_dictionary_query_guarantee():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(40, 16))
    ds = core.dense_dataset(pts, core.L2)
    r, eps = 1.0, 0.5
    cube = dimred.CubeDictionary(ds, r=r, eps=eps, k=4, seed=13)
    # members always resolve, and any answer is close in the projected space
    for i in range(ds.n):
        got = cube.query(pts[i])
        assert got is not None
    for t in range(50):
        q = rng.normal(size=16)
        got = cube.query(q)
        if got is not None:
            fq = cube.projection.apply(q)
            fp = cube.projection.apply(pts[got])
            assert np.linalg.norm(fq - fp) <= (1 + 2 * eps) * r + 1e-9


def test_cube_dictionary_budget():
    ds = core.dense_dataset(np.zeros((1, 8)), core.L2)
    with pytest.raises(BudgetError):
        dimred.CubeDictionary(ds, r=1.0, eps=0.5, k=8, seed=14, cell_budget=10)


def test_hamming_lookup_matches_exhaustive():
    # oracle: 2^k x n scan over projected codes
    rng = np.random.default_rng(15)
    packed = core.random_bits(rng, 20, 64)
    ds = core.bit_dataset(packed, 64)
    k = 10
    table = dimred.HammingLookup.build(ds, r=4.0, eps=1.0, k=k, seed=16)
    codes = table.projection.apply_many(packed)[:, 0].astype(np.int64)
    zs = np.arange(1 << k, dtype=np.int64)
    exhaustive = np.bitwise_count(zs[:, None] ^ codes[None, :]).min(axis=1)
    assert np.array_equal(table.dist, exhaustive)
    owner_dist = np.bitwise_count(zs ^ codes[table.owner])
    assert np.array_equal(owner_dist, exhaustive)


def test_hamming_lookup_member_query():
    rng = np.random.default_rng(17)
    packed = core.random_bits(rng, 10, 48)
    ds = core.bit_dataset(packed, 48)
    table = dimred.HammingLookup.build(ds, r=3.0, eps=1.0, k=8, seed=18)
    for i in range(10):
        owner, dist = table.lookup(packed[i])
        assert dist == 0
        assert table.query(packed[i]) is not None


def test_hamming_lookup_k_cap():
    rng = np.random.default_rng(19)
    ds = core.bit_dataset(core.random_bits(rng, 4, 64), 64)
    with pytest.raises(BudgetError):
        dimred.HammingLookup.build(ds, r=4.0, eps=1.0, k=30, seed=20)


def test_hamming_lookup_threshold_separates_planted():
    # near pair at distance r versus decoys at distance (1+eps) r; the
    # thresholded decision should be right most of the time
    d, r, eps, k = 128, 8, 0.5, 512
    rng = np.random.default_rng(21)
    correct = 0
    trials = 200
    for t in range(trials):
        base = rng.integers(0, 2, size=d, dtype=np.uint8)
        near = base.copy()
        near[rng.choice(d, r, replace=False)] ^= 1
        far = base.copy()
        far[rng.choice(d, int((1 + eps) * r), replace=False)] ^= 1
        proj = dimred.BinaryProjection(d, k, float(r), seed=3000 + t)
        thr = proj.decision_threshold(eps)
        q = core.pack_bits(base)
        d_near = core.hamming_distance(proj.apply(q), proj.apply(core.pack_bits(near)))
        d_far = core.hamming_distance(proj.apply(q), proj.apply(core.pack_bits(far)))
        correct += int(d_near <= thr) + int(d_far > thr)
    assert correct / (2 * trials) >= 0.85
