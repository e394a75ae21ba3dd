import numpy as np
import pytest

from annkit import core, lsh
from annkit.errors import DataError
from annkit.families import BitSamplingFamily


def _planted_hamming(rng, n, d, r):
    """Random bits, one query planted at distance exactly r from point 0."""
    packed = core.random_bits(rng, n, d)
    bits = core.unpack_bits(packed[0], d)
    q = bits.copy()
    q[rng.choice(d, r, replace=False)] ^= 1
    return core.bit_dataset(packed, d), core.pack_bits(q)


def test_rho_frozen_value():
    fam = BitSamplingFamily(d=80, r=8, c=2)
    assert (fam.p1, fam.p2) == (0.9, 0.8)
    assert lsh.rho(fam) == pytest.approx(0.47216473448281543, abs=1e-12)


def test_rho_invariant_under_tensoring():
    fam = BitSamplingFamily(d=80, r=8, c=2)
    for k in (1, 2, 5):
        tk = lsh.tensor(fam, k)
        assert tk.p1 == pytest.approx(fam.p1 ** k)
        assert tk.p2 == pytest.approx(fam.p2 ** k)
        assert lsh.rho(tk) == pytest.approx(lsh.rho(fam), rel=1e-12)


def test_choose_params_frozen():
    fam = BitSamplingFamily(d=80, r=8, c=2)
    k, L = lsh.choose_params(10 ** 4, fam, c_rep=2.0)
    assert k == 42
    assert L == 168  # ceil(2 / 0.9^42), 2/0.9^42 = 167.049...


def test_estimate_collision_matches_rate():
    fam = BitSamplingFamily(d=64, r=4, c=3)
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=64, dtype=np.uint8)
    other = bits.copy()
    other[:16] ^= 1
    x, y = core.pack_bits(bits), core.pack_bits(other)
    trials = 4000
    est = lsh.estimate_collision(fam, x, y, trials=trials, seed=1)
    expect = 1 - 16 / 64
    sigma = np.sqrt(expect * (1 - expect) / trials)
    assert abs(est - expect) < 4 * sigma


def test_tensored_collision_multiplies():
    fam = BitSamplingFamily(d=64, r=4, c=3)
    rng = np.random.default_rng(2)
    bits = rng.integers(0, 2, size=64, dtype=np.uint8)
    other = bits.copy()
    other[:32] ^= 1
    x, y = core.pack_bits(bits), core.pack_bits(other)
    est = lsh.estimate_collision(lsh.tensor(fam, 3), x, y, trials=4000, seed=3)
    expect = 0.5 ** 3
    sigma = np.sqrt(expect * (1 - expect) / 4000)
    assert abs(est - expect) < 4 * sigma


def test_index_hard_guarantee_and_recall():
    rng = np.random.default_rng(4)
    n, d, r, c = 400, 128, 4, 3
    ds, q = _planted_hamming(rng, n, d, r)
    fam = BitSamplingFamily(d=d, r=r, c=c)
    k, L = lsh.choose_params(n, fam)
    hits = 0
    for seed in range(20):
        index = lsh.build_index(ds, fam, k, L, seed=seed)
        got, stats = index.query(q)
        if got is not None:
            assert core.hamming_distance(ds.points[got], q) <= c * r
            hits += 1
        assert stats.distance_evals <= stats.candidates_examined
        assert stats.tables_probed <= L
    assert hits >= 15  # per-run failure prob is about e^-2


def test_index_returns_none_for_isolated_query():
    rng = np.random.default_rng(5)
    ds, _ = _planted_hamming(rng, 100, 256, 4)
    far = core.pack_bits(1 - core.unpack_bits(ds.points[0], 256))
    fam = BitSamplingFamily(d=256, r=4, c=2)
    k, L = lsh.choose_params(100, fam)
    got, _ = index_got = lsh.build_index(ds, fam, k, L, seed=9).query(far)
    assert got is None


def test_index_k0_single_bucket():
    rng = np.random.default_rng(6)
    ds, q = _planted_hamming(rng, 50, 64, 2)
    fam = BitSamplingFamily(d=64, r=2, c=3)
    index = lsh.build_index(ds, fam, k=0, L=1, seed=7)
    assert len(index.tables[0]) == 1
    bucket = next(iter(index.tables[0].values()))
    assert np.array_equal(bucket, np.arange(50))
    got, stats = index.query(q)
    assert got is not None  # exhaustive bucket scan must find the planted point


def test_index_determinism():
    rng = np.random.default_rng(8)
    ds, q = _planted_hamming(rng, 120, 64, 3)
    fam = BitSamplingFamily(d=64, r=3, c=2)
    a = lsh.build_index(ds, fam, k=6, L=8, seed=42)
    b = lsh.build_index(ds, fam, k=6, L=8, seed=42)
    for ta, tb in zip(a.tables, b.tables):
        assert ta.keys() == tb.keys()
        for key in ta:
            assert np.array_equal(ta[key], tb[key])
    ra, sa = a.query(q)
    rb, sb = b.query(q)
    assert ra == rb and sa == sb


def test_query_many_matches_query():
    rng = np.random.default_rng(10)
    n, d = 150, 64
    ds = core.bit_dataset(core.random_bits(rng, n, d), d)
    fam = BitSamplingFamily(d=d, r=3, c=2)
    index = lsh.build_index(ds, fam, k=5, L=7, seed=11)
    # mix of dataset points (guaranteed hits) and fresh queries
    Q = np.vstack([ds.points[:40], core.random_bits(rng, 20, d)])
    for stop_early in (True, False):
        batch = index.query_many(Q, stop_early=stop_early)
        for t in range(Q.shape[0]):
            idx, stats = index.query(Q[t], stop_early=stop_early)
            assert batch[t][0] == idx
            assert batch[t][1] == stats
    with pytest.raises(DataError):
        index.query_many(ds.points[0])  # 1-d input
    with pytest.raises(DataError):
        index.query_many(np.zeros((3, 2), dtype=np.uint64))


def test_index_validation():
    rng = np.random.default_rng(10)
    ds, q = _planted_hamming(rng, 20, 64, 2)
    fam = BitSamplingFamily(d=64, r=2, c=3)
    dense = core.dense_dataset(np.zeros((5, 3)), core.L2)
    with pytest.raises(DataError):
        lsh.build_index(dense, fam, k=2, L=2, seed=0)
    index = lsh.build_index(ds, fam, k=2, L=2, seed=0)
    with pytest.raises(DataError):
        index.query(np.zeros(3))
    with pytest.raises(DataError):
        lsh.choose_params(0, fam)
    with pytest.raises(DataError):
        lsh.tensor(fam, 0)


def test_family_sensitivity_validation():
    with pytest.raises(DataError):
        BitSamplingFamily(d=16, r=8, c=2)  # cr = d
    with pytest.raises(DataError):
        BitSamplingFamily(d=16, r=0, c=2)
