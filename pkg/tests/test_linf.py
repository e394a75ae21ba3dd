import numpy as np
import pytest

from annkit import core, linf
from annkit.errors import DataError


def _clusters(rng, k, per, d, spread, gap):
    """k well-separated blobs along coordinate 0."""
    out = []
    for i in range(k):
        c = np.zeros(d)
        c[0] = i * gap
        out.append(c[None, :] + rng.uniform(-spread, spread, size=(per, d)))
    return np.vstack(out)


def test_default_radius_frozen():
    assert linf.default_radius(16, 1.0) == 8.0   # ceil(log2 log2 16) = 2
    assert linf.default_radius(1024, 0.5) == 32.0  # ceil(log2 10) = 4, 4*4/0.5
    assert linf.default_radius(2, 1.0) == 4.0
    assert linf.default_radius(1, 2.0) == 2.0
    with pytest.raises(DataError):
        linf.default_radius(8, 0.0)


def test_find_dense_ball_planted():
    rng = np.random.default_rng(3)
    tight = rng.uniform(-0.1, 0.1, size=(30, 4))
    spread = _clusters(rng, 70, 1, 4, 0.0, 1000.0) + 5000.0
    X = np.vstack([tight, spread])
    center = linf.find_dense_ball(X, R=8.0, alpha_dense=0.25)
    assert center is not None and center < 30
    inside = np.abs(X - X[center][None, :]).max(axis=1) <= 8.0
    assert inside.sum() >= 25


def test_find_dense_ball_none_when_spread():
    X = np.arange(100, dtype=np.float64)[:, None] * 100.0
    assert linf.find_dense_ball(X, R=8.0, alpha_dense=0.25) is None


def test_find_good_cut_audit():
    rng = np.random.default_rng(5)
    X = rng.uniform(0.0, 100.0, size=(200, 3))
    got = linf.find_good_cut(X, eps=1.0, alpha_side=0.25)
    assert got is not None
    j, u = got
    n, d = X.shape
    a = int((X[:, j] < u - 1.0).sum())
    c = int((X[:, j] > u + 1.0).sum())
    assert a >= 0.25 * n / d and c >= 0.25 * n / d
    left, right = n - c, n - a
    assert (left / n) ** 2 + (right / n) ** 2 <= 1.0 + 1e-12


def test_find_good_cut_none_cases():
    X = np.full((50, 2), 7.0)
    assert linf.find_good_cut(X, eps=1.0, alpha_side=0.25) is None
    rng = np.random.default_rng(1)
    packed = rng.uniform(-0.2, 0.2, size=(80, 2))  # u +- 1 swallows everything
    assert linf.find_good_cut(packed, eps=1.0, alpha_side=0.25) is None


def _leaf_paths(tree):
    """(leaf, constraint trail) pairs; trail entries are (coord, u, side)."""
    out = []
    def walk(node, trail):
        if isinstance(node, linf.Leaf):
            out.append((node, trail))
        elif isinstance(node, linf.BallNode):
            walk(node.outside, trail + [("ball", node.center, node.radius)])
        else:
            walk(node.left, trail + [(node.coord, node.threshold, "le")])
            walk(node.right, trail + [(node.coord, node.threshold, "ge")])
    walk(tree.root, [])
    return out


def test_tree_leaves_respect_cut_constraints():
    rng = np.random.default_rng(8)
    X = _clusters(rng, 6, 50, 4, 5.0, 1000.0)
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0)
    scaled = X / tree.r
    for leaf, trail in _leaf_paths(tree):
        pts = scaled[leaf.indices]
        for item in trail:
            if item[0] == "ball":
                _, center, radius = item
                assert np.all(np.abs(pts - center[None, :]).max(axis=1) > radius)
            else:
                coord, u, side = item
                if side == "le":
                    assert np.all(pts[:, coord] <= u + 1.0)
                else:
                    assert np.all(pts[:, coord] >= u - 1.0)


def test_tree_guarantee_on_separated_clusters():
    rng = np.random.default_rng(13)
    X = _clusters(rng, 6, 50, 4, 5.0, 1000.0)
    n = X.shape[0]
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0)
    assert tree.guarantee < 1000.0 / 2  # separation makes the check meaningful
    for t in range(100):
        target = int(rng.integers(0, n))
        q = X[target] + rng.uniform(-1.0, 1.0, size=4)
        idx, stats = tree.query(q)
        assert idx is not None  # deterministic: no false negatives
        assert core.distance(ds.metric, X[idx], q) <= tree.guarantee + 1e-9
        assert stats.path_length >= 1
    far = np.full(4, 1e7)
    idx, _ = tree.query(far)
    assert idx is None


def test_tree_replication_accounting():
    rng = np.random.default_rng(21)
    X = _clusters(rng, 6, 50, 4, 5.0, 1000.0)
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0)
    s = tree.stats
    assert s.total_leaf_points >= ds.n  # every point reaches some leaf
    assert s.total_leaf_points <= ds.n ** (1.0 + tree.eps)
    assert s.replication_factor >= 1.0
    assert s.leaves >= 6
    assert s.nodes == s.leaves + s.cut_nodes + s.ball_nodes


def test_tree_dense_ball_path():
    rng = np.random.default_rng(2)
    X = rng.uniform(-0.5, 0.5, size=(200, 8))
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0, n0=32)
    assert tree.stats.ball_nodes >= 1
    assert isinstance(tree.root, linf.BallNode)
    idx, _ = tree.query(X[17] + 0.3)
    assert idx == tree.root.center_index
    idx, _ = tree.query(np.full(8, 1e6))
    assert idx is None


def test_tree_ball_does_not_swallow_far_singletons():
    rng = np.random.default_rng(31)
    dense = rng.uniform(-0.5, 0.5, size=(120, 3))
    singles = _clusters(rng, 8, 1, 3, 0.0, 500.0) + 10000.0
    X = np.vstack([dense, singles])
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0)
    for s in range(8):
        q = X[120 + s] + 0.5
        idx, _ = tree.query(q)
        assert idx is not None
        assert core.distance(ds.metric, X[idx], q) <= tree.guarantee + 1e-9
        assert idx == 120 + s  # everything else is far beyond the guarantee


def test_tree_deterministic():
    rng = np.random.default_rng(41)
    X = _clusters(rng, 4, 40, 3, 5.0, 800.0)
    ds = core.dense_dataset(X, core.LINF)
    t1 = linf.build_linf(ds, r=2.0)
    t2 = linf.build_linf(ds, r=2.0)
    assert t1.stats == t2.stats
    q = X[7] + 1.0
    i1, s1 = t1.query(q)
    i2, s2 = t2.query(q)
    assert i1 == i2 and s1 == s2


def test_tree_validation():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 10, size=(40, 3))
    with pytest.raises(DataError):
        linf.build_linf(core.dense_dataset(X, core.L2), r=1.0)
    ds = core.dense_dataset(X, core.LINF)
    with pytest.raises(DataError):
        linf.build_linf(ds, r=0.0)
    with pytest.raises(DataError):
        linf.build_linf(ds, r=1.0, eps=-0.5)
    tree = linf.build_linf(ds, r=1.0)
    with pytest.raises(DataError):
        tree.query(np.zeros(5))


def test_small_input_single_leaf():
    rng = np.random.default_rng(9)
    X = rng.uniform(0, 10, size=(10, 3))
    ds = core.dense_dataset(X, core.LINF)
    tree = linf.build_linf(ds, r=1.0, n0=32)
    assert isinstance(tree.root, linf.Leaf)
    idx, stats = tree.query(X[4])
    assert idx == 4 and stats.candidates == 10
