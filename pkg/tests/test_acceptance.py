"""Acceptance gate: thirteen end-to-end checks, one test (and one printed
pass line) each. Tolerances, instance sizes, and runtime budgets are pinned;
statistical checks run on frozen seeds so reruns are deterministic.
"""

import math
import time

import numpy as np
import pytest

from annkit import core, cpair, ddpart, families, linf, lsh, seeds
from annkit.bench import cli, datasets, experiments, reports


def _done(num, label, t0, budget, detail=""):
    elapsed = time.perf_counter() - t0
    assert elapsed < budget, f"criterion {num} exceeded {budget}s ({elapsed:.1f}s)"
    extra = f" {detail}" if detail else ""
    print(f"criterion {num:02d} {label}: PASS ({elapsed:.1f}s{extra})")


# -- 1: query/space trade-off anchor values -----------------------------------

def test_c01_tradeoff_frontier_exact():
    t0 = time.perf_counter()
    pts = ddpart.tradeoff_frontier(2.0, num=50)
    assert len(pts) == 50
    rho_s0, rho_q0 = pts[0]
    assert abs(rho_s0 - 0.0) <= 1e-12
    assert abs(rho_q0 - 7.0 / 16.0) <= 1e-12
    # the balanced point sits on the 50-sample grid for c=2
    rho_sb, rho_qb = pts[9]
    assert abs(rho_sb - 1.0 / 7.0) <= 1e-12
    assert abs(rho_qb - 1.0 / 7.0) <= 1e-12
    rho_s1, rho_q1 = pts[-1]
    assert abs(rho_q1 - 0.0) <= 1e-12
    assert abs((1.0 + rho_s1) - 16.0 / 9.0) <= 1e-12  # total space exponent
    reg = ddpart.tradeoff_regimes(2.0)
    assert abs(reg["near_linear_space"]["rho_q"] - 7.0 / 16.0) <= 1e-12
    assert abs(reg["balanced"]["rho_s"] - 1.0 / 7.0) <= 1e-12
    assert abs(reg["fast_queries"]["space_exponent"] - 16.0 / 9.0) <= 1e-12
    _done(1, "trade-off frontier anchors", t0, 1.0)


# -- 2: spherical exponent endpoints -------------------------------------------

def test_c02_spherical_rho_endpoints():
    t0 = time.perf_counter()
    for c in (1.5, 2.0, 3.0):
        assert abs(families.rho_spherical(c, 0.0) - 1.0 / c ** 2) <= 1e-12
        assert abs(families.rho_spherical(c, 1e-9) - 1.0 / c ** 2) <= 1e-9
        r = math.sqrt(2.0) / c
        assert abs(families.rho_spherical(c, r) - 1.0 / (2 * c * c - 1)) <= 1e-12
    _done(2, "spherical rho endpoints", t0, 1.0)


# -- 3: bit-sampling collision rate --------------------------------------------

def test_c03_bit_sampling_collision_rate():
    t0 = time.perf_counter()
    d, trials = 128, 10_000
    fam = families.BitSamplingFamily(d, 8, 2.0)
    rng = np.random.default_rng(300)
    bits = rng.integers(0, 2, size=d, dtype=np.uint8)
    x = core.pack_bits(bits)
    checked = []
    for gi, h in enumerate((8, 16, 32, 64, 96)):
        other = bits.copy()
        other[rng.choice(d, h, replace=False)] ^= 1
        y = core.pack_bits(other)
        est = lsh.estimate_collision(fam, x, y, trials=trials, seed=301 + gi)
        expect = 1.0 - h / d
        sigma = math.sqrt(expect * (1.0 - expect) / trials)
        assert abs(est - expect) <= 3.0 * sigma, (h, est, expect)
        checked.append(h)
    assert len(checked) == 5
    _done(3, "bit-sampling collision rate", t0, 30.0)


# -- 4: index hard guarantee and recall ----------------------------------------

def test_c04_index_guarantee_and_recall():
    t0 = time.perf_counter()
    n, d, r, c = 10_000, 128, 8.0, 2.0
    inst = datasets.planted_near(n, d, "hamming", r, 200, seed=0)
    adapter = experiments.build_algo("lsh-bit", inst.data, c, r, seed=0)
    rows, summary = experiments.run_recall(adapter, inst.data, inst.queries,
                                           c, r, gt=inst.gt)
    # run_recall raises if any answer exceeds c*r; re-check every row anyway
    for qi, idx, dist, within, cands in rows:
        if idx >= 0:
            assert dist <= c * r + 1e-9
    assert summary.eligible == 200
    assert summary.recall is not None and summary.recall >= 0.85
    _done(4, "lsh hard bound + recall", t0, 120.0,
          f"recall={summary.recall:.3f}")


# -- 5: candidate-count growth exponent ----------------------------------------

def test_c05_candidate_growth_exponent():
    t0 = time.perf_counter()
    ns = [1024, 2048, 4096, 8192, 16384]
    bit = experiments.estimate_rho("bit", ns, 128, 8.0, 2.0, 10, seed=0)
    assert abs(bit.rho_hat - bit.declared) <= 0.15
    sph = experiments.estimate_rho("spherical", ns, 128,
                                   math.sqrt(2.0) / 2.0, 2.0, 10, seed=0)
    assert sph.rho_hat < bit.rho_hat
    _done(5, "fitted rho exponents", t0, 600.0,
          f"bit={bit.rho_hat:.3f} (declared {bit.declared:.3f}) "
          f"spherical={sph.rho_hat:.3f}")


# -- 6: spherical collision analytics -------------------------------------------

def test_c06_spherical_collision_analytics():
    t0 = time.perf_counter()
    s = math.sqrt(2.0)
    for eta in (0.5, 1.0, 1.5, 2.0):
        tail = float(np.float64(math.erfc(eta / math.sqrt(2.0))) / 2.0)
        closed = tail * tail / (2.0 * tail - tail * tail)
        assert abs(families.spherical_collision(s, eta) - closed) <= 1e-6
    for r, c in ((0.5, 2.0), (0.4, 2.5)):
        gaps = [families.spherical_rho_gap(c, r, eta)
                for eta in (0.8, 1.2, 1.6, 2.0)]
        assert all(g >= -1e-12 for g in gaps)
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
    _done(6, "threshold-family collision analytics", t0, 60.0)


# -- 7: min-stability calibration ------------------------------------------------

def test_c07_divisor_embedding_cdfs():
    t0 = time.perf_counter()
    factors = (0.5, 1.0, 2.0)
    rows1, _ = experiments.embed_calibration("l1", d=32, p=2.0, trials=10_000,
                                             factors=factors, seed=700)
    rows2, _ = experiments.embed_calibration("lp", d=32, p=2.0, trials=10_000,
                                             factors=factors, seed=701)
    for rows in (rows1, rows2):
        assert len(rows) == 3
        for _, t, emp, pred, err in rows:
            assert err <= 0.02, (t, emp, pred)
    _done(7, "l1/l2 embedding tail identities", t0, 60.0)


# -- 8 and 9 share one tree over the uniform benchmark ---------------------------

@pytest.fixture(scope="module")
def uniform_linf_tree():
    rng = np.random.default_rng(800)
    n, d = 10_000, 16
    X = rng.uniform(0.0, 40.0, (n, d))
    ds = core.dense_dataset(X, core.LINF)
    t_build0 = time.perf_counter()
    tree = linf.LinfTree(ds, 1.0, eps=1.0)
    build_s = time.perf_counter() - t_build0
    m = 100
    Q = X[rng.choice(n, m, replace=False)].copy()
    delta = rng.uniform(-1.0, 1.0, (m, d))
    j = np.argmax(np.abs(delta), axis=1)
    delta[np.arange(m), j] = np.where(delta[np.arange(m), j] >= 0, 1.0, -1.0)
    Q += delta  # every query has its base point at linf distance exactly 1
    return ds, tree, Q, build_s


def test_c08_linf_tree_guarantees(uniform_linf_tree):
    t0 = time.perf_counter()
    ds, tree, Q, build_s = uniform_linf_tree
    n, d = ds.n, ds.dim
    paths = []
    for i in range(Q.shape[0]):
        idx, st = tree.query(Q[i])
        paths.append(st.path_length)
        assert idx is not None
        dist = float(np.abs(ds.points[idx] - Q[i]).max())
        assert dist <= tree.guarantee + 1e-9  # (2R+1) * r with r = 1
    bs = tree.stats
    c_space = bs.total_leaf_points / n ** (1.0 + tree.eps)
    c_depth = max(paths) / (d * math.log(n))
    assert c_space <= 1.0
    assert c_depth <= 1.0
    elapsed_budget_used = build_s  # fixture build counts against this budget
    assert elapsed_budget_used + (time.perf_counter() - t0) < 180.0
    print(f"criterion 08 linf tree guarantees: PASS "
          f"(build {build_s:.1f}s, C_space={c_space:.2e}, C_depth={c_depth:.2f}, "
          f"replication={bs.replication_factor:.1f}x, max_path={max(paths)})")


def test_c09_cut_certificate_audit(uniform_linf_tree):
    t0 = time.perf_counter()
    ds, tree, _, _ = uniform_linf_tree
    d = ds.dim
    expo = 1.0 + tree.eps
    scaled = ds.points / tree.r
    audited = [0]

    def walk(node, X):
        if isinstance(node, linf.Leaf):
            return
        if isinstance(node, linf.BallNode):
            inside = np.abs(X - node.center[None, :]).max(axis=1) <= node.radius + 1e-12
            walk(node.outside, X[~inside])
            return
        m = X.shape[0]
        col = X[:, node.coord]
        u = node.threshold
        left = int(np.sum(col <= u + 1.0))
        right = int(np.sum(col >= u - 1.0))
        a = int(np.sum(col < u - 1.0))
        c_mass = int(np.sum(col > u + 1.0))
        cert = (left / m) ** expo + (right / m) ** expo
        assert cert <= 1.0 + 1e-12
        need = tree.alpha_side * m / d
        assert a + 1e-9 >= need and c_mass + 1e-9 >= need
        audited[0] += 1
        walk(node.left, X[col <= u + 1.0])
        walk(node.right, X[col >= u - 1.0])

    import sys
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10 * tree.stats.max_depth + 1000))
    try:
        walk(tree.root, scaled)
    finally:
        sys.setrecursionlimit(limit)
    assert audited[0] == tree.stats.cut_nodes  # the audit reached every cut
    _done(9, "cut certificate audit", t0, 60.0, f"cuts={audited[0]}")


# -- 10: closest-pair drivers ------------------------------------------------------

def test_c10_closest_pair_success_rates():
    t0 = time.perf_counter()
    fam = families.BitSamplingFamily(128, 8, 2.0)

    def builder(sub, bseed):
        kk, ll = lsh.choose_params(sub.n, fam)
        return lsh.build_index(sub, fam, kk, ll, bseed)

    wins = 0
    for t in range(50):
        s = seeds.child_seed(900, f"acc/cp/{t}")
        inst = datasets.planted_cp(1000, 128, "hamming", 8, s)
        got = cpair.cp_via_ann(inst.data, 2.0, 8.0, builder, seed=s)
        if got is not None:
            i, j = got
            dij = core.distance(core.HAMMING, inst.data.points[i],
                                inst.data.points[j])
            assert dij <= 16.0  # returned pairs must verify in the metric
            wins += 1
    assert wins / 50 >= 0.66

    ip_wins = 0
    for t in range(20):
        s = seeds.child_seed(901, f"acc/ip/{t}")
        inst = cpair.planted_ip_instance(2048, 2048, 0.05, 10.0, s)
        got = cpair.ip_grouped(inst, 16, seed=s)
        if got is not None:
            gi, gj = got
            ip = float(inst.points[gi] @ inst.points[gj])
            if got == inst.pair:
                assert ip >= 0.5 - 1e-9
                ip_wins += 1
    assert ip_wins / 20 >= 0.8
    _done(10, "closest-pair success rates", t0, 300.0,
          f"ann={wins}/50 grouped={ip_wins}/20")


# -- 11: amplification identities ----------------------------------------------------

def test_c11_amplification_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1100)
    for k in (1, 2, 3, 4):
        for _ in range(20):
            x = rng.standard_normal(6)
            y = rng.standard_normal(6)
            ip = float(x @ y)
            tx = cpair.tensor_embed(x, k)
            ty = cpair.tensor_embed(y, k)
            assert float(tx @ ty) == pytest.approx(ip ** k, rel=1e-9, abs=1e-9)
            x_u, y_u = x / np.linalg.norm(x), y / np.linalg.norm(y)
            f = cpair.chebyshev_embed(x_u, k, "left")
            g = cpair.chebyshev_embed(y_u, k, "right")
            want = float(cpair.chebyshev_value(k, float(x_u @ y_u)))
            assert float(f @ g) == pytest.approx(want, rel=1e-9, abs=1e-9)
    k, eps = 10, 0.04
    ratio = float(cpair.chebyshev_value(k, 1.0 + eps))  # T_k(1) = 1
    assert ratio == pytest.approx(math.cosh(k * math.acosh(1.0 + eps)), rel=1e-9)
    assert ratio > (1.0 + eps) ** k
    _done(11, "tensor/Chebyshev identities", t0, 30.0,
          f"T_10(1.04)={ratio:.4f} vs 1.04^10={(1.04)**10:.4f}")


# -- 12: oracle equivalence -------------------------------------------------------

def _independent_nn(points, q, dist_fn):
    best_i, best_d = 0, dist_fn(points[0], q)
    for i in range(1, len(points)):
        di = dist_fn(points[i], q)
        if di < best_d:
            best_i, best_d = i, di
    return best_i, best_d


def _independent_cp(points, dist_fn):
    best = (0, 1, dist_fn(points[0], points[1]))
    for i in range(len(points) - 1):
        for j in range(i + 1, len(points)):
            dij = dist_fn(points[i], points[j])
            if dij < best[2]:
                best = (i, j, dij)
    return best


def test_c12_oracle_equivalence():
    t0 = time.perf_counter()
    from annkit import dimred

    rng = np.random.default_rng(1200)
    n, d, k = 300, 48, 12
    ds = core.bit_dataset(core.random_bits(rng, n, d), d)
    table = dimred.HammingLookup.build(ds, r=4.0, eps=1.0, k=k, seed=5)
    codes = table.projection.apply_many(ds.points)[:, 0].astype(np.int64)
    cube = np.arange(1 << k, dtype=np.int64)
    scan = np.bitwise_count((cube[:, None] ^ codes[None, :]).astype(np.uint64))
    best = scan.min(axis=1)
    assert np.array_equal(table.dist, best)  # table distances == full scan
    owner_dist = scan[cube, table.owner]
    assert np.array_equal(owner_dist, best)  # every owner attains the optimum

    def ham(a, b):
        return sum(int(x ^ y).bit_count() for x, y in zip(a.tolist(), b.tolist()))

    def euc(a, b):
        return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))

    for inst in range(100):
        r2 = np.random.default_rng(1300 + inst)
        if inst % 2 == 0:
            pts = core.random_bits(r2, 30, 16)
            data = core.bit_dataset(pts, 16)
            fn = ham
        else:
            pts = r2.standard_normal((30, 6))
            data = core.dense_dataset(pts, core.L2)
            fn = euc
        q = pts[r2.integers(0, 30)].copy()
        got_i, got_d = core.brute_force_nn(data, q)
        ref_i, ref_d = _independent_nn(list(pts), q, fn)
        assert got_i == ref_i and got_d == pytest.approx(ref_d, abs=1e-9)
        gi, gj, gd = core.brute_force_cp(data)
        ri, rj, rd = _independent_cp(list(pts), fn)
        assert (gi, gj) == (ri, rj) and gd == pytest.approx(rd, abs=1e-9)
    _done(12, "lookup table and brute-force oracles", t0, 120.0)


# -- 13: rerun determinism ---------------------------------------------------------

def _snapshot(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


def test_c13_subcommand_rerun_determinism(tmp_path):
    t0 = time.perf_counter()
    work = tmp_path
    g = work / "g"
    li = work / "li"
    commands = {
        "gen": ["gen", "--mode", "near", "--n", "120", "--d", "32",
                "--metric", "hamming", "--r", "4", "--queries", "5",
                "--seed", "3", "--out", str(g)],
        "build": ["build", "--data", f"{g}.annb", "--algo", "lsh-bit",
                  "--c", "2", "--r", "4", "--seed", "5",
                  "--out", str(work / "build.csv")],
        "query": ["query", "--data", f"{g}.annb",
                  "--queries", str(work / "g_queries.annb"),
                  "--gt", str(work / "g_gt.csv"), "--algo", "lsh-bit",
                  "--c", "2", "--r", "4", "--seed", "5",
                  "--out", str(work / "query.csv")],
        "bench": ["bench", "--data", f"{g}.annb",
                  "--queries", str(work / "g_queries.annb"),
                  "--gt", str(work / "g_gt.csv"), "--algo", "lsh-bit",
                  "--c", "2", "--r", "4", "--seed", "5",
                  "--out", str(work / "bench.csv")],
        "rho": ["rho", "--family", "bit", "--ns", "64,128,256,512",
                "--d", "64", "--r", "4", "--queries", "5", "--seed", "0",
                "--out", str(work / "rho.csv")],
        "tradeoff": ["tradeoff", "--cs", "1.5,2,3", "--seed", "0",
                     "--out", str(work / "tradeoff.csv")],
        "cp": ["cp", "--mode", "grouped", "--n", "96", "--d", "128",
               "--theta", "0.05", "--c", "10", "--g", "4", "--seeds", "2",
               "--seed", "0", "--out", str(work / "cp.csv")],
        "embed-calibrate": ["embed-calibrate", "--kind", "l1", "--d", "16",
                            "--trials", "2000", "--seed", "0",
                            "--out", str(work / "cal.csv")],
        "gen-linf": ["gen", "--mode", "near", "--n", "300", "--d", "8",
                     "--metric", "linf", "--r", "1", "--queries", "4",
                     "--seed", "2", "--out", str(li)],
        "linf": ["linf", "--data", f"{li}.annb",
                 "--queries", str(work / "li_queries.annb"),
                 "--gt", str(work / "li_gt.csv"), "--r", "1", "--seed", "0",
                 "--out", str(work / "linf.csv")],
    }
    # first pass produces every artifact, second pass must reproduce bytes
    for name, argv in commands.items():
        assert cli.main(argv) == 0, name
    first = _snapshot(work)
    for name, argv in commands.items():
        assert cli.main(argv) == 0, name
    second = _snapshot(work)
    assert first.keys() == second.keys()
    diff = [name for name in first if first[name] != second[name]]
    assert diff == [], f"rerun changed: {diff}"
    n_reports = sum(1 for name in first if name.endswith(".csv"))
    _done(13, "byte-identical reruns", t0, 300.0,
          f"{len(first)} files ({n_reports} delimited) stable")