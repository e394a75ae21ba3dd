"""Experiment drivers behind the CLI subcommands.

All drivers are deterministic functions of their arguments plus one
seed; wall-clock time never influences any reported value. Returned
points are re-verified against the promised distance bound here, so a
violation anywhere surfaces as an InvariantError (exit code 3) instead
of a silently wrong report.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import core, cpair, ddpart, embed, families, linf, lsh, seeds
from ..errors import DataError, InvariantError
from . import datasets

QUERY_ALGOS = ("brute", "scan", "lsh-bit", "lsh-gauss", "lsh-spherical",
               "ddtree", "annl1")
BUILD_ALGOS = QUERY_ALGOS + ("linf-tree",)


# -- index adapters -----------------------------------------------------------


@dataclass
class IndexAdapter:
    """Uniform face over the index types: query(qi, q) -> (idx, candidates)."""
    name: str
    stats: dict
    _query: callable

    def query(self, qi: int, q):
        return self._query(qi, q)


def build_algo(algo: str, dataset: core.Dataset, c: float, r: float, seed: int,
               queries: Optional[np.ndarray] = None, k: Optional[int] = None,
               L: Optional[int] = None, eta: float = 1.5,
               m_structs: int = 6) -> IndexAdapter:
    kind = dataset.metric.kind
    if algo in ("brute", "scan"):
        cr = c * r

        def q_brute(qi, q):
            idx, dist = core.brute_force_nn(dataset, q)
            return (idx if dist <= cr else None), dataset.n

        return IndexAdapter(algo, {"points": dataset.n}, q_brute)

    if algo in ("lsh-bit", "lsh-gauss", "lsh-spherical"):
        if algo == "lsh-bit":
            if kind != "hamming":
                raise DataError("lsh-bit requires a hamming dataset")
            fam = families.BitSamplingFamily(dataset.dim, r, c)
            index_ds, index_q, scale = dataset, queries, 1.0
        elif algo == "lsh-gauss":
            if kind != "l2":
                raise DataError("lsh-gauss requires an l2 dataset")
            fam = families.PStableFamily(dataset.dim, r, c)
            index_ds, index_q, scale = dataset, queries, 1.0
        else:
            if kind != "l2":
                raise DataError("lsh-spherical requires an l2 dataset")
            lifted, lifted_q, scale = ddpart.lift_to_sphere(dataset.points, queries)
            fam = families.SphericalFamily(lifted.shape[1], r / scale, c, eta)
            index_ds, index_q = core.dense_dataset(lifted, core.L2), lifted_q
        if k is None or L is None:
            k_auto, L_auto = lsh.choose_params(dataset.n, fam)
            k = k_auto if k is None else k
            L = L_auto if L is None else L
        index = lsh.build_index(index_ds, fam, k, L, seed)
        stats = {"k": k, "L": L, "rho": lsh.rho(fam), "p1": fam.p1, "p2": fam.p2,
                 "buckets": sum(len(t) for t in index.tables)}

        def q_lsh(qi, q):
            if scale != 1.0:
                if index_q is None:
                    raise DataError("lifted index needs the query set at build time")
                q = index_q[qi]
            idx, st = index.query(q)
            return idx, st.candidates_examined

        return IndexAdapter(algo, stats, q_lsh)

    if algo == "ddtree":
        if kind != "l2":
            raise DataError("ddtree requires an l2 dataset")
        lifted, lifted_q, scale = ddpart.lift_to_sphere(dataset.points, queries)
        tree = ddpart.dd_build(core.dense_dataset(lifted, core.L2), seed=seed)
        rep = tree.report
        stats = {"levels": len(rep.levels), "clusters": rep.cluster_count,
                 "splits": rep.split_count, "max_depth": rep.max_depth,
                 "forced_leaves": rep.forced_leaves}

        def q_dd(qi, q):
            if lifted_q is None:
                raise DataError("lifted index needs the query set at build time")
            return tree.query(lifted_q[qi], c, r / scale)

        return IndexAdapter(algo, stats, q_dd)

    if algo == "annl1":
        if kind != "l1":
            raise DataError("annl1 requires an l1 dataset")
        index = embed.AnnL1(dataset, c, r, m_structs=m_structs, seed=seed)
        stats = {"structs": m_structs, "r_embed": index.r_embed}

        def q_l1(qi, q):
            idx, st = index.query(q)
            return idx, st["candidates"]

        return IndexAdapter(algo, stats, q_l1)

    if algo == "linf-tree":
        if kind != "linf":
            raise DataError("linf-tree requires an linf dataset")
        tree = linf.LinfTree(dataset, r)
        bs = tree.stats
        stats = {"nodes": bs.nodes, "cut_nodes": bs.cut_nodes,
                 "ball_nodes": bs.ball_nodes, "leaves": bs.leaves,
                 "replication_factor": bs.replication_factor,
                 "levels": len(bs.levels), "guarantee": tree.guarantee}

        def q_linf(qi, q):
            idx, st = tree.query(q)
            return idx, st.candidates

        return IndexAdapter(algo, stats, q_linf)

    raise DataError(f"unknown algorithm {algo!r}")


# -- recall runs --------------------------------------------------------------


@dataclass
class RecallSummary:
    queries: int
    eligible: int
    answered: int
    hits: int
    recall: Optional[float]
    cand_p50: float
    cand_p90: float
    cand_max: float


def verify_near_gt(dataset: core.Dataset, queries: core.Dataset, gt, r: float) -> None:
    """Brute-force audit of a near-neighbor ground-truth file."""
    for qid, pid, dist in gt:
        if not (0 <= qid < queries.n and 0 <= pid < dataset.n):
            raise InvariantError("ground-truth row out of range")
        q = queries.points[qid]
        actual = float(core.distance(dataset.metric, q, dataset.points[pid]))
        if abs(actual - dist) > 1e-9 * max(1.0, abs(dist)):
            raise InvariantError("ground-truth distance does not recompute")
        nn_idx, nn_dist = core.brute_force_nn(dataset, q)
        if nn_dist < actual - 1e-9 * max(1.0, actual):
            raise InvariantError("ground truth is not the nearest neighbor")
        if dist > r:
            raise InvariantError("ground-truth neighbor is outside radius r")


def run_recall(adapter: IndexAdapter, dataset: core.Dataset,
               queries: core.Dataset, c: float, r: float, gt=None):
    """Per-query rows plus an aggregate summary.

    Any point the index returns is re-checked against the cr bound; the
    recall denominator is the set of queries that provably have a
    neighbor within r.
    """
    if dataset.metric.kind != queries.metric.kind:
        raise DataError("query metric does not match the dataset metric")
    if gt is not None:
        verify_near_gt(dataset, queries, gt, r)
        eligible = {qid for qid, _, dist in gt if dist <= r}
    else:
        eligible = set()
        for qi in range(queries.n):
            _, nn_dist = core.brute_force_nn(dataset, queries.points[qi])
            if nn_dist <= r:
                eligible.add(qi)
    rows, cands = [], []
    answered = hits = 0
    for qi in range(queries.n):
        q = queries.points[qi]
        idx, ncand = adapter.query(qi, q)
        cands.append(max(int(ncand), 0))
        if idx is None:
            rows.append((qi, -1, None, 0, ncand))
            continue
        dist = float(core.distance(dataset.metric, q, dataset.points[idx]))
        if dist > c * r + 1e-9 * max(1.0, c * r):
            raise InvariantError("index returned a point beyond the cr bound")
        answered += 1
        if qi in eligible:
            hits += 1
        rows.append((qi, int(idx), dist, 1, ncand))
    from . import reports

    recall = hits / len(eligible) if eligible else None
    summary = RecallSummary(
        queries=queries.n, eligible=len(eligible), answered=answered, hits=hits,
        recall=recall, cand_p50=reports.quantile(cands, 0.5),
        cand_p90=reports.quantile(cands, 0.9), cand_max=float(max(cands)))
    return rows, summary


# -- candidate-growth exponent -------------------------------------------------


@dataclass
class RhoFit:
    ns: list
    medians: list
    rho_hat: float
    intercept: float
    declared: Optional[float]
    residuals: list = field(default_factory=list)


def estimate_rho(family_kind: str, ns, d: int, r: float, c: float,
                 queries_per_n: int, seed: int, eta: float = 1.2,
                 c_rep: float = 5.0) -> RhoFit:
    """Least-squares slope of log median candidates against log n.

    Each grid point gets its own verified ring instance (every dataset
    point on the c*r shell of some query, nothing within r) and its own
    index with parameters chosen for that n, so the per-query candidate
    count is a pure far-collision statistic.
    """
    ns = sorted(int(n) for n in ns)
    if len(set(ns)) < 4:
        raise DataError("need at least 4 distinct grid sizes")
    if any(n < 2 for n in ns):
        raise DataError("grid sizes must be at least 2")
    medians, declared = [], None
    for n in ns:
        inst_seed = seeds.child_seed(seed, f"bench/rho/{family_kind}/{n}")
        ring_kind = "sphere" if family_kind == "spherical" else "hamming"
        inst = datasets.planted_rho_ring(n, d, ring_kind, r, c,
                                         queries_per_n, inst_seed)
        if family_kind == "scan":
            counts = [n] * inst.queries.n
            declared = 1.0
        elif family_kind in ("bit", "spherical"):
            if family_kind == "bit":
                fam = families.BitSamplingFamily(d, r, c)
            else:
                fam = families.SphericalFamily(d, r, c, eta)
            declared = lsh.rho(fam)
            k, L = lsh.choose_params(n, fam, c_rep=c_rep)
            index = lsh.build_index(inst.data, fam, k, L, inst_seed)
            counts = []
            for qi in range(inst.queries.n):
                # scan every table: the n^rho growth lives in the total
                # bucket work, which early stopping would truncate
                _, st = index.query(inst.queries.points[qi], stop_early=False)
                counts.append(st.candidates_examined)
        else:
            raise DataError(f"unknown family kind {family_kind!r}")
        medians.append(float(np.median(counts)))
    logs_n = np.log(np.asarray(ns, dtype=np.float64))
    logs_m = np.log(np.maximum(np.asarray(medians), 1.0))
    slope, intercept = np.polyfit(logs_n, logs_m, 1)
    resid = logs_m - (slope * logs_n + intercept)
    return RhoFit(ns=ns, medians=medians, rho_hat=float(slope),
                  intercept=float(intercept), declared=declared,
                  residuals=[float(v) for v in resid])


# -- trade-off frontier ---------------------------------------------------------


def tradeoff_table(cs, samples: int = 50):
    """Frontier rows (c, rho_s, rho_q, space_exponent), each satisfying
    the frontier equality; space_exponent = 1 + rho_s."""
    rows = []
    for c in cs:
        for rho_s, rho_q in ddpart.tradeoff_frontier(c, num=samples):
            rows.append((float(c), rho_s, rho_q, 1.0 + rho_s))
    return rows


# -- closest-pair drivers --------------------------------------------------------


CP_COLUMNS = ("seed", "mode", "n", "d", "g", "k", "success", "wall_time")


def cp_experiment(mode: str, n: int, d: int, r: float, c: float, theta: float,
                  g: int, k: int, n_seeds: int, seed: int,
                  backend: str = "naive", timings: bool = False):
    """One row per instance seed; success is re-verified ground truth."""
    import time

    if n_seeds < 1:
        raise DataError("need at least one seed")
    rows = []
    for t in range(n_seeds):
        inst_seed = seeds.child_seed(seed, f"bench/cp/{mode}/{t}")
        start = time.perf_counter()
        if mode == "ann":
            inst = datasets.planted_cp(n, d, "hamming", r, inst_seed)
            fam = families.BitSamplingFamily(d, r, c)

            def builder(sub, bseed):
                kk, LL = lsh.choose_params(sub.n, fam)
                return lsh.build_index(sub, fam, kk, LL, bseed)

            got = cpair.cp_via_ann(inst.data, c, r, builder, seed=inst_seed)
            if got is not None:
                i, j = got
                dij = core.distance(core.HAMMING, inst.data.points[i],
                                    inst.data.points[j])
                if dij > c * r:
                    raise InvariantError("cp_via_ann pair beyond the cr bound")
            success = got is not None
            g_out = k_out = None
        elif mode == "grouped":
            inst = cpair.planted_ip_instance(n, d, theta, c, inst_seed)
            got = cpair.ip_grouped(inst, g, backend=backend, seed=inst_seed)
            success = got == inst.pair
            g_out, k_out = g, None
        elif mode in ("tensor", "chebyshev"):
            inst = datasets.planted_cp(n, d, "l2", r, inst_seed, sphere=True)
            got = cpair.cp_pipeline(inst.data, eps=1.0, r=r, mode=mode, k=k,
                                    g=g, theta=theta, backend=backend,
                                    seed=inst_seed)
            if got is not None:
                i, j = got
                dij = float(np.linalg.norm(inst.data.points[i] - inst.data.points[j]))
                if dij > 2.0 * r + 1e-9:
                    raise InvariantError("pipeline pair beyond the (1+eps) r bound")
            success = got == inst.meta["pair"]
            g_out, k_out = g, k
        else:
            raise DataError(f"unknown cp mode {mode!r}")
        wall = time.perf_counter() - start if timings else None
        rows.append((t, mode, n, d, g_out, k_out, int(success), wall))
    return rows


# -- embedding calibration ---------------------------------------------------------


def embed_calibration(kind: str, d: int, p: float, trials: int,
                      factors, seed: int):
    """Empirical vs closed-form P[sup_i |x_i|/u_i <= t] at t = factor * scale."""
    if kind not in ("l1", "lp"):
        raise DataError("calibration supports the l1 and lp embeddings")
    if trials < 1 or d < 1:
        raise DataError("trials and d must be positive")
    rng = seeds.stream(seed, "bench/calibrate")
    x = rng.standard_normal(d)
    U = embed.sample_divisors(kind, (trials, d), rng, p=p if kind == "lp" else None)
    sup = np.max(np.abs(x)[None, :] / U, axis=1)
    if kind == "l1":
        scale = float(np.abs(x).sum())
        predict = lambda t: math.exp(-scale / t)
    else:
        scale = float((np.abs(x) ** p).sum() ** (1.0 / p))
        predict = lambda t: math.exp(-((scale / t) ** p))
    rows = []
    for f in factors:
        t = float(f) * scale
        emp = float(np.mean(sup <= t))
        pred = predict(t)
        rows.append((kind, t, emp, pred, abs(emp - pred)))
    meta = {"scale": scale, "trials": trials, "d": d}
    if kind == "lp":
        meta["p"] = p
    return rows, meta


# -- the linf tree driver -------------------------------------------------------------


def linf_experiment(dataset: core.Dataset, queries: core.Dataset, r: float,
                    eps: float, gt=None):
    """Build the tree once and answer every query, proving the guarantee."""
    if dataset.metric.kind != "linf" or queries.metric.kind != "linf":
        raise DataError("the linf driver needs linf datasets")
    if gt is not None:
        verify_near_gt(dataset, queries, gt, r)
        eligible = {qid for qid, _, dist in gt if dist <= r}
    else:
        eligible = None
    tree = linf.LinfTree(dataset, r, eps=eps)
    bound = tree.guarantee + 1e-9
    rows = []
    for qi in range(queries.n):
        q = queries.points[qi]
        idx, st = tree.query(q)
        if idx is None:
            if eligible is not None and qi in eligible:
                raise InvariantError("query with a planted neighbor got no answer")
            rows.append((qi, -1, None, 0, st.path_length, st.candidates))
            continue
        dist = float(core.distance(core.LINF, q, dataset.points[idx]))
        if dist > bound:
            raise InvariantError("returned point beyond the (2R+1) r guarantee")
        rows.append((qi, int(idx), dist, 1, st.path_length, st.candidates))
    bs = tree.stats
    header = {"radius_R": tree.R, "guarantee": tree.guarantee,
              "nodes": bs.nodes, "cut_nodes": bs.cut_nodes,
              "ball_nodes": bs.ball_nodes, "leaves": bs.leaves,
              "levels": len(bs.levels), "max_depth": bs.max_depth,
              "total_leaf_points": bs.total_leaf_points,
              "replication_factor": bs.replication_factor}
    return rows, header
