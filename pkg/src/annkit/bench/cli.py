"""Command-line interface.

Subcommands: gen, build, query, bench, rho, tradeoff, cp,
embed-calibrate, linf. Exit codes: 0 ok, 1 usage error, 2 data error,
3 internal invariant violation.

Parameters resolve in three layers: built-in defaults, then a key=value
config file (--config), then explicit command-line flags. Every report
embeds the fully resolved parameter set in its header, and every
subcommand takes a mandatory seed, so a rerun with the same arguments
reproduces the same bytes. Reports are CSV; each one gets a rendered
PNG figure alongside it.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .. import core
from ..errors import BudgetError, DataError, InvariantError
from . import datasets, experiments, figures
from . import io as bio
from . import reports

VERSION = "0.1.0"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(s):
    if isinstance(s, bool):
        return s
    low = str(s).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s}")


def _int_list(s):
    return [int(tok) for tok in str(s).split(",") if tok.strip()]


def _float_list(s):
    return [float(tok) for tok in str(s).split(",") if tok.strip()]


# name -> (coercion, default, required)
_COMMON = {"seed": (int, None, True), "out": (str, None, True)}

SPECS = {
    "gen": {
        **_COMMON,
        "mode": (str, "near", False), "n": (int, None, True),
        "d": (int, None, True), "metric": (str, "hamming", False),
        "r": (float, 4.0, False), "c": (float, 2.0, False),
        "queries": (int, 10, False), "caps": (int, 3, False),
        "theta": (float, 0.05, False), "fmt": (str, "annb", False),
    },
    "build": {
        **_COMMON,
        "data": (str, None, True), "metric": (str, None, False),
        "algo": (str, None, True), "c": (float, 2.0, False),
        "r": (float, None, True), "k": (int, None, False),
        "L": (int, None, False), "eta": (float, 1.5, False),
        "m_structs": (int, 6, False),
    },
    "query": {
        **_COMMON,
        "data": (str, None, True), "queries": (str, None, True),
        "gt": (str, None, False), "metric": (str, None, False),
        "algo": (str, "brute", False), "c": (float, 2.0, False),
        "r": (float, None, True), "k": (int, None, False),
        "L": (int, None, False), "eta": (float, 1.5, False),
        "m_structs": (int, 6, False),
    },
    "bench": {
        **_COMMON,
        "data": (str, None, True), "queries": (str, None, True),
        "gt": (str, None, False), "metric": (str, None, False),
        "algo": (str, "brute", False), "c": (float, 2.0, False),
        "r": (float, None, True), "k": (int, None, False),
        "L": (int, None, False), "eta": (float, 1.5, False),
        "m_structs": (int, 6, False), "timings": (_bool, False, False),
    },
    "rho": {
        **_COMMON,
        "family": (str, "bit", False),
        "ns": (_int_list, [1024, 2048, 4096, 8192, 16384], False),
        "d": (int, 128, False), "r": (float, None, False),
        "c": (float, 2.0, False), "eta": (float, 1.2, False),
        "queries": (int, 10, False), "c_rep": (float, 5.0, False),
    },
    "tradeoff": {
        **_COMMON,
        "cs": (_float_list, [1.5, 2.0, 3.0], False),
        "samples": (int, 50, False),
    },
    "cp": {
        **_COMMON,
        "mode": (str, "ann", False), "n": (int, 512, False),
        "d": (int, 128, False), "r": (float, 8.0, False),
        "c": (float, 2.0, False), "theta": (float, 0.05, False),
        "g": (int, 8, False), "k": (int, 2, False),
        "seeds": (int, 10, False), "backend": (str, "naive", False),
        "timings": (_bool, False, False),
    },
    "embed-calibrate": {
        **_COMMON,
        "kind": (str, "l1", False), "p": (float, 2.0, False),
        "d": (int, 32, False), "trials": (int, 10000, False),
        "factors": (_float_list, [0.5, 1.0, 2.0], False),
    },
    "linf": {
        **_COMMON,
        "data": (str, None, True), "queries": (str, None, True),
        "gt": (str, None, False), "r": (float, None, True),
        "eps": (float, 1.0, False),
    },
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="annkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", metavar="subcommand")
    for cmd, spec in SPECS.items():
        sub = subs.add_parser(cmd, add_help=True)
        sub.add_argument("--config", default=None)
        for name, (_, _, required) in spec.items():
            flag = "--" + name.replace("_", "-")
            if name == "timings":
                sub.add_argument(flag, dest=name, action="store_const",
                                 const="true", default=None)
            else:
                sub.add_argument(flag, dest=name, type=str, default=None,
                                 help="required" if required else None)
    return parser


def _resolve(ns) -> tuple:
    if not ns.command:
        raise UsageError("a subcommand is required")
    spec = SPECS[ns.command]
    fromfile = {}
    if ns.config:
        fromfile = bio.read_config(ns.config)
        unknown = set(fromfile) - set(spec)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    params = {}
    for name, (coerce, default, required) in spec.items():
        val = getattr(ns, name)
        if val is None:
            val = fromfile.get(name, default)
        if val is None:
            if required:
                raise UsageError(f"missing required parameter --{name}")
            params[name] = None
            continue
        if isinstance(val, str):
            try:
                val = coerce(val)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for --{name}: {val!r}") from exc
        params[name] = val
    return ns.command, params


def _header(cmd: str, params: dict) -> dict:
    hdr = {"command": cmd, "version": VERSION}
    for key, val in params.items():
        if isinstance(val, list):
            val = ",".join(reports.format_value(v) for v in val)
        hdr[key] = val
    return hdr


def _png_path(out: str) -> Path:
    return Path(out).with_suffix(".png")


def _load_metric(name):
    return bio.metric_from_name(name) if name else None


# -- subcommand handlers --------------------------------------------------------


def cmd_gen(params: dict) -> int:
    if params["n"] <= 0 or params["d"] <= 0:
        raise UsageError("n and d must be positive")
    if params["queries"] <= 0:
        raise UsageError("queries must be positive")
    spec = datasets.PlantedDatasetSpec(
        mode=params["mode"], n=params["n"], d=params["d"],
        metric=params["metric"], r=params["r"], c=params["c"],
        seed=params["seed"], queries=params["queries"], caps=params["caps"],
        theta=params["theta"])
    inst = datasets.generate(spec)
    ext = "annb" if params["fmt"] == "annb" else "txt"
    prefix = params["out"]
    data_path = f"{prefix}.{ext}"
    bio.write_dataset(data_path, inst.data, params["fmt"])
    print(f"wrote {data_path}")
    if inst.queries is not None:
        q_path = f"{prefix}_queries.{ext}"
        bio.write_dataset(q_path, inst.queries, params["fmt"])
        print(f"wrote {q_path}")
    gt_path = f"{prefix}_gt.csv"
    bio.write_ground_truth(gt_path, inst.gt)
    print(f"wrote {gt_path}")
    return 0


def _load_for_queries(params):
    metric = _load_metric(params["metric"]) if "metric" in params else None
    data = bio.read_dataset(params["data"], metric)
    queries = bio.read_dataset(params["queries"], metric)
    gt = bio.read_ground_truth(params["gt"]) if params.get("gt") else None
    return data, queries, gt


def cmd_build(params: dict) -> int:
    if params["algo"] not in experiments.BUILD_ALGOS:
        raise UsageError(f"unknown algorithm {params['algo']!r}")
    data = bio.read_dataset(params["data"], _load_metric(params["metric"]))
    adapter = experiments.build_algo(
        params["algo"], data, params["c"], params["r"], params["seed"],
        k=params["k"], L=params["L"], eta=params["eta"],
        m_structs=params["m_structs"])
    hdr = _header("build", params)
    hdr.update({"n": data.n, "dim": data.dim, "dataset_metric": data.metric.kind})
    rows = sorted(adapter.stats.items())
    reports.write_report(params["out"], hdr, ("stat", "value"), rows)
    figures.render_build(_png_path(params["out"]), adapter.stats)
    print(f"wrote {params['out']}")
    return 0


def _run_queries(params, aggregate_only: bool, timings: bool):
    if params["algo"] not in experiments.QUERY_ALGOS:
        raise UsageError(f"algorithm {params['algo']!r} is not queryable here")
    data, queries, gt = _load_for_queries(params)
    start = time.perf_counter()
    adapter = experiments.build_algo(
        params["algo"], data, params["c"], params["r"], params["seed"],
        queries=None if data.metric.binary else queries.points,
        k=params["k"], L=params["L"], eta=params["eta"],
        m_structs=params["m_structs"])
    rows, summary = experiments.run_recall(
        adapter, data, queries, params["c"], params["r"], gt)
    wall = time.perf_counter() - start if timings else None
    hdr = _header("bench" if aggregate_only else "query", params)
    hdr.update({"n": data.n, "dim": data.dim,
                "dataset_metric": data.metric.kind})
    for key, val in sorted(adapter.stats.items()):
        hdr[f"index_{key}"] = val
    cands = [row[4] for row in rows]
    if aggregate_only:
        columns = ("algo", "n", "queries", "eligible", "answered", "hits",
                   "recall", "cand_p50", "cand_p90", "cand_max", "wall_time")
        body = [(params["algo"], data.n, summary.queries, summary.eligible,
                 summary.answered, summary.hits, summary.recall,
                 summary.cand_p50, summary.cand_p90, summary.cand_max, wall)]
    else:
        hdr.update({"recall": summary.recall, "eligible": summary.eligible,
                    "answered": summary.answered, "cand_p50": summary.cand_p50,
                    "cand_p90": summary.cand_p90, "cand_max": summary.cand_max})
        columns = ("query_id", "returned_id", "distance", "within_cr", "candidates")
        body = rows
    reports.write_report(params["out"], hdr, columns, body)
    figures.render_recall(_png_path(params["out"]), cands, summary.recall,
                          params["c"] * params["r"])
    print(f"wrote {params['out']}")
    return 0


def cmd_query(params: dict) -> int:
    return _run_queries(params, aggregate_only=False, timings=False)


def cmd_bench(params: dict) -> int:
    return _run_queries(params, aggregate_only=True, timings=params["timings"])


def cmd_rho(params: dict) -> int:
    r = params["r"]
    if r is None:
        r = 8.0 if params["family"] in ("bit", "scan") else float(np.sqrt(2.0) / params["c"])
    fit = experiments.estimate_rho(
        params["family"], params["ns"], params["d"], r, params["c"],
        params["queries"], params["seed"], eta=params["eta"],
        c_rep=params["c_rep"])
    hdr = _header("rho", params)
    hdr.update({"r": r, "rho_hat": fit.rho_hat, "intercept": fit.intercept,
                "declared_rho": fit.declared})
    rows = [(n, med, res) for n, med, res in
            zip(fit.ns, fit.medians, fit.residuals)]
    reports.write_report(params["out"], hdr,
                         ("n", "median_candidates", "log_residual"), rows)
    figures.render_rho(_png_path(params["out"]), fit.ns, fit.medians,
                       fit.rho_hat, fit.declared)
    print(f"wrote {params['out']}")
    return 0


def cmd_tradeoff(params: dict) -> int:
    for c in params["cs"]:
        if c <= 1.0:
            raise DataError("every c must exceed 1")
    rows = experiments.tradeoff_table(params["cs"], params["samples"])
    hdr = _header("tradeoff", params)
    reports.write_report(params["out"], hdr,
                         ("c", "rho_s", "rho_q", "space_exponent"), rows)
    figures.render_tradeoff(_png_path(params["out"]), rows)
    print(f"wrote {params['out']}")
    return 0


def cmd_cp(params: dict) -> int:
    rows = experiments.cp_experiment(
        params["mode"], params["n"], params["d"], params["r"], params["c"],
        params["theta"], params["g"], params["k"], params["seeds"],
        params["seed"], backend=params["backend"], timings=params["timings"])
    hdr = _header("cp", params)
    successes = [row[6] for row in rows]
    hdr["success_rate"] = float(np.mean(successes))
    reports.write_report(params["out"], hdr, experiments.CP_COLUMNS, rows)
    figures.render_cp(_png_path(params["out"]), [row[0] for row in rows], successes)
    print(f"wrote {params['out']}")
    return 0


def cmd_embed_calibrate(params: dict) -> int:
    rows, meta = experiments.embed_calibration(
        params["kind"], params["d"], params["p"], params["trials"],
        params["factors"], params["seed"])
    hdr = _header("embed-calibrate", params)
    hdr.update(meta)
    reports.write_report(params["out"], hdr,
                         ("kind", "t", "empirical", "predicted", "abs_err"), rows)
    figures.render_calibration(_png_path(params["out"]), params["kind"],
                               [row[1] for row in rows], [row[2] for row in rows],
                               [row[3] for row in rows])
    print(f"wrote {params['out']}")
    return 0


def cmd_linf(params: dict) -> int:
    data = bio.read_dataset(params["data"], core.LINF)
    queries = bio.read_dataset(params["queries"], core.LINF)
    gt = bio.read_ground_truth(params["gt"]) if params["gt"] else None
    rows, stats_hdr = experiments.linf_experiment(
        data, queries, params["r"], params["eps"], gt)
    hdr = _header("linf", params)
    hdr.update(stats_hdr)
    hdr.update({"n": data.n, "dim": data.dim})
    reports.write_report(
        params["out"], hdr,
        ("query_id", "returned_id", "distance", "within_guarantee",
         "path_length", "candidates"), rows)
    figures.render_linf(_png_path(params["out"]), [row[4] for row in rows],
                        stats_hdr["guarantee"])
    print(f"wrote {params['out']}")
    return 0


_DISPATCH = {
    "gen": cmd_gen,
    "build": cmd_build,
    "query": cmd_query,
    "bench": cmd_bench,
    "rho": cmd_rho,
    "tradeoff": cmd_tradeoff,
    "cp": cmd_cp,
    "embed-calibrate": cmd_embed_calibrate,
    "linf": cmd_linf,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        command, params = _resolve(ns)
        return _DISPATCH[command](params)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, BudgetError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
