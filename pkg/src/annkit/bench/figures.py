"""Figure rendering for the CLI report paths.

Each report-writing subcommand drops a PNG next to its CSV. Rendering
is pinned to the Agg backend with fixed dpi and metadata so reruns of
the same experiment produce the same image bytes.
"""

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": "annkit"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def render_build(path, stats: dict) -> None:
    keys = sorted(stats)
    vals = [float(stats[k]) for k in keys]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.barh(range(len(keys)), vals, color="#4878d0")
    ax.set_yticks(range(len(keys)), keys)
    ax.set_xlabel("value")
    ax.set_title("index build statistics")
    _finish(fig, path)


def render_recall(path, candidates, recall, cr) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    cand = np.asarray(candidates, dtype=np.float64)
    bins = max(5, min(40, int(np.sqrt(cand.size)))) if cand.size else 5
    ax.hist(cand, bins=bins, color="#4878d0", edgecolor="white")
    ax.set_xlabel("candidates examined per query")
    ax.set_ylabel("queries")
    label = "NA" if recall is None else format(recall, ".4g")
    ax.set_title(f"recall={label} within distance {format(cr, '.6g')}")
    _finish(fig, path)


def render_rho(path, ns, medians, rho_hat, declared) -> None:
    ns = np.asarray(ns, dtype=np.float64)
    med = np.maximum(np.asarray(medians, dtype=np.float64), 1.0)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.loglog(ns, med, "o", color="#4878d0", label="median candidates")
    anchor = med[0]
    ax.loglog(ns, anchor * (ns / ns[0]) ** rho_hat, "-", color="#ee854a",
              label=f"fit slope {rho_hat:.3f}")
    if declared is not None:
        ax.loglog(ns, anchor * (ns / ns[0]) ** declared, "--", color="#6acc64",
                  label=f"declared {declared:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("median candidates")
    ax.legend()
    ax.set_title("candidate growth exponent")
    _finish(fig, path)


def render_tradeoff(path, rows) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    by_c = {}
    for c, rho_s, rho_q, _ in rows:
        by_c.setdefault(c, []).append((rho_s, rho_q))
    for c in sorted(by_c):
        pts = np.array(by_c[c])
        ax.plot(pts[:, 0], pts[:, 1], "-", label=f"c={format(c, '.6g')}")
    ax.set_xlabel("space exponent rho_s")
    ax.set_ylabel("query exponent rho_q")
    ax.legend()
    ax.set_title("query/space trade-off frontier")
    _finish(fig, path)


def render_cp(path, seeds_list, successes) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    xs = np.arange(len(seeds_list))
    ax.bar(xs, successes, color=["#6acc64" if s else "#d65f5f" for s in successes])
    ax.set_xticks(xs, [str(s) for s in seeds_list])
    ax.set_xlabel("seed")
    ax.set_yticks([0, 1], ["miss", "hit"])
    rate = float(np.mean(successes)) if successes else 0.0
    ax.set_title(f"closest-pair success rate {rate:.2f}")
    _finish(fig, path)


def render_calibration(path, kind, ts, empirical, predicted) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(ts, predicted, "-", color="#6acc64", label="closed form")
    ax.plot(ts, empirical, "o", color="#4878d0", label="empirical")
    ax.set_xlabel("t")
    ax.set_ylabel("P[sup <= t]")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    ax.set_title(f"{kind} embedding scale calibration")
    _finish(fig, path)


def render_linf(path, path_lengths, guarantee) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    pl = np.asarray(path_lengths, dtype=np.float64)
    bins = max(3, min(30, int(pl.max() - pl.min() + 1))) if pl.size else 3
    ax.hist(pl, bins=bins, color="#4878d0", edgecolor="white")
    ax.set_xlabel("query path length")
    ax.set_ylabel("queries")
    ax.set_title(f"tree paths; returned distance <= {format(guarantee, '.6g')}")
    _finish(fig, path)
