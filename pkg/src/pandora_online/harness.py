"""Run orchestration, result files and reports."""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracle
from .bandit import run_bandit
from .config import Config, ConfigError
from .core import ScenarioSequence, family_from_json, generate_instance
from .ftrl import InnerSettings, run_full_information
from .ledger import COLUMNS, RegretLedger
from .nonadaptive import DEFAULT_ALPHA, DEFAULT_BETA, PUBLISHED_ALPHA, PUBLISHED_BETA, run_na
from .rounding import rounding_hook

RESULT_COLUMNS = ("T", "seed") + COLUMNS
REPORT_REQUIRED = ("T", "seed", "round", "alg_cost", "bench_cost", "explore", "mistake")


class ReportError(ValueError):
    pass


def thread_cap() -> int:
    raw = os.environ.get("PB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PB_THREADS must be an integer, got {raw!r}") from None


def build_sequence(cfg: Config, T: int) -> ScenarioSequence:
    inst = cfg.doc["instance"]
    if "file" in inst:
        if cfg.doc.get("sweep"):
            raise ConfigError("sweep needs a generated instance", source=cfg.source)
        return ScenarioSequence.load(inst["file"])
    g = inst["generator"]
    return generate_instance(g["kind"], g["n"], T, g["params"], g["seed"])


def benchmark_for(cfg: Config, seq: ScenarioSequence, family) -> tuple[np.ndarray | None, str]:
    """Per-round benchmark costs and a label describing where they came from."""
    mode = cfg.doc["benchmark"]
    kind = "set" if cfg.algorithm == "na" else "permutation"
    if mode == "none":
        return None, "disabled"
    if isinstance(mode, dict):
        fx = oracle.load_fixture(mode["fixture"])
        if fx.get("hash") != oracle.instance_hash(seq, family):
            raise ConfigError("benchmark fixture does not match the instance", source=cfg.source)
        if kind not in fx:
            raise ConfigError(f"fixture has no {kind} benchmark", source=cfg.source)
        return np.asarray(fx[kind]["per_round"], dtype=float), "fixture"
    limit = oracle.MAX_SET_N if kind == "set" else oracle.MAX_PERM_N
    if seq.n > limit:
        return None, f"disabled (n > {limit})"
    return oracle.cached(kind, seq, family).per_round, kind


_MEMO: dict = {}


def run_replica(doc: dict, T: int, seed: int, bench) -> RegretLedger:
    """One (horizon, seed) replica; module-level so worker processes can run it."""
    cfg = Config(doc)
    seq = build_sequence(cfg, T)
    family = family_from_json(doc["family"])
    ov = cfg.overrides
    settings = InnerSettings(max_iter=ov.get("inner_max_iter", 2000), tol=ov.get("inner_tol", 1e-8))
    hook = rounding_hook(ov.get("stopping", "ski-randomized")) if ov.get("rounding", False) else None
    if cfg.algorithm == "full-info":
        return run_full_information(seq, family, eta=ov.get("eta"), settings=settings, seed=seed,
                                    rounding=hook, benchmark=bench)
    if cfg.algorithm == "bandit":
        return run_bandit(seq, family, eta=ov.get("eta"), interval_length=ov.get("interval_length"),
                          L=ov.get("L"), formula=ov.get("formula", "proof"), seed=seed, rounding=hook,
                          settings=settings, benchmark=bench, memo=_MEMO)
    published = ov.get("constants") == "published"
    beta = ov.get("beta", PUBLISHED_BETA if published else DEFAULT_BETA)
    alpha = ov.get("alpha", PUBLISHED_ALPHA if published else DEFAULT_ALPHA)
    return run_na(seq, family, p=ov.get("p"), seed=seed, beta=beta, alpha=alpha, benchmark=bench)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def run_summary(led: RegretLedger) -> dict:
    alg = led.column("alg_cost")
    bench = led.column("bench_cost")
    out = {"average_cost": float(alg.mean()), "explores": int(np.sum(led.column("explore"))),
           "mistakes": int(np.sum(led.column("mistake"))), "failures": int(np.sum(led.column("failed")))}
    if np.all(np.isfinite(bench)):
        out["average_benchmark"] = float(bench.mean())
        out["average_regret"] = float(np.mean(alg - bench))
        out["ratio"] = float(alg.mean() / bench.mean()) if bench.mean() > 0 else None
    return out


def loglog_slope(xs, ys) -> float | None:
    """Least-squares slope of log y against log x; None unless all values are positive."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.size < 2 or np.any(ys <= 0) or np.any(xs <= 0):
        return None
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _write_replica(path: Path, T: int, seed: int, led: RegretLedger) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in led.rows():
            w.writerow([T, seed] + row)


def run_experiment(cfg: Config, out_dir: str | Path, threads: int | None = None) -> dict:
    """Run every (horizon, seed) replica and write results.csv, runs.jsonl and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / ".replicas"
    tmp.mkdir(exist_ok=True)
    family = family_from_json(cfg.doc["family"])
    chash = cfg.hash()
    jobs, bench_src = [], {}
    for T in cfg.horizons:
        seq = build_sequence(cfg, T)
        bench, src = benchmark_for(cfg, seq, family)
        bench_src[seq.T] = src
        for seed in cfg.seeds:
            jobs.append((seq.T, seed, None if bench is None else bench.tolist()))
    threads = min(threads or thread_cap(), len(jobs))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            ledgers = list(pool.map(run_replica, *zip(*[(cfg.doc, T, s, b) for T, s, b in jobs])))
    else:
        ledgers = [run_replica(cfg.doc, T, s, b) for T, s, b in jobs]

    records = []
    for (T, seed, _), led in zip(jobs, ledgers):
        _write_replica(tmp / f"T{T}_seed{seed}.csv", T, seed, led)
        records.append({"config_hash": chash, "T": T, "seed": seed, "benchmark": bench_src[T],
                        "meta": led.meta, **run_summary(led)})
    order = sorted(range(len(jobs)), key=lambda j: (jobs[j][0], jobs[j][1]))
    with open(out / "results.csv", "w", newline="") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for j in order:
            T, seed, _ = jobs[j]
            part = tmp / f"T{T}_seed{seed}.csv"
            fh.write(part.read_text())
    shutil.rmtree(tmp)
    with open(out / "runs.jsonl", "w") as fh:
        for j in order:
            fh.write(json.dumps(_clean(records[j]), sort_keys=True) + "\n")

    rows = []
    for T in sorted(bench_src):
        rs = [r for r in records if r["T"] == T]
        row = {"T": T, "replicas": len(rs), "benchmark": bench_src[T],
               "mean_cost": float(np.mean([r["average_cost"] for r in rs])),
               "mean_mistakes": float(np.mean([r["mistakes"] for r in rs])),
               "mean_failures": float(np.mean([r["failures"] for r in rs]))}
        if all("average_regret" in r for r in rs):
            regrets = [r["average_regret"] for r in rs]
            row["mean_regret"] = float(np.mean(regrets))
            row["std_regret"] = float(np.std(regrets))
            ratios = [r["ratio"] for r in rs if r["ratio"] is not None]
            if ratios:
                row["mean_ratio"] = float(np.mean(ratios))
                row["std_ratio"] = float(np.std(ratios))
        rows.append(row)
    summary = {"config_hash": chash, "algorithm": cfg.algorithm, "family": cfg.doc["family"], "rows": rows}
    if len(rows) > 1 and all("mean_regret" in r for r in rows):
        summary["regret_slope"] = loglog_slope([r["T"] for r in rows], [r["mean_regret"] for r in rows])
    (out / "summary.json").write_text(json.dumps(_clean(summary), sort_keys=True, indent=1) + "\n")
    return summary


# ---------------------------------------------------------------------------
# reports


def read_results(paths) -> dict[str, np.ndarray]:
    cols: dict[str, list] = {}
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in REPORT_REQUIRED if c not in (reader.fieldnames or ())]
            if missing:
                raise ReportError(f"{path}: missing columns {', '.join(missing)}")
            for row in reader:
                for c in REPORT_REQUIRED:
                    cols.setdefault(c, []).append(float(row[c]))
    if not cols:
        raise ReportError("no result rows")
    return {k: np.array(v) for k, v in cols.items()}


def report(paths, out_dir: str | Path) -> dict:
    """Per-round and per-run CSV tables plus SVG charts of regret and cost ratios."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "pandora-online"
    data = read_results(paths)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(set(zip(data["T"].astype(int), data["seed"].astype(int))))
    runs = []
    curves: dict[int, list] = {}
    for T, seed in keys:
        m = (data["T"] == T) & (data["seed"] == seed)
        order = np.argsort(data["round"][m], kind="stable")
        alg, bench = data["alg_cost"][m][order], data["bench_cost"][m][order]
        diff = alg - bench
        curves.setdefault(T, []).append(np.cumsum(diff) / np.arange(1, diff.size + 1))
        runs.append({"T": T, "seed": seed, "average_cost": float(alg.mean()), "average_benchmark": float(bench.mean()),
                     "average_regret": float(diff.mean()),
                     "ratio": float(alg.mean() / bench.mean()) if bench.mean() > 0 else math.nan,
                     "explores": int(data["explore"][m].sum()), "mistakes": int(data["mistake"][m].sum())})
    run_cols = ["T", "seed", "average_cost", "average_benchmark", "average_regret", "ratio", "explores", "mistakes"]
    with open(out / "per_run.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(run_cols)
        for r in runs:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in run_cols])
    with open(out / "per_round.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "round", "mean_running_regret"])
        for T in sorted(curves):
            mean = np.mean(np.vstack(curves[T]), axis=0)
            for t, v in enumerate(mean):
                w.writerow([T, t, repr(float(v))])
    horizons = sorted(curves)
    means = [float(np.mean([r["average_regret"] for r in runs if r["T"] == T])) for T in horizons]
    slope = loglog_slope(horizons, means)
    with open(out / "per_T.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "mean_regret", "std_regret", "slope"])
        for T, mu in zip(horizons, means):
            sd = float(np.std([r["average_regret"] for r in runs if r["T"] == T]))
            w.writerow([T, repr(mu), repr(sd), "" if slope is None else repr(slope)])

    fig, ax = plt.subplots(figsize=(6, 4))
    for T in horizons:
        mean = np.mean(np.vstack(curves[T]), axis=0)
        ax.plot(np.arange(1, mean.size + 1), mean, label=f"T={T}")
    ax.set_xlabel("round")
    ax.set_ylabel("average regret so far")
    if slope is not None:
        ax.set_title(f"log-log slope of final regret: {slope:.3f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "regret.svg", metadata={"Date": None})
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ratios = [r["ratio"] for r in runs if math.isfinite(r["ratio"])]
    ax.hist(ratios, bins=max(5, min(30, len(ratios))))
    ax.set_xlabel("average cost / benchmark")
    ax.set_ylabel("runs")
    fig.tight_layout()
    fig.savefig(out / "ratios.svg", metadata={"Date": None})
    plt.close(fig)
    return {"runs": runs, "slope": slope}
