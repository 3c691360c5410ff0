"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[Cn] PASS|FAIL ...`` line with the measured
numbers and then asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time

import numpy as np
import pytest

from helpers import random_doubly_stochastic
from pandora_online import bandit as bd
from pandora_online import ftrl, harness, oracle
from pandora_online import matroid as mt
from pandora_online import nonadaptive as na
from pandora_online import relaxation as rx
from pandora_online import rounding as rd
from pandora_online.config import load_config
from pandora_online.core import (INF, MatroidBasis, Scenario, Select1, SelectK, generate_instance,
                                 transcript_cost)

E_RATIO = math.e / (math.e - 1)


@pytest.fixture
def verdict(capsys):
    def emit(tag, ok, detail, started):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'} {detail} ({time.time() - started:.1f}s)")
        assert ok, detail
    return emit


def random_family(r, n):
    kind = int(r.integers(3))
    if kind == 0 or n < 2:
        return Select1()
    if kind == 1:
        return SelectK(int(r.integers(1, n + 1)))
    parts = np.array_split(r.permutation(n), int(r.integers(1, min(n, 3) + 1)))
    parts = tuple(tuple(sorted(int(b) for b in p)) for p in parts)
    return MatroidBasis(mt.Partition(parts, tuple(int(r.integers(1, len(p) + 1)) for p in parts)))


# ---------------------------------------------------------------------------


def test_c1_iterates_stay_doubly_stochastic(verdict):
    start = time.time()
    r = np.random.default_rng(101)
    kinds = ["mssc", "uniform-costs", "clustered", "adversarial-alternating", "constant"]
    runs = [("constant", 2, 2000), ("adversarial-alternating", 3, 2000)]
    while len(runs) < 50:
        runs.append((kinds[int(r.integers(len(kinds)))], int(r.integers(2, 11)), int(r.integers(1, 31))))
    worst, iterates = 0.0, 0
    for i, (kind, n, T) in enumerate(runs):
        def check(t, x):
            nonlocal worst, iterates
            iterates += 1
            worst = max(worst, np.abs(x.sum(0) - 1).max(), np.abs(x.sum(1) - 1).max(), -x.min())
        ftrl.run_full_information(generate_instance(kind, n, T, seed=i), Select1(), on_iterate=check)
    elapsed = time.time() - start
    ok = worst <= 1e-9 and elapsed < 60
    verdict("C1", ok, f"{len(runs)} runs, {iterates} iterates, worst row/col error {worst:.2e}", start)


def test_c2_relaxations_match_exact_lp(verdict):
    start = time.time()
    r = np.random.default_rng(202)
    worst = {"select1": 0.0, "selectk": 0.0, "matroid": 0.0}
    for which in worst:
        count = 0
        while count < 200:
            n = int(r.integers(2, 7))
            x = random_doubly_stochastic(n, r)
            s = Scenario(tuple(np.where(r.random(n) < 0.15, INF, r.uniform(0, n, n))))
            if which == "select1":
                fam = Select1()
            elif which == "selectk":
                fam = SelectK(int(r.integers(1, n + 1)))
            else:
                fam = random_family(r, n)
                if not isinstance(fam, MatroidBasis):
                    continue
            got = rx.evaluate(x, s, fam).value
            ref = oracle.relaxation_value(x, s, fam)
            if math.isinf(ref) or math.isinf(got):
                assert math.isinf(ref) and math.isinf(got)
            else:
                worst[which] = max(worst[which], abs(got - ref) / max(1.0, abs(ref)))
            count += 1
    elapsed = time.time() - start
    ok = max(worst.values()) <= 1e-6 and elapsed < 120
    verdict("C2", ok, "600 instances, worst relative error " +
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), start)


def test_c3_subgradients_are_valid(verdict):
    start = time.time()
    r = np.random.default_rng(303)
    worst_gap, fd_checked, fd_worst = -np.inf, 0, 0.0
    for i in range(50):
        n = int(r.integers(2, 6))
        fam = [Select1(), SelectK(min(2, n)), random_family(r, n)][i % 3]
        s = Scenario(tuple(r.uniform(0, n, n)))
        x = random_doubly_stochastic(n, r)
        base = rx.evaluate(x, s, fam)
        for _ in range(100):
            y = random_doubly_stochastic(n, r)
            lower = base.value + np.sum(base.grad * (y - x))
            worst_gap = max(worst_gap, lower - rx.evaluate(y, s, fam).value)
        if isinstance(fam, Select1):
            for _ in range(5):
                D = random_doubly_stochastic(n, r) - x
                h = 1e-6
                plus = rx.eval_spa(x + h * D, s, check=False).value
                minus = rx.eval_spa(x - h * D, s, check=False).value
                if abs((plus - base.value) - (base.value - minus)) < 1e-10:  # smooth along D
                    fd_checked += 1
                    fd_worst = max(fd_worst, abs((plus - minus) / (2 * h) - np.sum(base.grad * D)))
    ok = worst_gap <= 1e-7 and fd_worst <= 1e-4 and fd_checked > 0
    verdict("C3", ok, f"5000 directions, worst inequality violation {worst_gap:.1e}; "
            f"{fd_checked} smooth finite differences, worst error {fd_worst:.1e}", start)


def test_c4_full_information_regret_envelope(verdict):
    start = time.time()
    T = 10_000
    lines, ok = [], True
    for n in (3, 5):
        bound = 2 * n * math.sqrt(math.log(n) / T)
        for kind in ("constant", "adversarial-alternating"):
            seq = generate_instance(kind, n, T, seed=3)
            led = ftrl.run_full_information(seq, Select1())
            regret = float(np.mean(led.frac_loss)) - oracle.best_fixed_permutation(seq, Select1()).average
            ok &= regret <= bound
            lines.append(f"n={n} {kind} {regret:.4f}<={bound:.4f}")
    elapsed = time.time() - start
    ok &= elapsed < 600
    verdict("C4", ok, "; ".join(lines), start)


def test_c5_mssc_rounding_ratio(verdict):
    start = time.time()
    r = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        n = int(r.integers(2, 7))
        x = random_doubly_stochastic(n, r)
        c = np.where(r.random(n) < 0.5, 0.0, INF)
        c[int(r.integers(n))] = 0.0
        s = Scenario(tuple(c))
        value = rx.eval_spa(x, s)
        cost = np.mean([transcript_cost(rd.stop_select1_scenario_aware(rd.sample_order_1(x, r), s,
                                                                       value_cost=value.value_cost), Select1())
                        for _ in range(2000)])
        worst = max(worst, cost / value.value)
    ok = worst <= 4 * 1.10
    verdict("C5", ok, f"20 instances x 2000 roundings, worst mean/relaxation {worst:.3f} <= 4.4", start)


def test_c6_select_one_ratios(verdict):
    start = time.time()
    r = np.random.default_rng(606)
    worst_aware, worst_ski = 0.0, 0.0
    for _ in range(20):
        n = int(r.integers(2, 7))
        x = random_doubly_stochastic(n, r)
        s = Scenario(tuple(r.uniform(0, n, n)))
        value = rx.eval_spa(x, s)
        aware = np.mean([transcript_cost(rd.stop_select1_scenario_aware(rd.sample_order_1(x, r), s,
                                                                        value_cost=value.value_cost), Select1())
                         for _ in range(2000)])
        ski = np.mean([transcript_cost(rd.play_round(x, s, Select1(), r, relax=value), Select1())
                       for _ in range(2000)])
        worst_aware = max(worst_aware, aware / value.value)
        worst_ski = max(worst_ski, ski / value.value)
    a_bound, s_bound = (3 + 2 * math.sqrt(2)) * 1.10, 9.22 * 1.15
    ok = worst_aware <= a_bound and worst_ski <= s_bound
    verdict("C6", ok, f"scenario-aware {worst_aware:.3f} <= {a_bound:.3f}; "
            f"randomized ski-rental {worst_ski:.3f} <= {s_bound:.3f}", start)


def test_c7_select_k_and_matroid_ratios(verdict):
    start = time.time()
    r = np.random.default_rng(707)
    k_worst, k_fail, k_total = 0.0, 0, 0
    for _ in range(10):
        n = int(r.integers(3, 7))
        k = int(r.integers(2, n))
        x = random_doubly_stochastic(n, r)
        s = Scenario(tuple(r.uniform(0, n, n)))
        rel = rx.eval_spa_k(x, s, k)
        costs = np.array([transcript_cost(rd.play_round(x, s, SelectK(k), r, relax=rel), SelectK(k))
                          for _ in range(1000)])
        fin = np.isfinite(costs)
        k_fail += int((~fin).sum())
        k_total += costs.size
        k_worst = max(k_worst, costs[fin].mean() / rel.value)
    m_worst, m_fail, m_total = 0.0, 0, 0
    for _ in range(10):
        n = int(r.integers(4, 9))
        parts = np.array_split(r.permutation(n), int(r.integers(2, 4)))
        m = mt.Partition(tuple(tuple(sorted(int(b) for b in p)) for p in parts), tuple(1 for _ in parts))
        fam = MatroidBasis(m)
        k = m.rank(range(n))
        x = random_doubly_stochastic(n, r)
        s = Scenario(tuple(r.uniform(0, n, n)))
        rel = rx.eval_spa_matroid(x, s, m)
        costs = np.array([transcript_cost(rd.play_round(x, s, fam, r, relax=rel), fam) for _ in range(500)])
        fin = np.isfinite(costs)
        m_fail += int((~fin).sum())
        m_total += costs.size
        m_worst = max(m_worst, costs[fin].mean() / (rel.value * math.log(k)))
    k_rate, m_rate = k_fail / k_total, m_fail / m_total
    ok = k_worst <= 123.25 and m_worst <= 200 and k_rate < 0.01 and m_rate < 0.01
    verdict("C7", ok, f"select-k worst ratio {k_worst:.2f} <= 123.25 (failures {k_rate:.2%}); "
            f"matroid worst ratio/ln k {m_worst:.2f} <= 200 (failures {m_rate:.2%})", start)


def test_c8_mistake_scaling(verdict):
    start = time.time()
    horizons = (1000, 4000, 16000)
    means = []
    for T in horizons:
        seq = generate_instance("adversarial-alternating", 4, T)
        counts = [int(np.sum(na.run_na(seq, Select1(), seed=seed).mistake)) for seed in range(50)]
        means.append(float(np.mean(counts)))
    ratios = [b / a for a, b in zip(means, means[1:])]
    limits = [3 * math.sqrt(t2 / t1) for t1, t2 in zip(horizons, horizons[1:])]
    ok = all(q <= lim for q, lim in zip(ratios, limits))
    verdict("C8", ok, "mean mistakes " + ", ".join(f"T={T}: {m:.1f}" for T, m in zip(horizons, means)) +
            "; growth " + ", ".join(f"{q:.2f}<={lim:.0f}" for q, lim in zip(ratios, limits)), start)


def test_c9_na_regret_envelope(verdict):
    start = time.time()
    n, T = 4, 10_000
    seq = generate_instance("mssc", n, T, {"density": 0.5, "pool": 1}, seed=9)
    opt = oracle.best_nonadaptive_set(seq, Select1()).average
    led = na.run_na(seq, Select1(), seed=0)
    avg = led.average_cost()
    bound = 2 * opt + 5 * n * n / math.sqrt(T)
    verdict("C9", avg <= bound, f"average cost {avg:.4f} <= 2*{opt:.3f} + {5 * n * n / math.sqrt(T):.2f} "
            f"= {bound:.3f}", start)


def test_c10_na_rounding_ratios(verdict):
    start = time.time()
    r = np.random.default_rng(1010)
    worst1, worstk = 0.0, 0.0
    for i in range(6):
        n = int(r.integers(3, 6))
        scen = [Scenario(tuple(np.where(r.random(n) < 0.2, INF, r.uniform(0, n, n)))) for _ in range(3)]
        scen = [s if s.finite.sum() >= 2 else Scenario(tuple(r.uniform(0, n, n))) for s in scen]
        prog = na.NaProgram(n, Select1(), scen)
        x, zs = prog.unpack(oracle.solve_lp_exact(prog.dense()).primal)
        for s in prog.scenarios:
            terms = float(x.sum() + s.costs[s.finite] @ zs[s][s.finite])
            cost = np.mean([transcript_cost(na.round_na_1(x, zs[s], s, r), Select1()) for _ in range(5000)])
            worst1 = max(worst1, cost / terms)
        k = 2
        prog = na.NaProgram(n, SelectK(k), scen)
        lp = oracle.solve_lp_exact(prog.dense())
        x, zs = prog.unpack(lp.primal)
        cost = np.mean([transcript_cost(na.round_na_k(x, zs[s], s, k, r), SelectK(k))
                        for s in prog.scenarios for _ in range(2000)])
        worstk = max(worstk, cost / lp.optimum)
    b1, bk = E_RATIO * 1.10, 6 * 1.10
    ok = worst1 <= b1 and worstk <= bk
    verdict("C10", ok, f"select-1 worst {worst1:.3f} <= {b1:.3f}; select-k worst {worstk:.3f} <= {bk:.2f}", start)


def test_c11_bandit_regret_decay(verdict):
    start = time.time()
    n, L = 3, 3.0
    horizons = (2000, 16000, 128000)
    memo: dict = {}
    means, bounds = [], []
    for T in horizons:
        seq = generate_instance("constant", n, T, seed=11)
        best = oracle.best_fixed_permutation(seq, Select1())
        regrets = [bd.run_bandit(seq, Select1(), seed=seed, benchmark=best.per_round, memo=memo).average_regret()
                   for seed in range(20)]
        means.append(float(np.mean(regrets)))
        bounds.append(2 * (2 * L * math.log(n) + n) ** (2 / 3) * n ** (1 / 3) * T ** (-1 / 3))
    slope = harness.loglog_slope(horizons, means)
    elapsed = time.time() - start
    ok = slope is not None and slope <= -0.20 and all(m <= b for m, b in zip(means, bounds)) and elapsed < 1800
    verdict("C11", ok, "mean regret " + ", ".join(f"T={T}: {m:.4f}<={b:.3f}" for T, m, b in
                                                   zip(horizons, means, bounds)) +
            f"; slope {slope:.3f} <= -0.20", start)


def test_c12_replay_is_bitwise_identical(verdict, tmp_path):
    start = time.time()
    same = []
    for algo, fam in (("full-info", {"kind": "select1"}), ("bandit", {"kind": "select1"}),
                      ("na", {"kind": "selectk", "k": 2})):
        doc = {"schema_version": 1, "algorithm": algo, "family": fam,
               "instance": {"generator": {"kind": "uniform-costs", "n": 3, "seed": 4}},
               "T": 80, "seeds": [0, 7], "overrides": {"rounding": True} if algo != "na" else {}}
        cfg = load_config(text=json.dumps(doc))
        for d in ("a", "b"):
            harness.run_experiment(cfg, tmp_path / algo / d)
        same.append(all((tmp_path / algo / "a" / f).read_bytes() == (tmp_path / algo / "b" / f).read_bytes()
                        for f in ("results.csv", "runs.jsonl", "summary.json")))
    verdict("C12", all(same), "replayed full-info, bandit and na configs: results.csv, runs.jsonl and "
            f"summary.json identical = {same}", start)
