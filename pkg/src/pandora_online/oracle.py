"""Brute-force ground truth for small instances.

Exact LP solves through the in-house simplex (independent of the HiGHS
backend used by the relaxations), enumerated full-cut versions of the
relaxation LPs, the best fixed opening order with optimal stopping, and the
best fixed set of boxes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matroid as mt
from .core import INF, Family, MatroidBasis, Scenario, ScenarioSequence, Select1, SelectK, best_selection
from .simplex import LPResult, solve_lp

MAX_PERM_N = 8
MAX_SET_N = 16


class OracleSizeError(ValueError):
    pass


@dataclass
class DenseLP:
    """``min c @ v + const`` s.t. ``A_ub v <= b_ub``, ``A_eq v == b_eq``, ``0 <= v <= ub``."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    ub: np.ndarray | None = None
    const: float = 0.0

    @property
    def size(self) -> int:
        rows = sum(a.shape[0] for a in (self.A_ub, self.A_eq) if a is not None)
        return rows + len(self.c)


@dataclass
class ExactSolution:
    optimum: float
    primal: np.ndarray
    duals_ub: np.ndarray
    duals_eq: np.ndarray
    duals_bound: np.ndarray
    exact: bool


def solve_lp_exact(lp: DenseLP, exact: bool | None = None) -> ExactSolution:
    """Solve with rational pivots for small programs, certified floats otherwise."""
    if exact is None:
        exact = lp.size <= 60
    res: LPResult = solve_lp(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lp.ub, exact=exact)
    return ExactSolution(res.optimum + lp.const, res.x, res.duals_ub, res.duals_eq, res.duals_bound, res.exact)


def _dedupe(rows, rhs):
    seen, out_r, out_b = set(), [], []
    for r, b in zip(rows, rhs):
        key = (r.tobytes(), b)
        if key not in seen:
            seen.add(key)
            out_r.append(r)
            out_b.append(b)
    return np.array(out_r), np.array(out_b, dtype=float)


# ---------------------------------------------------------------------------
# relaxation LPs with every cut listed


def spa_lp(x: np.ndarray, s: Scenario) -> DenseLP:
    """Select-1 inner LP; variables are z over finite boxes x slots."""
    n = x.shape[0]
    fin = np.flatnonzero(s.finite)
    c = ((np.arange(1, n + 1)[None, :] + s.costs[fin, None])).ravel()
    return DenseLP(c, A_eq=np.ones((1, c.size)), b_eq=np.ones(1), ub=x[fin].ravel().copy())


def _cover_lp(x: np.ndarray, s: Scenario, cuts, rank_rows=()) -> DenseLP:
    """Variables (z on finite boxes x slots, y per slot); objective sum c z - sum y + n."""
    n = x.shape[0]
    fin = np.flatnonzero(s.finite)
    nz = fin.size * n
    c = np.concatenate([np.repeat(s.costs[fin], n), -np.ones(n)])
    rows, rhs = [], []
    for A, t, need in cuts:
        row = np.zeros(nz + n)
        upto = n if t is None else t
        for p, i in enumerate(fin):
            if i not in A:
                row[p * n: p * n + upto] = -1.0
        if t is None:
            rows.append(row)
            rhs.append(-float(need))
        else:
            row[nz + t] = float(need)
            rows.append(row)
            rhs.append(0.0)
    for A, r in rank_rows:
        row = np.zeros(nz + n)
        for p, i in enumerate(fin):
            if i in A:
                row[p * n: (p + 1) * n] = 1.0
        rows.append(row)
        rhs.append(float(r))
    A_ub, b_ub = _dedupe(rows, rhs)
    ub = np.concatenate([x[fin].ravel(), np.ones(n)])
    return DenseLP(c, A_ub, b_ub, ub=ub, const=float(n))


def spa_k_lp(x: np.ndarray, s: Scenario, k: int) -> DenseLP:
    n = x.shape[0]
    cuts = []
    for size in range(k):
        for A in itertools.combinations(range(n), size):
            for t in list(range(n)) + [None]:
                cuts.append((set(A), t, k - size))
    return _cover_lp(x, s, cuts)


def spa_matroid_lp(x: np.ndarray, s: Scenario, m: mt.Matroid) -> DenseLP:
    n = x.shape[0]
    r_full = m.rank(range(n))
    cuts, ranks = [], []
    for size in range(n + 1):
        for A in itertools.combinations(range(n), size):
            rA = m.rank(A)
            if size:
                ranks.append((set(A), rA))
            if rA < r_full:
                for t in list(range(n)) + [None]:
                    cuts.append((set(A), t, r_full - rA))
    return _cover_lp(x, s, cuts, ranks)


def relaxation_value(x: np.ndarray, s: Scenario, family: Family, exact: bool | None = None) -> float:
    """Relaxation value from the fully enumerated LP; INF when no selection is finite."""
    n = x.shape[0]
    if isinstance(family, Select1):
        if not s.finite.any():
            return INF
        return solve_lp_exact(spa_lp(x, s), exact).optimum
    if isinstance(family, SelectK):
        if int(s.finite.sum()) < family.k:
            return INF
        return solve_lp_exact(spa_k_lp(x, s, family.k), exact).optimum
    m = family.matroid
    r_full = m.rank(range(n))
    if m.rank(np.flatnonzero(s.finite).tolist()) < r_full:
        return INF
    if r_full == 0:
        return 0.0
    return solve_lp_exact(spa_matroid_lp(x, s, m), exact).optimum


# ---------------------------------------------------------------------------
# value tables over subsets


def _masks(n: int) -> np.ndarray:
    """(2^n, n) membership table; row ``mask`` has bit i at column i."""
    ids = np.arange(1 << n)
    return ((ids[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def subset_values(costs: np.ndarray, family: Family) -> np.ndarray:
    """Best feasible selection value inside every subset, indexed by bitmask."""
    n = costs.shape[0]
    M = _masks(n)
    if isinstance(family, (Select1, SelectK)):
        k = 1 if isinstance(family, Select1) else family.k
        vals = np.where(M, costs[None, :], INF)
        vals.sort(axis=1)
        return vals[:, :k].sum(axis=1)
    out = np.empty(1 << n)
    for mask in range(1 << n):
        out[mask] = best_selection(costs, np.flatnonzero(M[mask]), family)[0]
    return out


def _distinct(seq: ScenarioSequence):
    counts = Counter(seq.scenarios)
    scen = list(counts)
    return scen, np.array([counts[s] for s in scen], dtype=float)


def _stop_costs(values: np.ndarray, prefix_masks: np.ndarray, empty_value: float) -> np.ndarray:
    """Optimal stopping cost per permutation given per-subset values."""
    n = prefix_masks.shape[1]
    best = np.full(prefix_masks.shape[0], empty_value)
    for t in range(n):
        best = np.minimum(best, (t + 1) + values[prefix_masks[:, t]])
    return best


@dataclass
class PermutationBenchmark:
    order: tuple[int, ...]
    average: float
    per_round: np.ndarray


def best_fixed_permutation(seq: ScenarioSequence, family: Family) -> PermutationBenchmark:
    """Best fixed opening order with per-scenario optimal stopping.

    Ties go to the lexicographically smallest order.
    """
    n = seq.n
    if n > MAX_PERM_N:
        raise OracleSizeError(f"permutation enumeration is limited to n <= {MAX_PERM_N}; sample orders instead")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    prefix = np.cumsum(1 << perms, axis=1)
    scen, weight = _distinct(seq)
    costs = np.empty((len(scen), len(perms)))
    for r, s in enumerate(scen):
        vals = subset_values(s.costs, family)
        costs[r] = _stop_costs(vals, prefix, vals[0])
    total = weight @ costs
    j = int(np.argmin(total))
    index = {s: i for i, s in enumerate(scen)}
    per_round = np.array([costs[index[s], j] for s in seq])
    return PermutationBenchmark(tuple(int(b) for b in perms[j]), float(total[j] / seq.T), per_round)


def order_cost(order, s: Scenario, family: Family) -> float:
    """Optimal stopping cost of one scenario under a fixed order."""
    vals = subset_values(s.costs, family)
    prefix = np.cumsum(1 << np.asarray(order, dtype=np.int64))[None, :]
    return float(_stop_costs(vals, prefix, vals[0])[0])


@dataclass
class SetBenchmark:
    boxes: tuple[int, ...]
    average: float
    per_round: np.ndarray


def best_nonadaptive_set(seq: ScenarioSequence, family: Family) -> SetBenchmark:
    """Best fixed set of boxes opened every round; ties go to the smallest bitmask."""
    n = seq.n
    if n > MAX_SET_N:
        raise OracleSizeError(f"subset enumeration is limited to n <= {MAX_SET_N}")
    sizes = _masks(n).sum(axis=1).astype(float)
    scen, weight = _distinct(seq)
    total = np.zeros(1 << n)
    tables = {}
    for s, w in zip(scen, weight):
        vals = subset_values(s.costs, family)
        tables[s] = vals
        total = total + w * vals
    total = sizes + total / seq.T
    mask = int(np.argmin(total))
    boxes = tuple(int(i) for i in range(n) if mask >> i & 1)
    per_round = np.array([sizes[mask] + tables[s][mask] for s in seq])
    return SetBenchmark(boxes, float(total[mask]), per_round)


# ---------------------------------------------------------------------------
# caching and fixtures


def instance_hash(seq: ScenarioSequence, family: Family) -> str:
    doc = {"scenarios": [s.to_json() for s in seq], "family": family.to_json()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


_CACHE: dict = {}


def cached(kind: str, seq: ScenarioSequence, family: Family):
    key = (kind, instance_hash(seq, family))
    if key not in _CACHE:
        fn = {"permutation": best_fixed_permutation, "set": best_nonadaptive_set}[kind]
        _CACHE[key] = fn(seq, family)
    return _CACHE[key]


def fixture(seq: ScenarioSequence, family: Family) -> dict:
    doc = {"hash": instance_hash(seq, family), "n": seq.n, "T": seq.T, "family": family.to_json()}
    if seq.n <= MAX_PERM_N:
        p = cached("permutation", seq, family)
        doc["permutation"] = {"order": list(p.order), "average": p.average, "per_round": p.per_round.tolist()}
    if seq.n <= MAX_SET_N:
        b = cached("set", seq, family)
        doc["set"] = {"boxes": list(b.boxes), "average": b.average, "per_round": b.per_round.tolist()}
    return doc


def export_fixture(path: str | Path, seq: ScenarioSequence, family: Family) -> dict:
    doc = fixture(seq, family)
    Path(path).write_text(json.dumps(_encode(doc), sort_keys=True, indent=1))
    return doc


def load_fixture(path: str | Path) -> dict:
    return _decode(json.loads(Path(path).read_text()))


def _encode(v):
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_encode(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _decode(v):
    if isinstance(v, dict):
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    if v == "inf":
        return INF
    return v
