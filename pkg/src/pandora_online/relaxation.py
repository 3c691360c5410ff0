"""Scenario-aware convex relaxations of a fractional opening schedule.

A schedule ``x`` is an n-by-n doubly stochastic matrix, ``x[i, t]`` the mass of
box i opened at time slot t+1 (slots are 1-indexed in the formulas, 0-indexed
in arrays). For a scenario the relaxation value is the optimum of an inner LP
whose variables ``z`` are capped by ``x``; its subgradient in ``x`` comes from
the duals of those caps.

Select-1 is solved in closed form by a greedy fill. Select-k and matroid
bases use cutting planes over HiGHS, with coverage variables ``y_t`` bounded
by the selection mass placed strictly before slot t, plus a terminal
coverage row requiring a complete selection by the end of the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from . import matroid as mt
from .core import INF, Family, MatroidBasis, Scenario, Select1, SelectK

ROW_TOL = 1e-9
CUT_TOL = 1e-7
MAX_CUTS = 500


class NotDoublyStochastic(ValueError):
    pass


class NoSubgradient(ValueError):
    pass


class CuttingPlaneError(RuntimeError):
    pass


@dataclass(frozen=True)
class FractionalAssignment:
    z: np.ndarray  # box x slot
    y: np.ndarray | None = None  # coverage per slot (k / matroid)


@dataclass(frozen=True)
class RelaxResult:
    value: float
    assignment: FractionalAssignment
    open_cost: float  # sum_t (1 - y_t), or sum t*z for select-1
    value_cost: float  # sum c_i z_it
    grad: np.ndarray | None
    theta: float | None = None
    cuts: int = 0

    @property
    def z(self) -> np.ndarray:
        return self.assignment.z

    @property
    def y(self) -> np.ndarray | None:
        return self.assignment.y


def check_schedule(x: np.ndarray, tol: float = ROW_TOL) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise NotDoublyStochastic(f"schedule must be square, got {x.shape}")
    if (x < -tol).any() or (x > 1 + tol).any():
        raise NotDoublyStochastic("entries must lie in [0, 1]")
    rows, cols = x.sum(axis=1), x.sum(axis=0)
    err = max(np.abs(rows - 1).max(), np.abs(cols - 1).max())
    if err > tol:
        raise NotDoublyStochastic(f"row/column sums off by {err:.3g}")
    return x


def uniform_schedule(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


# ---------------------------------------------------------------------------
# select one box: greedy


@lru_cache(maxsize=4096)
def _greedy_order(costs_key: bytes, n: int):
    costs = np.frombuffer(costs_key, dtype=float)
    fin = np.flatnonzero(np.isfinite(costs))
    if fin.size == 0:
        return None
    ii, tt = np.meshgrid(fin, np.arange(n), indexing="ij")
    ii, tt = ii.ravel(), tt.ravel()
    keys = (tt + 1) + costs[ii]
    order = np.lexsort((ii, tt, keys))  # key, then slot, then box
    return ii[order], tt[order], keys[order]


def spa_keys(s: Scenario) -> np.ndarray:
    """``(t + c_i)`` for every box/slot pair; INF rows for unselectable boxes."""
    n = s.n
    return np.arange(1, n + 1)[None, :] + s.costs[:, None]


def eval_spa(x: np.ndarray, s: Scenario, *, check: bool = True) -> RelaxResult:
    """Exact inner optimum of the select-1 relaxation by greedy fill.

    Pairs are filled in increasing order of ``t + c_i`` up to capacity
    ``x[i, t]`` until one unit of mass is placed. ``theta`` is the key of
    the last (possibly partially) filled pair; the subgradient entry of
    every pair with a smaller key is ``-(theta - key)``.
    """
    if check:
        x = check_schedule(x)
    n = x.shape[0]
    prep = _greedy_order(s.key(), n)
    if prep is None:
        return RelaxResult(INF, FractionalAssignment(np.zeros((n, n))), INF, INF, None)
    ii, tt, keys = prep
    cap = x[ii, tt]
    cum = np.cumsum(cap)
    p = int(np.searchsorted(cum, 1.0 - 1e-12))
    if p >= cum.size:
        if cum[-1] < 1.0 - 1e-8:
            raise NotDoublyStochastic("finite-cost boxes carry less than one unit of mass")
        p = cum.size - 1
    fill = cap[: p + 1].copy()
    fill[p] = 1.0 - (cum[p - 1] if p > 0 else 0.0)
    z = np.zeros((n, n))
    z[ii[: p + 1], tt[: p + 1]] = fill
    theta = float(keys[p])
    open_cost = float(fill @ (tt[: p + 1] + 1))
    value_cost = float(fill @ s.costs[ii[: p + 1]])
    grad = np.zeros((n, n))
    below = keys < theta
    grad[ii[below], tt[below]] = keys[below] - theta
    return RelaxResult(open_cost + value_cost, FractionalAssignment(z), open_cost, value_cost, grad, theta)


def subgrad_spa(x: np.ndarray, s: Scenario) -> np.ndarray:
    r = eval_spa(x, s)
    if r.grad is None:
        raise NoSubgradient("relaxation value is infinite")
    return r.grad


# ---------------------------------------------------------------------------
# select k / matroid basis: cutting planes


class _CutLP:
    """LP over (z on finite boxes x slots, y per slot) with a growing cut pool."""

    def __init__(self, x: np.ndarray, s: Scenario):
        self.x = x
        self.s = s
        self.n = n = x.shape[0]
        self.fin = np.flatnonzero(s.finite)
        self.nf = self.fin.size
        self.nz = self.nf * n
        self.nvar = self.nz + n
        c = np.zeros(self.nvar)
        c[: self.nz] = np.repeat(s.costs[self.fin], n)
        c[self.nz:] = -1.0
        self.c = c
        ub = np.empty(self.nvar)
        ub[: self.nz] = np.clip(x[self.fin], 0.0, None).ravel()
        ub[self.nz:] = 1.0
        self.bounds = np.column_stack([np.zeros(self.nvar), ub])
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.keys: set = set()

    def zidx(self, box_pos: int, t: int) -> int:
        return box_pos * self.n + t

    def add_coverage(self, A: tuple, t: int | None, need: float) -> bool:
        """``sum_{i not in A} sum_{t' < t} z_it' >= need * y_t`` (t=None: all slots, y=1)."""
        key = ("cov", A, t)
        if key in self.keys:
            return False
        self.keys.add(key)
        row = np.zeros(self.nvar)
        aset = set(A)
        upto = self.n if t is None else t
        for p, i in enumerate(self.fin):
            if i in aset:
                continue
            row[p * self.n: p * self.n + upto] = -1.0
        if t is None:
            self.rows.append(row)
            self.rhs.append(-need)
        else:
            row[self.nz + t] = need
            self.rows.append(row)
            self.rhs.append(0.0)
        return True

    def add_rank(self, A: tuple, r: int) -> bool:
        key = ("rank", A)
        if key in self.keys:
            return False
        self.keys.add(key)
        row = np.zeros(self.nvar)
        aset = set(A)
        for p, i in enumerate(self.fin):
            if i in aset:
                row[p * self.n: (p + 1) * self.n] = 1.0
        self.rows.append(row)
        self.rhs.append(float(r))
        return True

    def solve(self):
        A = np.array(self.rows) if self.rows else None
        b = np.array(self.rhs) if self.rows else None
        res = linprog(self.c, A_ub=A, b_ub=b, bounds=self.bounds, method="highs")
        if res.status != 0:
            raise CuttingPlaneError(f"cutting-plane LP failed: {res.message}")
        return res

    def unpack(self, res):
        n = self.n
        z = np.zeros((n, n))
        z[self.fin] = res.x[: self.nz].reshape(self.nf, n)
        z = np.clip(z, 0.0, None)
        y = np.clip(res.x[self.nz:], 0.0, 1.0)
        return z, y

    def grad(self, res) -> np.ndarray:
        lam = res.ineqlin.marginals if self.rows else np.zeros(0)
        A = np.array(self.rows) if self.rows else np.zeros((0, self.nvar))
        reduced = self.c - A.T @ lam
        g = np.zeros((self.n, self.n))
        g[self.fin] = np.minimum(reduced[: self.nz], 0.0).reshape(self.nf, self.n)
        return g


def _prefix_strict(z: np.ndarray) -> np.ndarray:
    """``P[i, t] = sum_{t' < t} z[i, t']`` for t = 0..n (column n is the full total)."""
    n = z.shape[0]
    P = np.zeros((n, n + 1))
    P[:, 1:] = np.cumsum(z, axis=1)
    return P


def _finish(lp: _CutLP, res, cuts: int) -> RelaxResult:
    z, y = lp.unpack(res)
    value_cost = float((z[lp.fin] * lp.s.costs[lp.fin, None]).sum())
    open_cost = float(lp.n - y.sum())
    value = float(res.fun + lp.n)
    return RelaxResult(value, FractionalAssignment(z, y), open_cost, value_cost, lp.grad(res), None, cuts)


def eval_spa_k(x: np.ndarray, s: Scenario, k: int, *, check: bool = True) -> RelaxResult:
    """Select-k relaxation: ``min sum_t (1 - y_t) + sum c_i z_it`` under cover cuts.

    Cuts ``sum_{t'<t, i not in A} z_it' >= (k - |A|) y_t`` are separated by
    taking A as the |A| boxes with the largest prefix mass, for each size
    ``|A| < k``.
    """
    if check:
        x = check_schedule(x)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, n], got {k}")
    if int(s.finite.sum()) < k:
        return RelaxResult(INF, FractionalAssignment(np.zeros((n, n)), np.zeros(n)), INF, INF, None)
    lp = _CutLP(x, s)
    for t in range(n):
        lp.add_coverage((), t, k)
    lp.add_coverage((), None, k)
    cuts = 0
    while True:
        res = lp.solve()
        z, y = lp.unpack(res)
        P = _prefix_strict(z)
        added = 0
        for t in range(n + 1):
            prefix = P[:, t]
            yt = 1.0 if t == n else y[t]
            order = np.lexsort((np.arange(n), -prefix))
            total = prefix.sum()
            best, best_a = CUT_TOL, None
            top = 0.0
            for m in range(k):
                if m > 0:
                    top += prefix[order[m - 1]]
                viol = (k - m) * yt - (total - top)
                if viol > best:
                    best, best_a = viol, tuple(sorted(int(b) for b in order[:m]))
            if best_a is not None:
                added += lp.add_coverage(best_a, None if t == n else t, k - len(best_a))
        if not added:
            return _finish(lp, res, cuts)
        cuts += added
        if cuts > MAX_CUTS:
            raise CuttingPlaneError(f"select-k cutting planes exceeded {MAX_CUTS} cuts")


def eval_spa_matroid(x: np.ndarray, s: Scenario, m: mt.Matroid, *, check: bool = True) -> RelaxResult:
    """Matroid-basis relaxation with rank-upper and rank-coverage cut families."""
    if check:
        x = check_schedule(x)
    n = x.shape[0]
    if m.n != n:
        raise ValueError("matroid ground set size differs from the schedule")
    r_full = m.rank(range(n))
    fin = np.flatnonzero(s.finite)
    if m.rank(fin.tolist()) < r_full:
        return RelaxResult(INF, FractionalAssignment(np.zeros((n, n)), np.zeros(n)), INF, INF, None)
    if r_full == 0:
        return RelaxResult(0.0, FractionalAssignment(np.zeros((n, n)), np.ones(n)), 0.0, 0.0, np.zeros((n, n)))
    lp = _CutLP(x, s)
    for t in range(n):
        lp.add_coverage((), t, r_full)
    lp.add_coverage((), None, r_full)
    lp.add_rank(tuple(range(n)), r_full)
    cuts = 0
    while True:
        res = lp.solve()
        z, y = lp.unpack(res)
        added = 0
        cut = mt.separate_rank_upper(m, z.sum(axis=1), tol=CUT_TOL)
        if cut is not None:
            A, _ = cut
            added += lp.add_rank(A, m.rank(A))
        P = _prefix_strict(z)
        for t in range(n + 1):
            yt = 1.0 if t == n else float(y[t])
            cut = mt.separate_coverage(m, P[:, t], yt, tol=CUT_TOL)
            if cut is not None:
                A, _ = cut
                added += lp.add_coverage(A, None if t == n else t, r_full - m.rank(A))
        if not added:
            return _finish(lp, res, cuts)
        cuts += added
        if cuts > MAX_CUTS:
            raise CuttingPlaneError(f"matroid cutting planes exceeded {MAX_CUTS} cuts")


def subgrad_spa_k(x: np.ndarray, s: Scenario, k: int) -> np.ndarray:
    r = eval_spa_k(x, s, k)
    if r.grad is None:
        raise NoSubgradient("relaxation value is infinite")
    return r.grad


def subgrad_spa_matroid(x: np.ndarray, s: Scenario, m: mt.Matroid) -> np.ndarray:
    r = eval_spa_matroid(x, s, m)
    if r.grad is None:
        raise NoSubgradient("relaxation value is infinite")
    return r.grad


def evaluate(x: np.ndarray, s: Scenario, family: Family, *, check: bool = True) -> RelaxResult:
    """Dispatch to the relaxation matching ``family``."""
    if isinstance(family, Select1):
        return eval_spa(x, s, check=check)
    if isinstance(family, SelectK):
        return eval_spa_k(x, s, family.k, check=check)
    if isinstance(family, MatroidBasis):
        return eval_spa_matroid(x, s, family.matroid, check=check)
    raise TypeError(f"unknown family {family!r}")
