"""Online play against the best fixed set of boxes.

The learner keeps an LP over open variables ``x_i`` and one assignment
vector ``z^s`` per distinct explored scenario, finds a cheap feasible point
with the ellipsoid method under a doubling budget, and rounds that point
each round it exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matroid as mt
from .core import (INF, Family, InspectionTranscript, MatroidBasis, Scenario, ScenarioSequence, Select1,
                   SelectK, best_selection, open_all_transcript, round_rng, transcript_cost)
from .ellipsoid import EllipsoidState, ellipsoid
from .ledger import RegretLedger

DELTA = 1e-7
EPS = 1e-7
PUBLISHED_BETA, PUBLISHED_ALPHA = 1.0 / 100.0, 1.0 / 4950.0
DEFAULT_BETA, DEFAULT_ALPHA = 3.0, 3.0


class BudgetExhausted(RuntimeError):
    pass


def _target(family: Family, n: int) -> int:
    return family.target(n)


@dataclass
class NaProgram:
    """LP over ``x`` (n open variables) and ``z^s`` on the finite boxes of each scenario.

    Objective ``sum x + sum_s w_s sum c^s z^s`` with ``w_s = 1/|C|`` over the
    distinct scenarios in C. Select-1 / select-k ask ``sum z^s >= k`` (the
    minimizer meets it with equality); matroid bases ask ``z^s(A) <= r(A)``
    and ``z^s(B \\ A) >= r(B) - r(A)`` for every A.
    """

    n: int
    family: Family
    scenarios: list[Scenario] = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.family, MatroidBasis):
            mt._groups(self.family.matroid)  # unsupported variants fail here
        self.scenarios = sorted(set(self.scenarios), key=lambda s: s.key())

    def add(self, s: Scenario) -> bool:
        """Insert a scenario; False when it is already present."""
        if s in self.scenarios:
            return False
        self.scenarios.append(s)
        self.scenarios.sort(key=lambda v: v.key())
        return True

    def key(self) -> tuple:
        return (repr(self.family.to_json()), self.n, tuple(s.key() for s in self.scenarios))

    @property
    def k(self) -> int:
        return _target(self.family, self.n)

    def layout(self) -> list[tuple[np.ndarray, int]]:
        """Per scenario: finite boxes and the offset of its z block."""
        out, off = [], self.n
        for s in self.scenarios:
            fin = np.flatnonzero(s.finite)
            out.append((fin, off))
            off += fin.size
        return out

    @property
    def dim(self) -> int:
        return self.n + sum(int(s.finite.sum()) for s in self.scenarios)

    def objective(self) -> np.ndarray:
        c = np.zeros(self.dim)
        c[: self.n] = 1.0
        if self.scenarios:
            w = 1.0 / len(self.scenarios)
            for s, (fin, off) in zip(self.scenarios, self.layout()):
                c[off: off + fin.size] = w * s.costs[fin]
        return c

    def linear_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """``A v <= b`` rows shared by all families: z <= x and, for select families, coverage."""
        rows, rhs = [], []
        d = self.dim
        for s, (fin, off) in zip(self.scenarios, self.layout()):
            for p, i in enumerate(fin):
                r = np.zeros(d)
                r[off + p] = 1.0
                r[i] = -1.0
                rows.append(r)
                rhs.append(0.0)
            if not isinstance(self.family, MatroidBasis):
                r = np.zeros(d)
                r[off: off + fin.size] = -1.0
                rows.append(r)
                rhs.append(-float(self.k))
        if not rows:
            return np.zeros((0, d)), np.zeros(0)
        return np.array(rows), np.array(rhs)

    def matroid_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Every rank and coverage row, enumerated over all subsets (small n only)."""
        m = self.family.matroid
        if self.n > 12:
            raise ValueError("subset enumeration limited to n <= 12")
        r_full = m.rank(range(self.n))
        rows, rhs = [], []
        d = self.dim
        for fin, off in self.layout():
            pos = {int(i): off + p for p, i in enumerate(fin)}
            for mask in range(1, 1 << self.n):
                A = [i for i in range(self.n) if mask >> i & 1]
                rA = m.rank(A)
                up = np.zeros(d)
                for i in A:
                    if i in pos:
                        up[pos[i]] = 1.0
                rows.append(up)
                rhs.append(float(rA))
            for mask in range(0, 1 << self.n):
                A = {i for i in range(self.n) if mask >> i & 1}
                need = r_full - m.rank(A)
                if need <= 0:
                    continue
                cov = np.zeros(d)
                for i, j in pos.items():
                    if i not in A:
                        cov[j] = -1.0
                rows.append(cov)
                rhs.append(-float(need))
        return np.array(rows), np.array(rhs)

    def dense(self):
        """The full program as an oracle ``DenseLP`` (matroid rows enumerated)."""
        from .oracle import DenseLP

        A, b = self.linear_rows()
        if isinstance(self.family, MatroidBasis):
            Am, bm = self.matroid_rows()
            A, b = np.vstack([A, Am]), np.concatenate([b, bm])
        return DenseLP(self.objective(), A if A.size else None, b if b.size else None, ub=np.ones(self.dim))

    def unpack(self, v: np.ndarray) -> tuple[np.ndarray, dict]:
        x = np.clip(v[: self.n], 0.0, 1.0)
        zs = {}
        for s, (fin, off) in zip(self.scenarios, self.layout()):
            z = np.zeros(self.n)
            z[fin] = np.clip(v[off: off + fin.size], 0.0, None)
            zs[s] = np.minimum(z, x)
        return x, zs

    def pack(self, x: np.ndarray, zs: dict) -> np.ndarray:
        v = np.zeros(self.dim)
        v[: self.n] = x
        for s, (fin, off) in zip(self.scenarios, self.layout()):
            v[off: off + fin.size] = zs[s][fin]
        return v

    def violation(self, v: np.ndarray) -> float:
        """Largest constraint violation of ``v`` (bounds, rows, matroid cuts)."""
        worst = max(float(np.max(-v, initial=0.0)), float(np.max(v - 1.0, initial=0.0)))
        A, b = self.linear_rows()
        if A.shape[0]:
            worst = max(worst, float(np.max(A @ v - b)))
        if isinstance(self.family, MatroidBasis):
            for cut in self._matroid_cuts(v, tol=-np.inf):
                worst = max(worst, cut[2])
        return worst

    def _matroid_cuts(self, v: np.ndarray, tol: float):
        """Most violated rank and coverage cut per scenario as ``(row, rhs, violation)``."""
        m = self.family.matroid
        r_full = m.rank(range(self.n))
        d = self.dim
        for fin, off in self.layout():
            z = np.zeros(self.n)
            z[fin] = v[off: off + fin.size]
            pos = {int(i): off + p for p, i in enumerate(fin)}
            cut = mt.separate_rank_upper(m, np.maximum(z, 0.0), tol=tol)
            if cut is not None:
                A, viol = cut
                row = np.zeros(d)
                for i in A:
                    if i in pos:
                        row[pos[i]] = 1.0
                yield row, float(m.rank(A)), viol
            cut = mt.separate_coverage(m, z, 1.0, tol=tol)
            if cut is not None:
                A, viol = cut
                row = np.zeros(d)
                aset = set(A)
                for i, j in pos.items():
                    if i not in aset:
                        row[j] = -1.0
                yield row, -float(r_full - m.rank(A)), viol

    def separator(self, budget: float, delta: float = DELTA):
        """Separation oracle for the program relaxed by ``delta`` with ``objective <= budget``."""
        d = self.dim
        A, b = self.linear_rows()
        c = self.objective()
        # bounds and objective as rows: -v <= 0, v <= 1, c v <= budget
        eye = np.eye(d)
        rows = np.vstack([A, -eye, eye, c[None, :]])
        rhs = np.concatenate([b, np.zeros(d), np.ones(d), [budget]])
        norms = np.linalg.norm(rows, axis=1)
        norms[norms == 0] = 1.0
        matroid = isinstance(self.family, MatroidBasis)

        def separate(v):
            viol = rows @ v - rhs
            j = int(np.argmax(viol))
            if viol[j] > delta:
                return rows[j], rhs[j]
            if matroid:
                best = None
                for row, r, amount in self._matroid_cuts(v, tol=delta):
                    if best is None or amount > best[2]:
                        best = (row, r, amount)
                if best is not None:
                    return best[0], best[1]
            return None

        return separate, float(max(norms.max(), math.sqrt(self.n)))

    def to_lp_text(self) -> str:
        """CPLEX LP format; floats are written with ``repr`` so they round-trip exactly."""
        names = [f"x{i}" for i in range(self.n)]
        for j, (fin, _) in enumerate(self.layout()):
            names += [f"z{j}_{i}" for i in fin]
        c = self.objective()
        lp = self.dense()
        out = ["\\ non-adaptive program", "Minimize", " obj: " + _expr(c, names), "Subject To"]
        if lp.A_ub is not None:
            for r, (row, b) in enumerate(zip(lp.A_ub, lp.b_ub)):
                out.append(f" c{r}: {_expr(row, names)} <= {float(b)!r}")
        out.append("Bounds")
        out += [f" 0 <= {nm} <= 1" for nm in names]
        out.append("End")
        return "\n".join(out) + "\n"


def _expr(coefs, names) -> str:
    terms = []
    for a, nm in zip(coefs, names):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        terms.append(f"{sign} {abs(float(a))!r} {nm}")
    if not terms:
        return "0 " + names[0] if names else "0"
    s = " ".join(terms)
    return s[2:] if s.startswith("+ ") else s


# ---------------------------------------------------------------------------
# ellipsoid with doubling budget


@dataclass
class EllipsoidSettings:
    delta: float = DELTA  # constraint relaxation that makes the target full-dimensional
    eps: float = EPS
    iter_factor: float = 20.0
    radius: float | None = None  # default max(2n, half-diagonal of the unit cube + 1)


@dataclass
class EllipsoidOutcome:
    feasible: bool
    point: np.ndarray | None
    state: EllipsoidState


def ellipsoid_feasible(program: NaProgram, budget: float, settings: EllipsoidSettings | None = None) -> EllipsoidOutcome:
    """Central-cut ellipsoid on the program with the extra cut ``objective <= budget``."""
    settings = settings or EllipsoidSettings()
    d = program.dim
    if not program.scenarios:
        pt = np.zeros(d)
        return EllipsoidOutcome(budget >= 0, pt if budget >= 0 else None,
                                EllipsoidState(pt, np.zeros((d, d)), 0, 0.0, budget))
    separate, max_norm = program.separator(budget, settings.delta)
    radius = settings.radius or max(2.0 * program.n, 0.5 * math.sqrt(d) + 1.0)
    max_iter = int(settings.iter_factor * d * d * math.log(1.0 / settings.eps)) + 1
    res = ellipsoid(separate, np.full(d, 0.5), radius, min_radius=settings.delta / max_norm, max_iter=max_iter)
    res.state.budget = budget
    return EllipsoidOutcome(res.feasible, res.point, res.state)


_SOLVE_CACHE: dict = {}


@dataclass
class NaSolution:
    x: np.ndarray
    z: dict
    budget: float
    objective: float


def solve_doubling(program: NaProgram, settings: EllipsoidSettings | None = None, max_budget: float | None = None,
                   use_cache: bool = True) -> NaSolution:
    """Budgets 1, 2, 4, ... until the ellipsoid finds a point."""
    n = program.n
    if not program.scenarios or (isinstance(program.family, MatroidBasis) and program.k == 0):
        x = np.zeros(n)
        return NaSolution(x, {s: np.zeros(n) for s in program.scenarios}, 0.0, 0.0)
    key = program.key()
    if use_cache and key in _SOLVE_CACHE:
        return _SOLVE_CACHE[key]
    cap = max_budget or 4.0 * (n + n * program.k + 1)
    b = 1.0
    while b <= cap:
        out = ellipsoid_feasible(program, b, settings)
        if out.feasible:
            x, zs = program.unpack(out.point)
            sol = NaSolution(x, zs, b, float(program.objective() @ out.point))
            if use_cache:
                _SOLVE_CACHE[key] = sol
            return sol
        b *= 2.0
    raise BudgetExhausted(f"no feasible point with objective <= {cap}")


def clear_cache() -> None:
    _SOLVE_CACHE.clear()


# ---------------------------------------------------------------------------
# assignments for scenarios not in the program


def scenario_assignment(x: np.ndarray, s: Scenario, family: Family, tol: float = 1e-6) -> np.ndarray | None:
    """Cheapest ``z <= x`` meeting the family's coverage for ``s``; None if ``x`` cannot cover it."""
    n = x.shape[0]
    cap = np.where(s.finite, np.clip(x, 0.0, 1.0), 0.0)
    if isinstance(family, MatroidBasis):
        groups = [(list(g), min(c, len(g))) for g, c in mt._groups(family.matroid)]
    else:
        groups = [(list(range(n)), family.target(n))]
    z = np.zeros(n)
    for members, need in groups:
        if need <= 0:
            continue
        order = sorted((i for i in members if cap[i] > 0), key=lambda i: (s.costs[i], i))
        left = float(need)
        for i in order:
            take = min(cap[i], left)
            z[i] = take
            left -= take
            if left <= 0:
                break
        if left > tol:
            return None
    return z


# ---------------------------------------------------------------------------
# roundings


@dataclass
class RoundStats:
    fallback: int = 0
    truncated: int = 0


def _make(s: Scenario, opened: list[int], selected, round_index: int, failed: bool = False) -> InspectionTranscript:
    return InspectionTranscript(tuple((b, float(s.costs[b])) for b in opened), frozenset(selected), round_index, failed)


def round_na_1(x: np.ndarray, z: np.ndarray, s: Scenario, rng: np.random.Generator, *, round_index: int = 0,
               stats: RoundStats | None = None) -> InspectionTranscript:
    """Draw boxes proportionally to x; stop at box i with probability z_i / x_i."""
    n = x.shape[0]
    X = float(x.sum())
    if X <= 0:
        return _make(s, [], [], round_index, failed=True)
    draws = rng.choice(n, size=50 * n, p=x / X)
    coins = rng.random(50 * n)
    opened, seen = [], set()
    for i, u in zip(draws, coins):
        i = int(i)
        if i not in seen:
            seen.add(i)
            opened.append(i)
        if math.isfinite(s.costs[i]) and u * x[i] < z[i]:
            return _make(s, opened, [i], round_index)
    if stats is not None:
        stats.truncated += 1
    return _make(s, opened, [], round_index, failed=True)


def _complete(s: Scenario, opened: list[int], seen: set, selected: list[int], ok) -> bool:
    """Add the cheapest finite boxes that ``ok`` accepts; True when anything was added."""
    added = False
    for i in sorted(np.flatnonzero(s.finite).tolist(), key=lambda i: (s.costs[i], i)):
        if i in selected or not ok(selected, i):
            continue
        if i not in seen:
            seen.add(i)
            opened.append(i)
        selected.append(i)
        added = True
    return added


def round_na_k(x: np.ndarray, z: np.ndarray, s: Scenario, k: int, rng: np.random.Generator, *,
               beta: float = DEFAULT_BETA, alpha: float = DEFAULT_ALPHA, round_index: int = 0,
               stats: RoundStats | None = None) -> InspectionTranscript:
    """Open heavy boxes, then sample light ones and keep the cheap ones until k are selected.

    Heavy boxes (``x_i >= 1/beta``) are all opened; those with
    ``z_i >= 1/beta`` are selected (cheapest k at most). Light boxes are
    drawn proportionally to x and selected when their cost is at most
    ``alpha * OPT'_c / k'``, the light part's value cost over its
    assignment mass. If the cheap light boxes run out, the selection is
    completed with the cheapest remaining finite boxes (counted in
    ``stats.fallback``).
    """
    n = x.shape[0]
    fin = s.finite
    hi = x >= 1.0 / beta - 1e-12
    opened = [int(i) for i in np.flatnonzero(hi)]
    seen = set(opened)
    heavy = [i for i in opened if fin[i] and z[i] >= 1.0 / beta - 1e-12]
    heavy.sort(key=lambda i: (s.costs[i], i))
    selected = heavy[:k]
    if len(selected) < k:
        low = np.flatnonzero(~hi)
        lowfin = low[fin[low]]
        kprime = float(z[lowfin].sum())
        optc = float(z[lowfin] @ s.costs[lowfin])
        thr = alpha * optc / kprime if kprime > 0 else -1.0
        cand = set(int(i) for i in lowfin if s.costs[i] <= thr + 1e-12)
        X = float(x[low].sum())
        if X > 0 and cand:
            draws = rng.choice(low, size=50 * n, p=x[low] / X)
            for i in draws:
                i = int(i)
                if i not in seen:
                    seen.add(i)
                    opened.append(i)
                if i in cand and i not in selected:
                    selected.append(i)
                    if len(selected) == k or cand <= set(selected):
                        break
        if len(selected) < k:
            if stats is not None:
                stats.fallback += 1
            _complete(s, opened, seen, selected, lambda sel, i: len(sel) < k)
    if len(selected) < k:
        return _make(s, opened, selected, round_index, failed=True)
    return _make(s, opened, selected, round_index)


def round_na_matroid(x: np.ndarray, z: np.ndarray, s: Scenario, m: mt.Matroid, rng: np.random.Generator, *,
                     beta: float = DEFAULT_BETA, alpha: float = DEFAULT_ALPHA, round_index: int = 0,
                     stats: RoundStats | None = None) -> InspectionTranscript:
    """Matroid variant: thresholds recomputed after every selection, selection kept independent."""
    n = x.shape[0]
    r_full = m.rank(range(n))
    fin = s.finite
    hi = x >= 1.0 / beta - 1e-12
    opened = [int(i) for i in np.flatnonzero(hi)]
    seen = set(opened)
    selected: list[int] = []

    def indep(sel, i):
        return len(sel) < r_full and mt.is_independent(m, sel + [i])

    heavy = sorted((i for i in opened if fin[i] and z[i] >= 1.0 / beta - 1e-12), key=lambda i: (s.costs[i], i))
    for i in heavy:
        if indep(selected, i):
            selected.append(i)
    if len(selected) < r_full:
        low = np.flatnonzero(~hi)
        X = float(x[low].sum())
        if X > 0:
            draws = rng.choice(low, size=50 * n, p=x[low] / X)
            for i in draws:
                i = int(i)
                if i not in seen:
                    seen.add(i)
                    opened.append(i)
                if not fin[i] or i in selected:
                    continue
                rest = [j for j in low if fin[j] and j not in selected]
                kj = r_full - len(selected)
                optc = float(sum(s.costs[j] * z[j] for j in rest))
                thr = alpha * optc / kj
                if s.costs[i] <= thr + 1e-12 and indep(selected, i):
                    selected.append(i)
                    if len(selected) == r_full:
                        break
        if len(selected) < r_full:
            if stats is not None:
                stats.fallback += 1
            _complete(s, opened, seen, selected, indep)
    if len(selected) < r_full:
        return _make(s, opened, selected, round_index, failed=True)
    return _make(s, opened, selected, round_index)


def round_na(x: np.ndarray, z: np.ndarray, s: Scenario, family: Family, rng: np.random.Generator, *,
             beta: float = DEFAULT_BETA, alpha: float = DEFAULT_ALPHA, round_index: int = 0,
             stats: RoundStats | None = None) -> InspectionTranscript:
    if isinstance(family, Select1):
        return round_na_1(x, z, s, rng, round_index=round_index, stats=stats)
    if isinstance(family, SelectK):
        return round_na_k(x, z, s, family.k, rng, beta=beta, alpha=alpha, round_index=round_index, stats=stats)
    if isinstance(family, MatroidBasis):
        return round_na_matroid(x, z, s, family.matroid, rng, beta=beta, alpha=alpha, round_index=round_index,
                                stats=stats)
    raise TypeError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# online loop


def run_na(seq: ScenarioSequence, family: Family, *, p: float | None = None, seed: int = 0,
           beta: float = DEFAULT_BETA, alpha: float = DEFAULT_ALPHA, settings: EllipsoidSettings | None = None,
           benchmark=None, stats: RoundStats | None = None, program: NaProgram | None = None) -> RegretLedger:
    """Explore with probability p (open everything, learn the scenario), otherwise round the current point.

    An exploit round whose point cannot cover the realized scenario is a
    mistake and pays the open-everything cost.
    """
    n, T = seq.n, seq.T
    p = 1.0 / math.sqrt(T) if p is None else float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError("exploration probability must lie in (0, 1]")
    program = program or NaProgram(n, family)
    sol = solve_doubling(program, settings)
    led = RegretLedger(meta={"algorithm": "na", "p": p, "seed": seed, "n": n, "T": T, "beta": beta,
                             "alpha": alpha, "family": family.to_json()})
    for t, s in enumerate(seq):
        rng = round_rng(seed, t)
        if rng.random() < p:
            tr = open_all_transcript(s, family, t)
            led.record(transcript_cost(tr, family), explore=True, opened=len(tr.opened))
            if program.add(s):
                sol = solve_doubling(program, settings)
            continue
        z = sol.z.get(s)
        if z is None:
            z = scenario_assignment(sol.x, s, family)
        if z is None:
            tr = open_all_transcript(s, family, t)
            led.record(transcript_cost(tr, family), mistake=True, opened=len(tr.opened))
            continue
        tr = round_na(sol.x, z, s, family, rng, beta=beta, alpha=alpha, round_index=t, stats=stats)
        cost = transcript_cost(tr, family)
        if math.isinf(cost):
            fb = open_all_transcript(s, family, t)
            led.record(transcript_cost(fb, family), failed=True, opened=len(fb.opened))
        else:
            led.record(cost, opened=len(tr.opened))
    if benchmark is not None:
        led.set_benchmark(benchmark)
    return led
