"""Domain types for boxes, scenarios, constraint families and cost accounting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import matroid as mt

# Unselectable box cost. MSSC "not covering" boxes and normalized-away boxes
# carry it; every consumer branches on it explicitly.
INF = math.inf


class InvalidInstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scenario:
    """One round's cost vector. Finite entries lie in [0, n]."""

    costs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.costs, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "costs", arr)

    @property
    def n(self) -> int:
        return self.costs.shape[0]

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.costs)

    def key(self) -> bytes:
        return self.costs.tobytes()

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Scenario({_fmt_costs(self.costs)})"

    def to_json(self) -> list:
        return [_cost_to_json(c) for c in self.costs]


def _cost_to_json(c: float):
    return "inf" if math.isinf(c) else float(c)


def _cost_from_json(c) -> float:
    if isinstance(c, str):
        if c.strip().lower() in ("inf", "infinity"):
            return INF
        raise InvalidInstanceError(f"bad cost literal {c!r}")
    return float(c)


def _fmt_costs(costs) -> str:
    return "[" + ", ".join("inf" if math.isinf(c) else f"{c:g}" for c in costs) + "]"


def normalize_costs(raw: Sequence[float], n: int) -> Scenario:
    """Validate a raw cost vector and mark costs above ``n`` as unselectable.

    Opening every box costs at most ``n`` plus the cheapest value, so a box
    whose cost exceeds ``n`` never improves on that fallback.
    """
    arr = np.array([_cost_from_json(c) if isinstance(c, str) else float(c) for c in raw], dtype=float)
    if arr.shape != (n,):
        raise InvalidInstanceError(f"expected {n} costs, got {arr.shape[0]}")
    if np.isnan(arr).any():
        raise InvalidInstanceError("NaN cost")
    if (arr < 0).any():
        raise InvalidInstanceError(f"negative cost in {list(arr)}")
    arr = np.where(arr > n, INF, arr)
    return Scenario(arr)


# ---------------------------------------------------------------------------
# constraint families


@dataclass(frozen=True)
class Select1:
    def target(self, n: int) -> int:
        return 1

    def to_json(self) -> dict:
        return {"kind": "select1"}


@dataclass(frozen=True)
class SelectK:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("SelectK needs k >= 1")

    def target(self, n: int) -> int:
        if self.k > n:
            raise ValueError(f"k={self.k} exceeds n={n}")
        return self.k

    def to_json(self) -> dict:
        return {"kind": "selectk", "k": self.k}


@dataclass(frozen=True)
class MatroidBasis:
    matroid: mt.Matroid

    def target(self, n: int) -> int:
        if self.matroid.n != n:
            raise ValueError(f"matroid ground set has {self.matroid.n} boxes, instance has {n}")
        return self.matroid.rank(range(n))

    def to_json(self) -> dict:
        return {"kind": "matroid", "matroid": self.matroid.to_json()}


Family = Select1 | SelectK | MatroidBasis


def family_from_json(spec: dict) -> Family:
    kind = spec.get("kind")
    if kind == "select1":
        return Select1()
    if kind == "selectk":
        return SelectK(int(spec["k"]))
    if kind == "matroid":
        return MatroidBasis(mt.from_json(spec["matroid"]))
    raise ValueError(f"unknown family kind {kind!r}")


def is_feasible_selection(selected: Iterable[int], family: Family) -> bool:
    """Whether ``selected`` is a complete feasible selection (not just a partial one)."""
    sel = set(selected)
    if isinstance(family, MatroidBasis):
        m = family.matroid
        return mt.is_independent(m, sorted(sel)) and len(sel) == m.rank(range(m.n))
    return len(sel) == (family.k if isinstance(family, SelectK) else 1)


def can_extend(selected: Sequence[int], box: int, family: Family, n: int) -> bool:
    """Whether ``box`` may join a partial selection without breaking feasibility."""
    if box in selected:
        return False
    if isinstance(family, MatroidBasis):
        return mt.is_independent(family.matroid, list(selected) + [box])
    return len(selected) < family.target(n)


def best_selection(costs: np.ndarray, boxes: Iterable[int], family: Family) -> tuple[float, tuple[int, ...]]:
    """Cheapest feasible selection using only ``boxes``; ``(INF, ())`` if none."""
    n = len(costs)
    avail = [i for i in boxes if math.isfinite(costs[i])]
    if isinstance(family, MatroidBasis):
        basis = mt.min_weight_basis(family.matroid, costs, avail)
        if basis is None:
            return INF, ()
        return float(sum(costs[i] for i in basis)), tuple(sorted(basis))
    k = family.target(n)
    if len(avail) < k:
        return INF, ()
    avail.sort(key=lambda i: (costs[i], i))
    chosen = avail[:k]
    return float(sum(costs[i] for i in chosen)), tuple(sorted(chosen))


# ---------------------------------------------------------------------------
# transcripts


@dataclass(frozen=True)
class InspectionTranscript:
    opened: tuple[tuple[int, float], ...]
    selected: frozenset[int]
    round_index: int = 0
    failed: bool = False

    def __post_init__(self):
        ids = [b for b, _ in self.opened]
        if len(ids) != len(set(ids)):
            raise ValueError("a box appears twice in opened")
        if not set(self.selected) <= set(ids):
            raise ValueError("selected boxes must have been opened")

    @property
    def opened_boxes(self) -> list[int]:
        return [b for b, _ in self.opened]


def transcript_cost(t: InspectionTranscript, family: Family) -> float:
    """Opening count plus the selected values; INF when the selection is infeasible."""
    if t.failed:
        return INF
    seen = dict(t.opened)
    if not is_feasible_selection(t.selected, family):
        return INF
    value = sum(seen[b] for b in t.selected)
    if math.isinf(value):
        return INF
    return len(t.opened) + float(value)


def open_all_transcript(s: Scenario, family: Family, round_index: int = 0) -> InspectionTranscript:
    """Open every box in index order and select the best feasible set."""
    _, sel = best_selection(s.costs, range(s.n), family)
    opened = tuple((i, float(s.costs[i])) for i in range(s.n))
    return InspectionTranscript(opened, frozenset(sel), round_index, failed=not sel and family.target(s.n) > 0)


# ---------------------------------------------------------------------------
# scenario sequences


@dataclass(frozen=True)
class ScenarioSequence:
    scenarios: tuple[Scenario, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if not self.scenarios:
            raise InvalidInstanceError("a sequence needs at least one scenario")
        n = self.scenarios[0].n
        if any(s.n != n for s in self.scenarios):
            raise InvalidInstanceError("all scenarios must share the same n")

    @property
    def n(self) -> int:
        return self.scenarios[0].n

    @property
    def T(self) -> int:
        return len(self.scenarios)

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, i):
        return self.scenarios[i]

    def matrix(self) -> np.ndarray:
        return np.stack([s.costs for s in self.scenarios])

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "T": self.T,
            "scenarios": [s.to_json() for s in self.scenarios],
            "metadata": self.metadata,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioSequence":
        n = int(doc["n"])
        scen = [normalize_costs([_cost_from_json(c) for c in row], n) for row in doc["scenarios"]]
        if "T" in doc and int(doc["T"]) != len(scen):
            raise InvalidInstanceError(f"T={doc['T']} but {len(scen)} scenarios given")
        return cls(tuple(scen), dict(doc.get("metadata", {})))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSequence":
        return cls.from_json(json.loads(Path(path).read_text()))


GENERATORS = ("mssc", "uniform-costs", "clustered", "adversarial-alternating", "constant")


def generate_instance(kind: str, n: int, T: int, params: dict | None = None, seed: int = 0) -> ScenarioSequence:
    """Deterministic scenario stream for experiments.

    kinds:
      mssc                     entries in {0, INF}; each box is 0 w.p. ``density``.
                               A scenario without a zero is redrawn, or raises
                               when ``regenerate`` is false.
      uniform-costs            i.i.d. uniform costs on [0, n].
      clustered                scenarios drawn from ``clusters`` prototypes with
                               multiplicative jitter ``noise``.
      adversarial-alternating  round t has its single zero at box t mod n.
      constant                 one scenario (``costs`` or a uniform draw) repeated.
    """
    params = dict(params or {})
    if n < 1 or T < 1:
        raise InvalidInstanceError("n and T must be positive")
    rng = np.random.default_rng(seed)
    rows: list[np.ndarray] = []
    if kind == "mssc":
        density = float(params.get("density", 0.3))
        regenerate = bool(params.get("regenerate", True))
        pool = int(params.get("pool", 0))
        if not 0.0 < density <= 1.0 and regenerate:
            raise InvalidInstanceError("mssc density must lie in (0, 1]")

        def draw():
            for _ in range(10_000):
                zeros = rng.random(n) < density
                if zeros.any():
                    return np.where(zeros, 0.0, INF)
                if not regenerate:
                    raise InvalidInstanceError("generated an uncoverable mssc scenario")
            raise InvalidInstanceError("mssc density too low to produce a covered scenario")

        if pool > 0:
            protos = [draw() for _ in range(pool)]
            idx = rng.integers(0, pool, size=T)
            rows = [protos[j] for j in idx]
        else:
            rows = [draw() for _ in range(T)]
    elif kind == "uniform-costs":
        high = float(params.get("high", n))
        rows = list(rng.uniform(0.0, high, size=(T, n)))
    elif kind == "clustered":
        clusters = int(params.get("clusters", 3))
        noise = float(params.get("noise", 0.1))
        protos = rng.uniform(0.0, n, size=(clusters, n))
        idx = rng.integers(0, clusters, size=T)
        jitter = rng.uniform(1.0 - noise, 1.0 + noise, size=(T, n))
        rows = list(protos[idx] * jitter)
    elif kind == "adversarial-alternating":
        for t in range(T):
            row = np.full(n, INF)
            row[t % n] = 0.0
            rows.append(row)
    elif kind == "constant":
        if "costs" in params:
            base = np.array([_cost_from_json(c) if isinstance(c, str) else float(c) for c in params["costs"]])
        else:
            base = rng.uniform(0.0, n, size=n)
        rows = [base] * T
    else:
        raise InvalidInstanceError(f"unknown generator {kind!r}")
    scenarios = tuple(normalize_costs(r, n) for r in rows)
    meta = {"generator": kind, "n": n, "T": T, "seed": seed, "params": params}
    return ScenarioSequence(scenarios, meta)


# ---------------------------------------------------------------------------
# randomness


def round_rng(seed: int, round_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, round, stream) triple.

    Draws for round t do not depend on how many draws earlier rounds made,
    so replays and partial reruns reproduce every round exactly.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(round_index) & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(stream)]))
