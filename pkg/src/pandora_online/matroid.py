"""Rank oracles and exact separation for uniform and partition matroids.

Graphic matroids support rank and independence (used by the roundings) but
not LP separation, which would need submodular minimization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class UnsupportedMatroidError(ValueError):
    pass


@dataclass(frozen=True)
class Uniform:
    n: int
    k: int

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError(f"uniform matroid needs 0 <= k <= n, got k={self.k}, n={self.n}")

    def rank(self, boxes: Iterable[int]) -> int:
        return min(len(set(boxes)), self.k)

    def to_json(self) -> dict:
        return {"variant": "uniform", "n": self.n, "k": self.k}


@dataclass(frozen=True)
class Partition:
    """Boxes split into disjoint parts; at most ``capacities[p]`` from part p."""

    parts: tuple[tuple[int, ...], ...]
    capacities: tuple[int, ...]
    _part_of: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        parts = tuple(tuple(sorted(p)) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        if len(parts) != len(self.capacities):
            raise ValueError("one capacity per part is required")
        flat = [b for p in parts for b in p]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("parts must be a disjoint cover of boxes 0..n-1")
        if any(c < 0 for c in self.capacities):
            raise ValueError("capacities must be nonnegative")
        object.__setattr__(self, "_part_of", {b: j for j, p in enumerate(parts) for b in p})

    @property
    def n(self) -> int:
        return sum(len(p) for p in self.parts)

    @property
    def k(self) -> int:
        return sum(min(len(p), c) for p, c in zip(self.parts, self.capacities))

    def part_of(self, box: int) -> int:
        return self._part_of[box]

    def rank(self, boxes: Iterable[int]) -> int:
        counts = [0] * len(self.parts)
        for b in set(boxes):
            counts[self._part_of[b]] += 1
        return sum(min(c, cap) for c, cap in zip(counts, self.capacities))

    def to_json(self) -> dict:
        return {
            "variant": "partition",
            "parts": [list(p) for p in self.parts],
            "capacities": list(self.capacities),
        }


@dataclass(frozen=True)
class Graphic:
    """Cycle matroid of a multigraph; box i is edge ``edges[i]``."""

    edges: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return len(self.edges)

    @property
    def k(self) -> int:
        return self.rank(range(self.n))

    def rank(self, boxes: Iterable[int]) -> int:
        parent: dict[int, int] = {}

        def find(u):
            root = u
            while parent.get(root, root) != root:
                root = parent[root]
            while parent.get(u, u) != root:
                parent[u], u = root, parent[u]
            return root

        r = 0
        for b in set(boxes):
            u, v = self.edges[b]
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                r += 1
        return r

    def to_json(self) -> dict:
        return {"variant": "graphic", "edges": [list(e) for e in self.edges]}


Matroid = Uniform | Partition | Graphic


def from_json(spec: dict) -> Matroid:
    variant = spec.get("variant")
    if variant == "uniform":
        return Uniform(int(spec["n"]), int(spec["k"]))
    if variant == "partition":
        return Partition(tuple(tuple(p) for p in spec["parts"]), tuple(spec["capacities"]))
    if variant == "graphic":
        return Graphic(tuple(tuple(e) for e in spec["edges"]))
    raise ValueError(f"unknown matroid variant {variant!r}")


def rank(m: Matroid, boxes: Iterable[int]) -> int:
    return m.rank(boxes)


def is_independent(m: Matroid, boxes: Sequence[int]) -> bool:
    return m.rank(boxes) == len(set(boxes))


def min_weight_basis(m: Matroid, weights: Sequence[float], allowed: Iterable[int]) -> list[int] | None:
    """Greedy minimum-weight basis of the full matroid using only ``allowed`` boxes.

    Returns None when ``allowed`` does not span (rank below r(all boxes)).
    """
    target = m.rank(range(m.n))
    chosen: list[int] = []
    for b in sorted(allowed, key=lambda i: (weights[i], i)):
        if len(chosen) == target:
            break
        if m.rank(chosen + [b]) == len(chosen) + 1:
            chosen.append(b)
    return chosen if len(chosen) == target else None


def _groups(m: Matroid) -> list[tuple[tuple[int, ...], int]]:
    if isinstance(m, Uniform):
        return [(tuple(range(m.n)), m.k)]
    if isinstance(m, Partition):
        return list(zip(m.parts, m.capacities))
    raise UnsupportedMatroidError("LP separation is only implemented for uniform and partition matroids")


def separate_rank_upper(m: Matroid, w: Sequence[float], tol: float = 1e-9):
    """Most violated cut ``w(A) <= r(A)``.

    Returns ``(A, violation)`` with A a sorted tuple, or None when no cut is
    violated by more than ``tol``. Both supported matroids decompose into
    groups with rank ``min(|A & g|, cap_g)``, so the best A takes a prefix of
    each group sorted by weight.
    """
    w = np.asarray(w, dtype=float)
    chosen: list[int] = []
    total = 0.0
    for members, cap in _groups(m):
        order = sorted(members, key=lambda i: (-w[i], i))
        best, best_len, acc = 0.0, 0, 0.0
        for j, b in enumerate(order, start=1):
            acc += w[b]
            gain = acc - min(j, cap)
            if gain > best + 1e-15:
                best, best_len = gain, j
        chosen.extend(order[:best_len])
        total += best
    if total <= tol:
        return None
    return tuple(sorted(chosen)), float(total)


def separate_coverage(m: Matroid, prefix: Sequence[float], y: float, tol: float = 1e-9):
    """Most violated cut ``sum_{i not in A} prefix_i >= (r(all) - r(A)) * y``.

    Minimizes ``prefix(B \\ A) + y * r(A)`` group by group: inside a group it
    either keeps a top-j prefix (j <= cap) or absorbs the whole group at rank
    cost ``cap``. Returns ``(A, violation)`` or None.
    """
    prefix = np.asarray(prefix, dtype=float)
    if y <= tol:
        return None
    chosen: list[int] = []
    value = 0.0
    for members, cap in _groups(m):
        order = sorted(members, key=lambda i: (-prefix[i], i))
        group_total = float(sum(prefix[i] for i in members))
        eff_cap = min(cap, len(members))
        best, best_take = group_total, 0
        acc = 0.0
        for j, b in enumerate(order[:eff_cap], start=1):
            acc += prefix[b]
            cand = group_total - acc + y * j
            if cand < best - 1e-15:
                best, best_take = cand, j
        absorb = y * eff_cap
        if absorb < best - 1e-15:
            best, best_take = absorb, len(members)
        chosen.extend(order[:best_take])
        value += best
    r_full = m.rank(range(m.n))
    violation = r_full * y - value
    if violation <= tol:
        return None
    return tuple(sorted(chosen)), float(violation)


def exhaustive_rank_upper(m: Matroid, w: Sequence[float]):
    """Brute-force max of ``w(A) - r(A)`` over all subsets (n <= 12)."""
    if m.n > 12:
        raise ValueError("exhaustive separation limited to n <= 12")
    best, best_a = 0.0, ()
    for size in range(1, m.n + 1):
        for a in itertools.combinations(range(m.n), size):
            v = float(sum(w[i] for i in a)) - m.rank(a)
            if v > best + 1e-12:
                best, best_a = v, a
    return best_a, best


def exhaustive_coverage(m: Matroid, prefix: Sequence[float], y: float):
    """Brute-force max over A of ``(r(all) - r(A)) y - prefix(B \\ A)`` (n <= 12)."""
    if m.n > 12:
        raise ValueError("exhaustive separation limited to n <= 12")
    r_full = m.rank(range(m.n))
    total = float(sum(prefix))
    best, best_a = -np.inf, ()
    for size in range(0, m.n + 1):
        for a in itertools.combinations(range(m.n), size):
            v = (r_full - m.rank(a)) * y - (total - float(sum(prefix[i] for i in a)))
            if v > best + 1e-12:
                best, best_a = v, a
    return best_a, best
