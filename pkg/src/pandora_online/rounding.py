"""Randomized rounding of fractional schedules into opening orders and stopping rules.

An opening order is sampled without looking at the scenario. The stopping
rule then walks the order; scenario-aware rules use the scenario's
fractional assignment, the ski-rental rules use only the costs revealed so
far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matroid as mt
from . import relaxation as rx
from .core import INF, Family, InspectionTranscript, MatroidBasis, Scenario, Select1, SelectK

ALPHA_SELECT1 = 3.0 + 2.0 * math.sqrt(2.0)
ALPHA_SELECTK = 8.0
ALPHA_MATROID = 64.0
EXTRA_PHASES = 60  # phases/slots allowed past saturation before giving up


@dataclass
class Draw:
    box: int
    stage: int  # slot (select-1, matroid) or phase (select-k), 1-indexed
    q: float  # probability the box was drawn with at this stage
    new: bool  # first time the box is drawn


@dataclass
class OpeningOrder:
    """Draw trace of a scenario-independent sampling pass.

    ``sequence`` lists boxes in the order they are first opened. ``draws``
    also records repeat draws, which the phase-based stopping rules treat as
    fresh selection chances for already opened boxes.
    """

    n: int
    draws: list[Draw] = field(default_factory=list)
    appended: list[int] = field(default_factory=list)  # never triggered, put at the tail

    @property
    def sequence(self) -> list[int]:
        return [d.box for d in self.draws if d.new] + self.appended


def _prefix(x: np.ndarray) -> np.ndarray:
    """``P[i, t] = sum_{t' <= t} x[i, t']`` (0-indexed t)."""
    return np.cumsum(x, axis=1)


def _draw_stage(order: OpeningOrder, opened: np.ndarray, q: np.ndarray, stage: int, rng,
                redraw: bool) -> None:
    hit = rng.random(order.n) < q
    if not redraw:
        hit &= ~opened
    boxes = np.flatnonzero(hit)
    for b in rng.permutation(boxes):
        b = int(b)
        order.draws.append(Draw(b, stage, float(q[b]), not opened[b]))
        opened[b] = True


# ---------------------------------------------------------------------------
# select one box


def sample_order_1(x: np.ndarray, rng: np.random.Generator, alpha: float = ALPHA_SELECT1) -> OpeningOrder:
    """Two trials per slot t; an unopened box opens with prob ``min(1, a * P_it / t)``.

    ``a = alpha / (alpha - 1)`` amplifies the prefix mass. Boxes never
    triggered go to the tail in decreasing total mass.
    """
    n = x.shape[0]
    amp = alpha / (alpha - 1.0)
    P = _prefix(x)
    order = OpeningOrder(n)
    opened = np.zeros(n, dtype=bool)
    for t in range(1, n + 1):
        q = np.minimum(1.0, amp * P[:, t - 1] / t)
        for _ in range(2):
            _draw_stage(order, opened, q, t, rng, redraw=False)
    rest = [int(i) for i in np.flatnonzero(~opened)]
    rest.sort(key=lambda i: (-x[i].sum(), i))
    order.appended = rest
    return order


def _transcript(s: Scenario, opened: list[int], selected, round_index: int, failed: bool = False):
    return InspectionTranscript(tuple((b, float(s.costs[b])) for b in opened), frozenset(selected),
                                round_index, failed)


def stop_select1_scenario_aware(order: OpeningOrder, s: Scenario, x: np.ndarray | None = None, *,
                                value_cost: float | None = None, alpha: float = ALPHA_SELECT1,
                                round_index: int = 0) -> InspectionTranscript:
    """Select the first opened box with cost at most ``alpha * f_c``.

    ``f_c`` is the value part of the scenario's relaxation optimum; pass it
    as ``value_cost`` or give ``x`` to compute it.
    """
    if value_cost is None:
        value_cost = rx.eval_spa(x, s).value_cost
    thr = alpha * value_cost
    opened = []
    for b in order.sequence:
        opened.append(b)
        if s.costs[b] <= thr + 1e-12:
            return _transcript(s, opened, [b], round_index)
    return _transcript(s, opened, [], round_index, failed=True)


def ski_rental_threshold(rng: np.random.Generator) -> float:
    """Draw u on [0, 1] with density ``e^u / (e - 1)``."""
    return math.log1p(rng.random() * (math.e - 1.0))


def ski_rental_stop(order: OpeningOrder | list[int], s: Scenario, variant: str = "randomized",
                    rng: np.random.Generator | None = None, *, u: float | None = None,
                    round_index: int = 0) -> InspectionTranscript:
    """Online stopping for select-1 that sees only the costs opened so far.

    deterministic: stop once the best value seen is at most the number of
    boxes paid for. randomized: stop once ``u * best <= paid`` with u drawn
    from ``e^u / (e - 1)`` on [0, 1]. Either way the best opened box is
    selected and opening everything is the fallback.
    """
    seq = order.sequence if isinstance(order, OpeningOrder) else list(order)
    if variant == "deterministic":
        scale = 1.0
    elif variant == "randomized":
        if u is None:
            if rng is None:
                raise ValueError("randomized ski-rental needs an rng or u")
            u = ski_rental_threshold(rng)
        scale = u
    else:
        raise ValueError(f"unknown ski-rental variant {variant!r}")
    opened: list[int] = []
    best, best_box = INF, None
    for b in seq:
        opened.append(b)
        c = float(s.costs[b])
        if c < best:
            best, best_box = c, b
        if best_box is not None and scale * best <= len(opened):
            break
    if best_box is None:
        return _transcript(s, opened, [], round_index, failed=True)
    return _transcript(s, opened, [best_box], round_index)


def optimal_stop_on_order(order: OpeningOrder | list[int], s: Scenario) -> float:
    """Cost of the best scenario-aware stopping point on a fixed order."""
    seq = order.sequence if isinstance(order, OpeningOrder) else list(order)
    best, out = INF, INF
    for j, b in enumerate(seq, start=1):
        best = min(best, float(s.costs[b]))
        out = min(out, j + best)
    return out


# ---------------------------------------------------------------------------
# select k boxes


def _t_star(y: np.ndarray) -> int:
    """Largest 1-indexed slot with ``y_t <= 1/2``; 0 if none."""
    idx = np.flatnonzero(np.asarray(y) <= 0.5 + 1e-12)
    return int(idx[-1]) + 1 if idx.size else 0


def sample_order_k(x: np.ndarray, rng: np.random.Generator, alpha: float = ALPHA_SELECTK,
                   extra_phases: int = EXTRA_PHASES) -> OpeningOrder:
    """Phase l draws every box with prob ``min(alpha * P_i(2^l), 1)``.

    Drawn boxes that are already open are recorded again (they get another
    selection chance but cost nothing). Sampling runs ``extra_phases``
    phases past the first phase in which every box has been opened.
    """
    n = x.shape[0]
    P = _prefix(x)
    order = OpeningOrder(n)
    opened = np.zeros(n, dtype=bool)
    ell, done_at = 1, None
    while True:
        upto = min(2 ** ell, n)
        q = np.minimum(alpha * P[:, upto - 1], 1.0)
        _draw_stage(order, opened, q, ell, rng, redraw=True)
        if done_at is None and opened.all():
            done_at = ell
        if done_at is not None and ell >= done_at + extra_phases:
            break
        if ell > 64 + extra_phases:
            break
        ell += 1
    return order


def _select_pass(order: OpeningOrder, s: Scenario, active, prob, feasible_add, target: int,
                 rng: np.random.Generator, round_index: int) -> InspectionTranscript:
    opened: list[int] = []
    is_open: set[int] = set()
    selected: list[int] = []
    for d in order.draws:
        if d.box not in is_open:
            is_open.add(d.box)
            opened.append(d.box)
        if not active(d.stage) or d.box in selected:
            continue
        if not math.isfinite(s.costs[d.box]):
            continue
        p = prob(d)
        if p > 0 and rng.random() < p and feasible_add(selected, d.box):
            selected.append(d.box)
            if len(selected) == target:
                return _transcript(s, opened, selected, round_index)
    return _transcript(s, opened, selected, round_index, failed=True)


def stop_select_k(order: OpeningOrder, s: Scenario, x: np.ndarray, k: int, rng: np.random.Generator, *,
                  relax: rx.RelaxResult | None = None, alpha: float = ALPHA_SELECTK,
                  round_index: int = 0) -> InspectionTranscript:
    """Phase-wise selection once ``2^l >= t*``; stop at k selected boxes."""
    relax = relax or rx.eval_spa_k(x, s, k)
    n = x.shape[0]
    if math.isinf(relax.value):
        return _transcript(s, [], [], round_index, failed=True)
    tstar = _t_star(relax.y)
    Z = _prefix(relax.z)

    def active(ell):
        return 2 ** ell >= tstar

    def prob(d: Draw):
        if d.q <= 0:
            return 0.0
        return min(1.0, alpha * Z[d.box, min(2 ** d.stage, n) - 1] / d.q)

    return _select_pass(order, s, active, prob, lambda sel, b: len(sel) < k, k, rng, round_index)


# ---------------------------------------------------------------------------
# matroid basis


def _log_factor(k: int) -> float:
    return max(math.log(k), 1.0) if k > 0 else 1.0


def sample_order_matroid(x: np.ndarray, rng: np.random.Generator, k: int, alpha: float = ALPHA_MATROID,
                         extra_slots: int | None = None) -> OpeningOrder:
    """Slot t draws every box with prob ``min(alpha * L * P_it / t, 1)``, ``L = max(ln k, 1)``.

    Past slot n the prefix mass stays at 1 and sampling continues for
    ``extra_slots`` more slots (default 20 n).
    """
    n = x.shape[0]
    P = _prefix(x)
    lf = _log_factor(k)
    extra = 20 * n if extra_slots is None else extra_slots
    order = OpeningOrder(n)
    opened = np.zeros(n, dtype=bool)
    for t in range(1, n + extra + 1):
        q = np.minimum(alpha * lf * P[:, min(t, n) - 1] / t, 1.0)
        _draw_stage(order, opened, q, t, rng, redraw=True)
    return order


def stop_matroid(order: OpeningOrder, s: Scenario, x: np.ndarray, m: mt.Matroid, rng: np.random.Generator, *,
                 relax: rx.RelaxResult | None = None, alpha: float = ALPHA_MATROID,
                 round_index: int = 0) -> InspectionTranscript:
    """Select drawn boxes after slot ``t*`` while independent; stop at a basis."""
    n = x.shape[0]
    k = m.rank(range(n))
    if k == 0:
        return _transcript(s, [], [], round_index)
    relax = relax or rx.eval_spa_matroid(x, s, m)
    if math.isinf(relax.value):
        return _transcript(s, [], [], round_index, failed=True)
    tstar = _t_star(relax.y)
    Z = _prefix(relax.z)
    lf = _log_factor(k)

    def prob(d: Draw):
        if d.q <= 0:
            return 0.0
        t = d.stage
        return min(1.0, alpha * lf * Z[d.box, min(t, n) - 1] / (t * d.q))

    def can_add(sel, b):
        return mt.is_independent(m, sel + [b])

    return _select_pass(order, s, lambda t: t > tstar, prob, can_add, k, rng, round_index)


# ---------------------------------------------------------------------------
# one round end to end


def play_round(x: np.ndarray, s: Scenario, family: Family, rng: np.random.Generator, *,
               stopping: str = "ski-randomized", round_index: int = 0,
               relax: rx.RelaxResult | None = None) -> InspectionTranscript:
    """Round ``x`` and play scenario ``s``.

    Select-1 supports ``stopping`` in {"ski-randomized", "ski-deterministic",
    "scenario-aware"}; select-k and matroid bases always stop scenario-aware.
    """
    if isinstance(family, Select1):
        order = sample_order_1(x, rng)
        if stopping == "scenario-aware":
            relax = relax or rx.eval_spa(x, s)
            return stop_select1_scenario_aware(order, s, value_cost=relax.value_cost, round_index=round_index)
        variant = {"ski-randomized": "randomized", "ski-deterministic": "deterministic"}.get(stopping)
        if variant is None:
            raise ValueError(f"unknown stopping rule {stopping!r}")
        return ski_rental_stop(order, s, variant, rng, round_index=round_index)
    if isinstance(family, SelectK):
        order = sample_order_k(x, rng)
        return stop_select_k(order, s, x, family.k, rng, relax=relax, round_index=round_index)
    if isinstance(family, MatroidBasis):
        m = family.matroid
        order = sample_order_matroid(x, rng, m.rank(range(m.n)))
        return stop_matroid(order, s, x, m, rng, relax=relax, round_index=round_index)
    raise TypeError(f"unknown family {family!r}")


def rounding_hook(stopping: str = "ski-randomized"):
    """Adapter for ``ftrl.run_full_information``."""

    def hook(x, s, family, rng):
        return play_round(x, s, family, rng, stopping=stopping)

    return hook
