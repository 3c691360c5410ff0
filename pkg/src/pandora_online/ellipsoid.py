"""Central-cut ellipsoid method driven by a separation oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class EllipsoidBreakdown(RuntimeError):
    """The shape matrix lost positive definiteness."""


@dataclass
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iterations: int = 0
    log_volume: float = 0.0  # log of sqrt(det shape)
    budget: float = 0.0


@dataclass
class EllipsoidResult:
    feasible: bool
    point: np.ndarray | None
    state: EllipsoidState


Separator = Callable[[np.ndarray], "tuple[np.ndarray, float] | None"]


def ellipsoid(separate: Separator, center: np.ndarray, radius: float, *, min_radius: float,
              max_iter: int) -> EllipsoidResult:
    """Find a point accepted by ``separate`` inside the ball ``B(center, radius)``.

    ``separate(v)`` returns None when v is acceptable, else ``(a, b)`` with
    ``a @ v > b`` and the target set inside ``{u : a @ u <= b}``. The search
    reports infeasible once the ellipsoid volume drops below that of a ball
    of radius ``min_radius`` (a nonempty target is assumed to contain one),
    once its width along a cut normal is below ``2 * min_radius`` (no such
    ball fits), or after ``max_iter`` iterations.
    """
    center = np.array(center, dtype=float)
    d = center.size
    P = np.eye(d) * radius**2
    state = EllipsoidState(center, P, 0, d * math.log(radius))
    floor = d * math.log(min_radius)
    if d == 1:
        step_log = math.log(0.5)
    else:
        step_log = 0.5 * (d * math.log(d * d / (d * d - 1.0)) + math.log((d - 1.0) / (d + 1.0)))
    while state.iterations < max_iter:
        cut = separate(state.center)
        if cut is None:
            return EllipsoidResult(True, state.center.copy(), state)
        if state.log_volume < floor:
            break
        a, _ = cut
        a = np.asarray(a, dtype=float)
        Pa = state.shape @ a
        q = float(a @ Pa)
        norm = float(np.linalg.norm(a))
        if math.isfinite(q) and norm > 0 and math.sqrt(max(q, 0.0)) < min_radius * norm:
            break
        if not q > 0.0 or not math.isfinite(q):
            raise EllipsoidBreakdown(f"a^T P a = {q!r} after {state.iterations} iterations")
        g = Pa / math.sqrt(q)
        if d == 1:
            state.center = state.center - g / 2.0
            state.shape = state.shape / 4.0
        else:
            state.center = state.center - g / (d + 1.0)
            P = (d * d / (d * d - 1.0)) * (state.shape - (2.0 / (d + 1.0)) * np.outer(g, g))
            state.shape = 0.5 * (P + P.T)
        state.log_volume += step_log
        state.iterations += 1
    return EllipsoidResult(False, None, state)
