"""Online play when only the opened boxes are observed.

The horizon is cut into intervals. One uniformly placed round per interval
opens every box, which reveals the whole scenario; FTRL learns from those
rounds alone. All other rounds play the current iterate.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import relaxation as rx
from .core import Family, ScenarioSequence, open_all_transcript, round_rng, transcript_cost
from .ftrl import InnerSettings, RoundingHook, default_eta, ftrl_minimize
from .ledger import RegretLedger

SCHEDULE_STREAM = 1


def tune_interval_length(n: int, T: int, L: float | None = None, formula: str = "proof") -> int:
    """Interval length balancing exploration cost against learning from fewer rounds.

    ``formula="proof"``: ``(n / (2 L ln n + n))^(2/3) T^(1/3)``.
    ``formula="statement"``: ``(n / (2 L + sqrt(ln n)))^(2/3) T^(1/3)``.
    L defaults to n. The result is rounded and clipped to [1, T].
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if T < 1:
        raise ValueError("T must be positive")
    L = float(n) if L is None else float(L)
    if L <= 0:
        raise ValueError("L must be positive")
    if formula == "proof":
        base = n / (2.0 * L * math.log(n) + n)
    elif formula == "statement":
        base = n / (2.0 * L + math.sqrt(math.log(n)))
    else:
        raise ValueError(f"unknown formula {formula!r}")
    return int(min(T, max(1, round(base ** (2.0 / 3.0) * T ** (1.0 / 3.0)))))


@dataclass
class BanditSchedule:
    T: int
    interval_length: int
    explore_rounds: np.ndarray  # one round index per interval
    L: float

    def __post_init__(self):
        if not 1 <= self.interval_length <= self.T:
            raise ValueError("interval length must lie in [1, T]")

    @property
    def intervals(self) -> int:
        return -(-self.T // self.interval_length)

    def is_explore(self) -> np.ndarray:
        mask = np.zeros(self.T, dtype=bool)
        mask[self.explore_rounds] = True
        return mask


def make_schedule(T: int, interval_length: int, seed: int = 0, L: float = 0.0) -> BanditSchedule:
    """Pick one explore round uniformly inside each interval (the last one may be short)."""
    k = int(interval_length)
    if not 1 <= k <= T:
        raise ValueError("interval length must lie in [1, T]")
    starts = np.arange(0, T, k)
    lengths = np.minimum(k, T - starts)
    rng = round_rng(seed, 0, SCHEDULE_STREAM)
    offsets = np.floor(rng.random(starts.size) * lengths).astype(np.int64)
    return BanditSchedule(T, k, starts + offsets, L)


def _history_key(history: Counter) -> tuple:
    return tuple(sorted((s.key(), c) for s, c in history.items()))


def run_bandit(seq: ScenarioSequence, family: Family, *, eta: float | None = None,
               interval_length: int | None = None, L: float | None = None, formula: str = "proof",
               seed: int = 0, rounding: RoundingHook | None = None, settings: InnerSettings | None = None,
               benchmark=None, memo: dict | None = None, on_iterate=None) -> RegretLedger:
    """Play with partial feedback; only the explore rounds' scenarios reach the learner.

    Explore rounds pay ``n`` plus the best selection among all boxes. Other
    rounds play the current iterate: with a ``rounding`` hook the rounded
    transcript's cost, otherwise the fractional loss. eta defaults to the
    full-information rate for the number of explore rounds. ``memo`` may be
    shared across replicas; an iterate is keyed by the explored history and
    the previous iterate, so reuse never changes results.
    """
    n, T = seq.n, seq.T
    L = float(n) if L is None else float(L)
    k = interval_length or tune_interval_length(n, T, L, formula)
    sched = make_schedule(T, k, seed, L)
    explore = sched.is_explore()
    eta = default_eta(n, sched.intervals) if eta is None else float(eta)
    settings = settings or InnerSettings()
    memo = {} if memo is None else memo
    history: Counter = Counter()
    x = rx.uniform_schedule(n)
    losses: dict = {}  # fractional loss per scenario at the current iterate
    led = RegretLedger(meta={"algorithm": "bandit", "eta": eta, "seed": seed, "n": n, "T": T,
                             "interval_length": k, "L": L, "formula": formula, "family": family.to_json()})
    for t, s in enumerate(seq):
        if on_iterate is not None:
            on_iterate(t, x)
        if explore[t]:
            tr = open_all_transcript(s, family, t)
            led.record(transcript_cost(tr, family), explore=True, opened=len(tr.opened))
            history[s] += 1
            key = (repr(family.to_json()), eta, _history_key(history), x.tobytes())
            if key not in memo:
                memo[key] = ftrl_minimize(history, family, eta, n, settings, x0=x)
            x = memo[key]
            losses = {}
            continue
        if s not in losses:
            losses[s] = rx.evaluate(x, s, family, check=False).value
        frac = losses[s]
        if rounding is not None:
            tr = rounding(x, s, family, round_rng(seed, t))
            cost = transcript_cost(tr, family)
            led.record(cost, frac_loss=frac, failed=math.isinf(cost), opened=len(tr.opened))
        else:
            led.record(frac, frac_loss=frac)
    if benchmark is not None:
        led.set_benchmark(benchmark)
    return led
