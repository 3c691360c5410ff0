"""Follow-the-regularized-leader over doubly stochastic schedules.

The regularizer is negative entropy scaled by ``1/eta``. Each round's
iterate minimizes the cumulative relaxation loss of the observed scenarios
plus the regularizer, found by damped entropic mirror steps followed by a
Sinkhorn projection back onto the doubly stochastic matrices.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from . import relaxation as rx
from .core import INF, Family, Scenario, ScenarioSequence, round_rng
from .ledger import RegretLedger

FLOOR = 1e-12


class SinkhornError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


class InnerSolverError(RuntimeError):
    pass


def default_eta(n: int, T: int) -> float:
    """``sqrt(ln n / T)``."""
    if n < 2:
        raise ValueError("the learning rate needs n >= 2 (ln 1 = 0)")
    if T < 1:
        raise ValueError("T must be positive")
    return math.sqrt(math.log(n) / T)


def entropy_regularizer(x: np.ndarray, eta: float) -> float:
    """``sum x log x / eta`` with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    return float(np.sum(x[pos] * np.log(x[pos])) / eta)


def sinkhorn_project(M: np.ndarray, tol: float = 1e-11, max_iter: int = 20_000,
                     sweeps_before_newton: int = 30) -> np.ndarray:
    """Alternate row and column normalization until all sums are within ``tol`` of 1.

    This is the relative-entropy projection of a positive matrix onto the
    doubly stochastic matrices. Entries are floored at 1e-12 first. Plain
    sweeps converge slowly on nearly permutation-shaped matrices, so after
    ``sweeps_before_newton`` sweeps the same scaling problem is finished with
    Newton steps on the log scalings.
    """
    x = np.maximum(np.asarray(M, dtype=float), FLOOR)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("sinkhorn_project needs a square matrix")
    resid = INF
    for it in range(max_iter):
        x /= x.sum(axis=1, keepdims=True)
        x /= x.sum(axis=0, keepdims=True)
        resid = float(np.abs(x.sum(axis=1) - 1.0).max())
        if resid <= tol:
            return x
        if it + 1 == sweeps_before_newton:
            y = _newton_balance(x, tol)
            if y is not None:
                return y
    raise SinkhornError("Sinkhorn projection did not converge", resid)


def _newton_balance(K: np.ndarray, tol: float, max_steps: int = 100) -> np.ndarray | None:
    """Newton's method for ``diag(e^a) K diag(e^b)`` doubly stochastic; None if it stalls.

    Minimizes the convex potential ``sum K e^(a_i + b_j) - sum a - sum b``
    with ``b`` pinned at its last coordinate to remove the shift symmetry.
    """
    n = K.shape[0]
    logK = np.log(K)
    a, b = np.zeros(n), np.zeros(n)

    def scaled(a, b):
        return np.exp(logK + a[:, None] + b[None, :])

    def potential(X, a, b):
        return X.sum() - a.sum() - b.sum()

    X = scaled(a, b)
    f = potential(X, a, b)
    for _ in range(max_steps):
        r, c = X.sum(axis=1), X.sum(axis=0)
        if max(np.abs(r - 1).max(), np.abs(c - 1).max()) <= tol * 0.1:
            break
        g = np.concatenate([r - 1.0, c[:-1] - 1.0])
        H = np.zeros((2 * n - 1, 2 * n - 1))
        H[:n, :n] = np.diag(r)
        H[n:, n:] = np.diag(c[:-1])
        H[:n, n:] = X[:, :-1]
        H[n:, :n] = X[:, :-1].T
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None
        da, db = d[:n], np.append(d[n:], 0.0)
        step = 1.0
        while step > 1e-10:
            a2, b2 = a + step * da, b + step * db
            X2 = scaled(a2, b2)
            f2 = potential(X2, a2, b2)
            if f2 <= f + 1e-4 * step * float(g @ d) + 1e-14 * max(1.0, abs(f)):
                break
            step *= 0.5
        else:
            return None
        a, b, X, f = a2, b2, X2, f2
    X = X / X.sum(axis=1, keepdims=True)
    X = X / X.sum(axis=0, keepdims=True)
    if np.abs(X.sum(axis=1) - 1.0).max() > tol:
        return None
    return X


@dataclass
class InnerSettings:
    max_iter: int = 2000
    tol: float = 1e-8
    step: float = 0.5  # damping lambda_j = step / sqrt(j)
    sinkhorn_tol: float = 1e-11
    patience: int = 10  # stop once the best objective gains < tol over this many steps


def as_history(history) -> Counter:
    if history is None:
        return Counter()
    if isinstance(history, Counter):
        return history
    if isinstance(history, Mapping):
        return Counter(dict(history))
    return Counter(history)


def cumulative_loss(x: np.ndarray, history: Mapping[Scenario, int], family: Family,
                    with_grad: bool = True) -> tuple[float, np.ndarray | None]:
    n = x.shape[0]
    total = 0.0
    grad = np.zeros((n, n)) if with_grad else None
    for s, w in history.items():
        r = rx.evaluate(x, s, family, check=False)
        if math.isinf(r.value):
            raise InnerSolverError(f"scenario {s!r} cannot be served by the family")
        total += w * r.value
        if with_grad:
            grad += w * r.grad
    return total, grad


def ftrl_objective(x: np.ndarray, history, family: Family, eta: float) -> float:
    loss, _ = cumulative_loss(x, as_history(history), family, with_grad=False)
    return loss + entropy_regularizer(x, eta)


def ftrl_minimize(history, family: Family, eta: float, n: int | None = None,
                  settings: InnerSettings | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Approximate minimizer of cumulative relaxation loss plus the entropy regularizer.

    ``history`` is a list of scenarios or a scenario -> count mapping. The
    step ``log x <- (1 - lam) log x - lam * eta * G`` (G the loss
    subgradient) is the mirror step of size ``lam * eta`` on the full
    objective, since the regularizer's gradient only adds a constant after
    projection. Stops when consecutive objectives agree to ``tol``
    (relative) or the best objective has improved by less than that over
    ``patience`` steps; returns the best iterate seen, never worse than the
    uniform matrix or ``x0``.
    """
    settings = settings or InnerSettings()
    hist = as_history(history)
    if n is None:
        if not hist:
            raise ValueError("n is required with an empty history")
        n = next(iter(hist)).n
    uniform = rx.uniform_schedule(n)
    if not hist:
        return uniform

    def objective(x):
        loss, g = cumulative_loss(x, hist, family)
        return loss + entropy_regularizer(x, eta), g

    best_x, (best_f, g) = uniform, objective(uniform)
    if x0 is not None:
        f0, g0 = objective(x0)
        if f0 < best_f:
            best_x, best_f, g = x0, f0, g0
    x, f = best_x, best_f
    mark, since = best_f, 0
    logx = np.log(np.maximum(x, FLOOR))
    for j in range(1, settings.max_iter + 1):
        lam = settings.step / math.sqrt(j)
        logx = (1.0 - lam) * logx - lam * eta * g
        logx -= logx.max()
        x = sinkhorn_project(np.exp(logx), tol=settings.sinkhorn_tol)
        logx = np.log(x)
        f_new, g = objective(x)
        if f_new < best_f:
            best_x, best_f = x, f_new
        scale = settings.tol * max(1.0, abs(f))
        if abs(f_new - f) <= scale:
            break
        if best_f < mark - scale:
            mark, since = best_f, 0
        else:
            since += 1
            if since >= settings.patience:
                break
        f = f_new
    return best_x


@dataclass
class FtrlState:
    n: int
    family: Family
    eta: float
    settings: InnerSettings = field(default_factory=InnerSettings)
    history: Counter = field(default_factory=Counter)
    x: np.ndarray | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.x is None:
            self.x = rx.uniform_schedule(self.n)

    def observe(self, s: Scenario) -> None:
        self.history[s] += 1

    def update(self) -> np.ndarray:
        self.x = ftrl_minimize(self.history, self.family, self.eta, self.n, self.settings, x0=self.x)
        return self.x


RoundingHook = Callable[[np.ndarray, Scenario, Family, np.random.Generator], object]


def run_full_information(seq: ScenarioSequence, family: Family, *, eta: float | None = None,
                         settings: InnerSettings | None = None, seed: int = 0,
                         rounding: RoundingHook | None = None, benchmark: Iterable[float] | None = None,
                         on_iterate: Callable[[int, np.ndarray], None] | None = None) -> RegretLedger:
    """Play FTRL against ``seq`` with full feedback after every round.

    ``rounding(x, s, family, rng)`` turns the fractional iterate into an
    inspection transcript; its cost fills ``alg_cost``. Without a hook the
    ledger's ``alg_cost`` is the fractional loss.
    """
    from .core import transcript_cost

    n, T = seq.n, seq.T
    eta = default_eta(n, T) if eta is None else eta
    state = FtrlState(n, family, eta, settings or InnerSettings())
    led = RegretLedger(meta={"algorithm": "full-info", "eta": eta, "seed": seed, "n": n, "T": T,
                             "family": family.to_json()})
    for t, s in enumerate(seq):
        x = state.x if t == 0 else state.update()
        if on_iterate is not None:
            on_iterate(t, x)
        frac = rx.evaluate(x, s, family, check=False).value
        if rounding is not None:
            tr = rounding(x, s, family, round_rng(seed, t))
            cost = transcript_cost(tr, family)
            led.record(cost, frac_loss=frac, failed=math.isinf(cost), opened=len(tr.opened))
        else:
            led.record(frac, frac_loss=frac)
        state.observe(s)
    if benchmark is not None:
        led.set_benchmark(benchmark)
    return led
