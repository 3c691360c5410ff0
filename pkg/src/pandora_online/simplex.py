"""Dense two-phase tableau simplex for small LPs, in float or exact rational arithmetic.

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                0 <= x <= ub        (ub entries may be inf)

Used as the ground-truth backend of the oracle module. Float solves are
certified by primal/dual residuals and the duality gap; a solve whose
certificate fails is repeated in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass
class LPResult:
    optimum: float
    x: np.ndarray
    duals_ub: np.ndarray  # d optimum / d b_ub, <= 0
    duals_eq: np.ndarray  # d optimum / d b_eq
    duals_bound: np.ndarray  # d optimum / d ub, <= 0 (0 for infinite bounds)
    residual: float
    exact: bool
    pivots: int


def _as_rows(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, n)


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, ub=None, *, exact: bool = False,
             tol: float = 1e-9, max_pivots: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = _as_rows(A_ub, n)
    A_eq = _as_rows(A_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).ravel()
    if A_ub.shape[0] != b_ub.shape[0] or A_eq.shape[0] != b_eq.shape[0] or ub.shape[0] != n:
        raise ValueError("inconsistent LP dimensions")

    # finite upper bounds become explicit rows
    bounded = np.flatnonzero(np.isfinite(ub))
    A_rows = np.vstack([A_ub, np.eye(n)[bounded]]) if bounded.size else A_ub
    b_rows = np.concatenate([b_ub, ub[bounded]])

    if exact:
        res = _tableau(c, A_rows, b_rows, A_eq, b_eq, exact=True, tol=0, max_pivots=max_pivots)
    else:
        res = _tableau(c, A_rows, b_rows, A_eq, b_eq, exact=False, tol=tol, max_pivots=max_pivots)
    x, y_rows, y_eq, pivots, rounded = res
    y_ub = y_rows[: A_ub.shape[0]]
    y_bound = np.zeros(n)
    y_bound[bounded] = y_rows[A_ub.shape[0]:]

    resid = _certificate(c, A_ub, b_ub, A_eq, b_eq, ub, x, y_ub, y_eq, y_bound)
    scale = 1.0 + float(np.abs(c).sum()) + float(np.abs(b_rows).sum()) + float(np.abs(b_eq).sum())
    if not exact and resid > 1e-9 * scale:
        return solve_lp(c, A_ub, b_ub, A_eq, b_eq, ub, exact=True, max_pivots=max_pivots)
    return LPResult(float(c @ x), x, y_ub, y_eq, y_bound, resid, exact and not rounded, pivots)


def _certificate(c, A_ub, b_ub, A_eq, b_eq, ub, x, y_ub, y_eq, y_bound) -> float:
    """Largest violation among primal feasibility, dual feasibility and the duality gap."""
    viol = [0.0, float(np.max(-x, initial=0.0))]
    if A_ub.shape[0]:
        viol.append(float(np.max(A_ub @ x - b_ub, initial=0.0)))
        viol.append(float(np.max(y_ub, initial=0.0)))
    if A_eq.shape[0]:
        viol.append(float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)))
    fin = np.isfinite(ub)
    viol.append(float(np.max(x[fin] - ub[fin], initial=0.0)))
    viol.append(float(np.max(y_bound, initial=0.0)))
    reduced = c - A_ub.T @ y_ub - A_eq.T @ y_eq - y_bound
    viol.append(float(np.max(-reduced, initial=0.0)))
    dual_obj = b_ub @ y_ub + b_eq @ y_eq + (ub[fin] @ y_bound[fin] if fin.any() else 0.0)
    viol.append(abs(float(c @ x) - float(dual_obj)))
    return max(viol)


def _tableau(c, A_le, b_le, A_eq, b_eq, *, exact, tol, max_pivots):
    n = c.shape[0]
    m_le, m_eq = A_le.shape[0], A_eq.shape[0]
    m = m_le + m_eq
    conv = (lambda v: Fraction(float(v))) if exact else float
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)

    # columns: original n | slack/surplus m_le | artificial m
    ncols = n + m_le + m
    dtype = object if exact else float
    T = np.empty((m, ncols + 1), dtype=dtype)
    T[...] = zero
    sign = np.ones(m)
    basis = np.empty(m, dtype=int)
    for r in range(m):
        if r < m_le:
            row, rhs = A_le[r], b_le[r]
        else:
            row, rhs = A_eq[r - m_le], b_eq[r - m_le]
        s = -1.0 if rhs < 0 else 1.0
        sign[r] = s
        for j in range(n):
            T[r, j] = conv(s * row[j])
        if r < m_le:
            T[r, n + r] = conv(s)
        T[r, n + m_le + r] = one
        T[r, -1] = conv(s * rhs)
        basis[r] = n + m_le + r
    # rows whose slack already has +1 start with the slack basic
    for r in range(m_le):
        if sign[r] > 0:
            basis[r] = n + r

    art = np.arange(n + m_le, ncols)
    is_art = np.zeros(ncols, dtype=bool)
    is_art[art] = True
    unused_art = set(int(a) for a in art if a not in set(basis.tolist()))

    pivots = 0
    rounded = False

    def run(cost, allowed):
        nonlocal pivots
        # reduced-cost row: cost - c_B B^-1 A
        z = np.empty(ncols + 1, dtype=dtype)
        z[:ncols] = cost
        z[-1] = zero
        for r in range(m):
            cb = cost[basis[r]]
            if cb != 0:
                z = z - cb * T[r]
        stall, best = 0, None
        while True:
            if exact:
                neg = np.array([v < 0 for v in z[:ncols]])
            else:
                neg = z[:ncols].astype(float) < -tol
            cand = np.flatnonzero(neg & allowed).tolist()
            if not cand:
                return z
            if stall > 50 or exact:
                e = min(cand)
            else:
                e = min(cand, key=lambda j: (float(z[j]), j))
            best_r = _ratio_test(T, e, basis, exact, tol)
            if best_r < 0:
                raise Unbounded("LP is unbounded")
            _pivot(T, best_r, e)
            z = z - z[e] * T[best_r]
            basis[best_r] = e
            pivots += 1
            if pivots > max_pivots:
                raise LPError("pivot limit exceeded")
            obj = float(-z[-1])
            if best is not None and obj >= best - 1e-15:
                stall += 1
            else:
                stall = 0
            best = obj if best is None else min(best, obj)

    # phase 1
    if m:
        cost1 = np.array([one if (is_art[j] and j not in unused_art) else zero for j in range(ncols)], dtype=dtype)
        allowed1 = np.array([not (is_art[j] and j in unused_art) for j in range(ncols)])
        z1 = run(cost1, allowed1)
        infeas = float(-z1[-1])
        # exact arithmetic on float data: a residual at rounding level means the
        # data itself is infeasible by an ulp, so solve the nearby program instead
        data_scale = 1.0 + float(np.abs(b_le).sum()) + float(np.abs(b_eq).sum())
        if infeas > (1e-7 if not exact else 1e-12 * data_scale):
            raise Infeasible(f"LP is infeasible (phase-1 residual {infeas:.3g})")
        rounded = exact and infeas > 0
        # drive artificial variables out of the basis
        for r in range(m):
            if is_art[basis[r]]:
                for j in range(n + m_le):
                    if (abs(float(T[r, j])) > 1e-9) if not exact else (T[r, j] != 0):
                        _pivot(T, r, j)
                        basis[r] = j
                        break

    cost2 = np.array([conv(c[j]) if j < n else zero for j in range(ncols)], dtype=dtype)
    allowed2 = ~is_art
    z2 = run(cost2, allowed2)

    x = np.zeros(n)
    for r in range(m):
        if basis[r] < n:
            x[basis[r]] = float(T[r, -1])
    # duals: reduced cost of the artificial column of row r equals -y_r (standard form)
    y_std = np.array([-float(z2[n + m_le + r]) for r in range(m)])
    y = y_std * sign
    x = np.maximum(x, 0.0)
    return x, y[:m_le], y[m_le:], pivots, m > 0 and rounded


def _ratio_test(T, e, basis, exact, tol) -> int:
    """Minimum-ratio row for entering column ``e``; ties go to the smallest basic index."""
    col = T[:, e]
    rhs = T[:, -1]
    if exact:
        best_r, best_ratio = -1, None
        for r in range(T.shape[0]):
            if col[r] > 0:
                ratio = rhs[r] / col[r]
                if best_ratio is None or ratio < best_ratio or (ratio == best_ratio and basis[r] < basis[best_r]):
                    best_r, best_ratio = r, ratio
        return best_r
    pos = np.flatnonzero(col > tol)
    if pos.size == 0:
        return -1
    ratios = rhs[pos] / col[pos]
    lo = ratios.min()
    ties = pos[ratios <= lo + tol]
    return int(ties[np.argmin(basis[ties])])


def _pivot(T, r, e) -> None:
    pr = T[r] / T[r, e]
    col = T[:, e].copy()
    col[r] = 0
    T -= np.outer(col, pr)
    T[r] = pr
