"""Dense two-phase tableau simplex with Bland's rule.

Problems are stated as

    maximize    c @ x
    subject to  a_ub @ x <= b_ub
                a_eq @ x == b_eq
                x >= 0, except the columns flagged in `free`.

Every run pivots deterministically (lowest-index entering column, ratio ties
broken by the lowest basic index), so repeated solves agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cavvex.errors import LPInfeasibleError, LPIterationLimitError, LPUnboundedError, ValidationError

PIVOT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class LPResult:
    objective: float
    x: np.ndarray
    duals_ub: np.ndarray
    duals_eq: np.ndarray
    slackness_residual: float
    iterations: int


def _as_rows(a: np.ndarray | None, b: np.ndarray | None, n: int) -> tuple[np.ndarray, np.ndarray]:
    if a is None:
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != (b.shape[0], n):
        raise ValidationError(f"Constraint block of shape {a.shape} does not match {b.shape[0]} x {n}.")
    return a, b


class _Tableau:
    def __init__(self, rows: np.ndarray, rhs: np.ndarray, basis: np.ndarray, tol: float) -> None:
        self.t = np.hstack([rows, rhs[:, None]])
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.t[:, :-1]

    def pivot(self, row: int, col: int) -> None:
        t = self.t
        t[row] /= t[row, col]
        column = t[:, col].copy()
        column[row] = 0.0
        t -= np.outer(column, t[row])
        self.basis[row] = col
        self.iterations += 1

    def optimize(self, cost: np.ndarray, allowed: np.ndarray, max_iterations: int) -> None:
        tol = self.tol
        while True:
            if self.iterations >= max_iterations:
                raise LPIterationLimitError(f"Simplex stopped after {self.iterations} pivots.")
            reduced = self.reduced_costs(cost)
            candidates = np.flatnonzero((reduced > tol) & allowed)
            if candidates.size == 0:
                return
            col = int(candidates[0])
            column = self.t[:, col]
            eligible = np.flatnonzero(column > tol)
            if eligible.size == 0:
                raise LPUnboundedError("Linear program is unbounded.")
            ratios = self.t[eligible, -1] / column[eligible]
            best = ratios.min()
            tied = eligible[ratios <= best + tol * max(1.0, abs(best))]
            row = int(tied[np.argmin(self.basis[tied])])
            self.pivot(row, col)


def lp_solve(
    c: np.ndarray,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    *,
    free: np.ndarray | None = None,
    tol: float = PIVOT_TOLERANCE,
    max_iterations: int | None = None,
) -> LPResult:
    """Solve a small dense LP; returns primal solution and shadow prices.

    `duals_ub` are nonnegative and `objective == duals_ub @ b_ub + duals_eq @ b_eq`
    at optimality.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.shape[0]
    a_ub, b_ub = _as_rows(a_ub, b_ub, n)
    a_eq, b_eq = _as_rows(a_eq, b_eq, n)
    free_mask = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool).reshape(-1)
    free_cols = np.flatnonzero(free_mask)

    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    structural = np.vstack([a_ub, a_eq])
    structural = np.hstack([structural, -structural[:, free_cols]])
    n_struct = structural.shape[1]
    rhs = np.concatenate([b_ub, b_eq])
    sign = np.where(rhs < 0, -1.0, 1.0)

    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = 1.0
    needs_artificial = np.ones(m, dtype=bool)
    needs_artificial[:m_ub] = rhs[:m_ub] < 0
    artificial_rows = np.flatnonzero(needs_artificial)
    artificial = np.zeros((m, artificial_rows.size))
    artificial[artificial_rows, np.arange(artificial_rows.size)] = 1.0

    body = np.hstack([structural, slack]) * sign[:, None]
    rows = np.hstack([body, artificial])
    n_cols = rows.shape[1]
    first_artificial = n_struct + m_ub

    identity_col = np.empty(m, dtype=np.int64)
    identity_col[:m_ub] = n_struct + np.arange(m_ub)
    identity_col[artificial_rows] = first_artificial + np.arange(artificial_rows.size)

    tableau = _Tableau(rows, rhs * sign, identity_col.copy(), tol)
    budget = max_iterations or 50 * (m + n_cols) + 100
    is_artificial = np.zeros(n_cols, dtype=bool)
    is_artificial[first_artificial:] = True

    if artificial_rows.size:
        phase_one = np.where(is_artificial, -1.0, 0.0)
        tableau.optimize(phase_one, np.ones(n_cols, dtype=bool), budget)
        infeasibility = float(tableau.t[is_artificial[tableau.basis], -1].sum())
        if infeasibility > tol * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            raise LPInfeasibleError(f"Linear program is infeasible (residual {infeasibility:.3e}).")
        for row in np.flatnonzero(is_artificial[tableau.basis]):
            entries = np.abs(tableau.t[row, :first_artificial])
            movable = np.flatnonzero(entries > tol)
            if movable.size:
                tableau.pivot(int(row), int(movable[0]))

    cost = np.zeros(n_cols)
    cost[:n] = c
    cost[n : n_struct] = -c[free_cols]
    tableau.optimize(cost, ~is_artificial, budget)

    values = np.zeros(n_cols)
    values[tableau.basis] = tableau.t[:, -1]
    x = values[:n].copy()
    x[free_cols] -= values[n:n_struct]

    multipliers = cost[tableau.basis] @ tableau.t[:, identity_col]
    duals = multipliers * sign
    duals_ub, duals_eq = duals[:m_ub], duals[m_ub:]

    slack_ub = b_ub - a_ub @ x
    reduced = a_ub.T @ duals_ub + a_eq.T @ duals_eq - c
    residual = max(
        float(np.max(np.abs(duals_ub * slack_ub), initial=0.0)),
        float(np.max(np.abs(x[~free_mask] * reduced[~free_mask]), initial=0.0)),
        float(np.max(np.abs(reduced[free_mask]), initial=0.0)),
    )
    return LPResult(
        objective=float(c @ x),
        x=x,
        duals_ub=duals_ub,
        duals_eq=duals_eq,
        slackness_residual=residual,
        iterations=tableau.iterations,
    )
