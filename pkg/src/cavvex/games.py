from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from cavvex.beliefs import JointBelief, compose
from cavvex.errors import ValidationError
from cavvex.grids import SimplexGrid, ValueTable
from cavvex.lp import PIVOT_TOLERANCE, lp_solve

KERNEL_TOLERANCE = 1e-12
MAX_KERNEL_SYSTEMS = 20_000


@dataclass(frozen=True, eq=False)
class MatrixGameFamily:
    """Payoff matrices G[k, l] of shape (|I|, |J|), indexed by type pair."""

    payoffs: np.ndarray

    def __post_init__(self) -> None:
        payoffs = np.array(self.payoffs, dtype=float)
        if payoffs.ndim != 4 or min(payoffs.shape) < 1:
            raise ValidationError(
                f"Family must have shape (|K|, |L|, |I|, |J|) with all sizes >= 1, got {payoffs.shape}."
            )
        if not np.all(np.isfinite(payoffs)):
            raise ValidationError("Payoff entries must be finite.")
        payoffs.setflags(write=False)
        object.__setattr__(self, "payoffs", payoffs)

    @property
    def types(self) -> tuple[int, int]:
        return (int(self.payoffs.shape[0]), int(self.payoffs.shape[1]))

    @property
    def actions(self) -> tuple[int, int]:
        return (int(self.payoffs.shape[2]), int(self.payoffs.shape[3]))

    @property
    def bound(self) -> float:
        return float(np.abs(self.payoffs).max())

    def average(self, weights: np.ndarray) -> np.ndarray:
        """Weighted average matrices; weights have trailing shape (|K|, |L|)."""
        w = np.asarray(weights, dtype=float)
        if w.shape[-2:] != self.types:
            raise ValidationError(f"Belief shape {w.shape[-2:]} does not match family types {self.types}.")
        return np.einsum("...kl,klij->...ij", w, self.payoffs)


@dataclass(frozen=True, eq=False)
class GameSolution:
    value: float
    optimal_row: np.ndarray
    optimal_col: np.ndarray


def solve_matrix_game(a: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> GameSolution:
    """Value and optimal mixed strategies of the zero-sum game A (row player maximizes)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise ValidationError("Matrix game entries must be finite.")
    shift = 1.0 + abs(float(a.min()))
    shifted = a + shift
    n_rows, n_cols = shifted.shape
    result = lp_solve(np.ones(n_cols), shifted, np.ones(n_rows), tol=tol)
    scale = result.objective
    col = np.clip(result.x / scale, 0.0, None)
    row = np.clip(result.duals_ub / scale, 0.0, None)
    return GameSolution(
        value=1.0 / scale - shift,
        optimal_row=row / row.sum(),
        optimal_col=col / col.sum(),
    )


def _kernel_systems(n_rows: int, n_cols: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    systems: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for size in range(2, min(n_rows, n_cols) + 1):
        for rows in combinations(range(n_rows), size):
            for cols in combinations(range(n_cols), size):
                systems.append((rows, cols))
    return systems


def matrix_game_values(matrices: np.ndarray) -> np.ndarray:
    """Exact values of a stack of matrix games, shape (..., |I|, |J|) -> (...).

    Every extreme optimal row strategy x solves, for some square submatrix M
    on rows S and columns T, the bordered system x_S M = v 1, sum(x_S) = 1.
    The value is the best guaranteed payoff among the nonnegative solutions.
    Pure rows cover the 1 x 1 kernels.
    """
    mats = np.asarray(matrices, dtype=float)
    batch_shape = mats.shape[:-2]
    n_rows, n_cols = mats.shape[-2:]
    flat = mats.reshape(-1, n_rows, n_cols)
    best = flat.min(axis=2).max(axis=1)

    systems = _kernel_systems(n_rows, n_cols)
    if len(systems) > MAX_KERNEL_SYSTEMS:
        values = np.array([solve_matrix_game(m).value for m in flat])
        return values.reshape(batch_shape)

    for rows, cols in systems:
        size = len(rows)
        sub = flat[:, list(rows)][:, :, list(cols)]
        bordered = np.zeros((flat.shape[0], size + 1, size + 1))
        bordered[:, :size, :size] = np.swapaxes(sub, 1, 2)
        bordered[:, :size, size] = -1.0
        bordered[:, size, :size] = 1.0
        scale = max(1.0, float(np.abs(sub).max(initial=0.0))) ** size
        det = np.linalg.det(bordered)
        regular = np.abs(det) > KERNEL_TOLERANCE * scale
        if not np.any(regular):
            continue
        rhs = np.zeros((int(regular.sum()), size + 1))
        rhs[:, size] = 1.0
        solution = np.linalg.solve(bordered[regular], rhs[..., None])[..., 0]
        weights = solution[:, :size]
        admissible = np.all(weights >= -KERNEL_TOLERANCE, axis=1)
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum(axis=1, keepdims=True)
        guaranteed = np.einsum("ns,nsj->nj", weights, flat[regular][:, list(rows), :]).min(axis=1)
        candidate = np.where(admissible, guaranteed, -np.inf)
        idx = np.flatnonzero(regular)
        best[idx] = np.maximum(best[idx], candidate)
    return best.reshape(batch_shape)


def nonrevealing_value(family: MatrixGameFamily, pi: JointBelief) -> float:
    """Value of the pi-averaged game, u(pi)."""
    if pi.shape != family.types:
        raise ValidationError(f"Belief shape {pi.shape} does not match family types {family.types}.")
    return solve_matrix_game(family.average(pi.probs)).value


def nonrevealing_values(family: MatrixGameFamily, beliefs: np.ndarray) -> np.ndarray:
    """Batched u on flattened beliefs of shape (P, |K|*|L|)."""
    n_k, n_l = family.types
    weights = np.asarray(beliefs, dtype=float).reshape(-1, n_k, n_l)
    return matrix_game_values(family.average(weights))


def nonrevealing_table(family: MatrixGameFamily, grid: SimplexGrid) -> ValueTable:
    if grid.shape != family.types:
        raise ValidationError(f"Grid shape {grid.shape} does not match family types {family.types}.")
    return ValueTable(grid, nonrevealing_values(family, grid.points))


def u_K(family: MatrixGameFamily, p: np.ndarray, q_rows: np.ndarray) -> float:
    return nonrevealing_value(family, compose(p, q_rows, "K"))


def u_L(family: MatrixGameFamily, p_rows: np.ndarray, q: np.ndarray) -> float:
    return nonrevealing_value(family, compose(q, p_rows, "L"))
