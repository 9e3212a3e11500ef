"""Conjugates, supergradients and concave/convex envelopes of grid tables.

Tables live on uniform simplex grids and are read as piecewise-affine
functions, so every sup and inf below is a maximum or minimum over grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from cavvex.beliefs import Side, conditional_rows
from cavvex.errors import (
    LPInfeasibleError,
    LPUnboundedError,
    NonConcaveError,
    ValidationError,
)
from cavvex.grids import SimplexGrid, ValueTable, kuhn_stencil, simplex_grid
from cavvex.lp import PIVOT_TOLERANCE, lp_solve

ENVELOPE_TOLERANCE = 1e-9
EXTREME_TOLERANCE = 1e-7
FIBER_KEY_DECIMALS = 12

BeliefEvaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Certificate:
    """Grid positions and convex weights realizing an envelope value."""

    support: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    envelope: ValueTable
    certificates: tuple[Certificate, ...]


def _simplex_table(table: ValueTable) -> SimplexGrid:
    if not isinstance(table.grid, SimplexGrid):
        raise ValidationError("Expected a table on a single simplex grid.")
    return table.grid


def _dual_vector(table: ValueTable, vector: np.ndarray) -> np.ndarray:
    grid = _simplex_table(table)
    v = np.asarray(vector, dtype=float).reshape(-1)
    if v.shape[0] != grid.dimension:
        raise ValidationError(
            f"Dual vector has {v.shape[0]} entries, expected {grid.dimension}."
        )
    if not np.all(np.isfinite(v)):
        raise ValidationError("Dual vector entries must be finite.")
    return v


def upper_conjugate(table: ValueTable, zeta: np.ndarray) -> tuple[float, np.ndarray]:
    """max_p phi(p) - <zeta, p> over grid nodes, with a maximizing node."""
    z = _dual_vector(table, zeta)
    scores = table.values - table.grid.points @ z
    idx = int(np.argmax(scores))
    return float(scores[idx]), table.grid.points[idx].copy()


def lower_conjugate(table: ValueTable, eta: np.ndarray) -> tuple[float, np.ndarray]:
    """min_q phi(q) + <q, eta> over grid nodes, with a minimizing node."""
    e = _dual_vector(table, eta)
    scores = table.values + table.grid.points @ e
    idx = int(np.argmin(scores))
    return float(scores[idx]), table.grid.points[idx].copy()


def upper_conjugate_many(table: ValueTable, zetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched upper conjugate: values (S,) and maximizing grid positions (S,)."""
    z = np.atleast_2d(np.asarray(zetas, dtype=float))
    scores = table.values[None, :] - z @ table.grid.points.T
    idx = np.argmax(scores, axis=1)
    return scores[np.arange(z.shape[0]), idx], idx


def fenchel_transform(points: np.ndarray, values: np.ndarray, y: np.ndarray) -> float:
    """Plain discrete Legendre-Fenchel transform sup_x <x, y> - phi(x)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.max(pts @ np.asarray(y, dtype=float) - np.asarray(values, dtype=float)))


def _hull_value(
    points: np.ndarray, values: np.ndarray, target: np.ndarray, tol: float
) -> tuple[float, np.ndarray]:
    result = lp_solve(values, a_eq=points.T, b_eq=target, tol=tol)
    return result.objective, np.clip(result.x, 0.0, None)


def cav(table: ValueTable, *, tol: float = PIVOT_TOLERANCE) -> EnvelopeResult:
    """Concave envelope with a convex-combination certificate at every node."""
    grid = _simplex_table(table)
    points, values = grid.points, table.values
    envelope = np.empty(grid.size)
    certificates: list[Certificate] = []
    for i in range(grid.size):
        value, weights = _hull_value(points, values, points[i], tol)
        envelope[i] = max(value, values[i])
        support = np.flatnonzero(weights > ENVELOPE_TOLERANCE)
        w = weights[support]
        certificates.append(Certificate(support=support, weights=w / w.sum()))
    return EnvelopeResult(envelope=table.with_values(envelope), certificates=tuple(certificates))


def vex(table: ValueTable, *, tol: float = PIVOT_TOLERANCE) -> EnvelopeResult:
    upper = cav(table.with_values(-table.values), tol=tol)
    return EnvelopeResult(
        envelope=table.with_values(-upper.envelope.values),
        certificates=upper.certificates,
    )


def supergradient_at(
    points: np.ndarray, values: np.ndarray, index: int, *, tol: float = PIVOT_TOLERANCE
) -> np.ndarray:
    """Zero-mean supergradient of smallest l1 norm at points[index].

    Solved through the dual of min |x|_1 s.t. <x, p_r - p> >= f(p_r) - f(p),
    sum(x) = 0, whose constraint rows all have right-hand side 1.
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    d = pts.shape[1]
    if d == 1:
        return np.zeros(1)
    others = np.arange(pts.shape[0]) != index
    directions = pts[others] - pts[index]
    gains = vals[others] - vals[index]
    block = np.hstack([directions.T, np.ones((d, 1))])
    a_ub = np.vstack([block, -block])
    c = np.concatenate([gains, [0.0]])
    free = np.zeros(c.shape[0], dtype=bool)
    free[-1] = True
    try:
        result = lp_solve(c, a_ub, np.ones(2 * d), free=free, tol=tol)
    except LPUnboundedError as exc:
        raise NonConcaveError(
            f"No supergradient exists at {pts[index].tolist()}: the table is not concave there."
        ) from exc
    x = result.duals_ub[:d] - result.duals_ub[d:]
    return x - x.mean()


def _concavity_defect(grid: SimplexGrid, values: np.ndarray, tol: float) -> float:
    return float(np.max(concave_envelope_rows(grid, values, tol=tol) - values, initial=0.0))


def superdifferential(table: ValueTable, p: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    """Supergradient of a grid-concave table at p; the table is checked against its envelope first."""
    grid = _simplex_table(table)
    defect = _concavity_defect(grid, table.values, tol)
    if defect > ENVELOPE_TOLERANCE:
        raise NonConcaveError(f"The table is not concave on its grid (envelope gap {defect:.3e}).")
    return supergradient_at(grid.points, table.values, grid.locate(p), tol=tol)


def subdifferential(table: ValueTable, p: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    grid = _simplex_table(table)
    defect = _concavity_defect(grid, -table.values, tol)
    if defect > ENVELOPE_TOLERANCE:
        raise NonConcaveError(f"The table is not convex on its grid (envelope gap {defect:.3e}).")
    try:
        return -supergradient_at(grid.points, -table.values, grid.locate(p), tol=tol)
    except NonConcaveError as exc:
        raise NonConcaveError(
            f"No subgradient exists at {np.asarray(p).tolist()}: the table is not convex there."
        ) from exc


def is_extreme(
    table: ValueTable, index: int, *, tol: float = EXTREME_TOLERANCE, lp_tol: float = PIVOT_TOLERANCE
) -> bool:
    grid = _simplex_table(table)
    others = np.arange(grid.size) != index
    try:
        hull, _ = _hull_value(grid.points[others], table.values[others], grid.points[index], lp_tol)
    except LPInfeasibleError:
        return True
    return bool(table.values[index] - hull > tol)


def extreme_points(table: ValueTable, *, tol: float = EXTREME_TOLERANCE) -> np.ndarray:
    """Grid positions whose value lies strictly above the hull of all other nodes."""
    grid = _simplex_table(table)
    return np.array([i for i in range(grid.size) if is_extreme(table, i, tol=tol)], dtype=np.int64)


def exposing_supergradient(
    table: ValueTable, index: int, *, tol: float = ENVELOPE_TOLERANCE
) -> np.ndarray | None:
    """A zero-mean supergradient whose conjugate argmax is only grid node `index`.

    Maximizes the margin by which node `index` beats every other node in
    f(p) - <x, p>; returns None when no positive margin exists.
    """
    grid = _simplex_table(table)
    points, values = grid.points, table.values
    d = grid.dimension
    if grid.size == 1:
        return np.zeros(d)
    others = np.arange(grid.size) != index
    directions = points[others] - points[index]
    gains = values[others] - values[index]
    n_rows = directions.shape[0]
    a_ub = np.vstack(
        [
            np.hstack([-directions, np.ones((n_rows, 1))]),
            np.concatenate([np.zeros(d), [1.0]])[None, :],
        ]
    )
    b_ub = np.concatenate([-gains, [1.0]])
    a_eq = np.concatenate([np.ones(d), [0.0]])[None, :]
    c = np.zeros(d + 1)
    c[-1] = 1.0
    result = lp_solve(c, a_ub, b_ub, a_eq, np.zeros(1), free=np.ones(d + 1, dtype=bool))
    if result.objective <= tol:
        return None
    x = result.x[:d]
    return x - x.mean()


def _upper_hull_rows_1d(rows: np.ndarray, positions: np.ndarray | None = None) -> np.ndarray:
    """Exact concave envelope of each row sampled at increasing abscissae.

    Monotone-chain scan run on all rows at once; `positions` defaults to
    equally spaced nodes.
    """
    n_rows, n = rows.shape
    if n <= 2:
        return rows.copy()
    xs = np.arange(n, dtype=float) if positions is None else np.asarray(positions, dtype=float)
    stack = np.zeros((n_rows, n), dtype=np.int64)
    size = np.zeros(n_rows, dtype=np.int64)
    all_rows = np.arange(n_rows)
    for c in range(n):
        while True:
            active = np.flatnonzero(size >= 2)
            if active.size == 0:
                break
            a = stack[active, size[active] - 2]
            b = stack[active, size[active] - 1]
            ya, yb, yc = rows[active, a], rows[active, b], rows[active, c]
            cross = (xs[b] - xs[a]) * (yc - ya) - (yb - ya) * (xs[c] - xs[a])
            pop = active[cross >= 0]
            if pop.size == 0:
                break
            size[pop] -= 1
        stack[all_rows, size] = c
        size += 1

    on_hull = np.zeros((n_rows, n), dtype=bool)
    depth = np.arange(n)[None, :] < size[:, None]
    on_hull[np.repeat(all_rows, n)[depth.reshape(-1)], stack[depth]] = True
    nodes = np.arange(n)
    left = np.maximum.accumulate(np.where(on_hull, nodes, -1), axis=1)
    right = np.minimum.accumulate(np.where(on_hull, nodes, n)[:, ::-1], axis=1)[:, ::-1]
    y_left = np.take_along_axis(rows, left, axis=1)
    y_right = np.take_along_axis(rows, right, axis=1)
    x_left, x_right = xs[left], xs[right]
    span = np.where(right > left, x_right - x_left, 1.0)
    return y_left + (y_right - y_left) * (xs[None, :] - x_left) / span


def extreme_mask_rows(
    grid: SimplexGrid, rows: np.ndarray, *, tol: float = EXTREME_TOLERANCE
) -> np.ndarray:
    """Boolean (R, grid.size): nodes lying strictly above the hull of the other nodes."""
    values = np.atleast_2d(np.asarray(rows, dtype=float))
    n_rows, n = values.shape
    mask = np.zeros((n_rows, n), dtype=bool)
    if grid.dimension == 1 or n <= 2:
        mask[:] = True
        return mask
    if grid.dimension == 2:
        mask[:, 0] = mask[:, -1] = True
        nodes = np.arange(n, dtype=float)
        for i in range(1, n - 1):
            hull = _upper_hull_rows_1d(np.delete(values, i, axis=1), np.delete(nodes, i))
            at_i = 0.5 * (hull[:, i - 1] + hull[:, i])
            mask[:, i] = values[:, i] - at_i > tol
        return mask
    points = grid.points
    for r in range(n_rows):
        for i in range(n):
            others = np.arange(n) != i
            try:
                hull, _ = _hull_value(points[others], values[r, others], points[i], PIVOT_TOLERANCE)
            except LPInfeasibleError:
                mask[r, i] = True
                continue
            mask[r, i] = values[r, i] - hull > tol
    return mask


def concave_envelope_rows(grid: SimplexGrid, rows: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    """Concave envelope of many tables on one grid, rows of shape (..., grid.size)."""
    values = np.asarray(rows, dtype=float)
    batch = values.shape[:-1]
    flat = values.reshape(-1, grid.size)
    if grid.dimension == 1:
        out = flat.copy()
    elif grid.dimension == 2:
        out = _upper_hull_rows_1d(flat)
    else:
        out = np.empty_like(flat)
        points = grid.points
        for r in range(flat.shape[0]):
            for i in range(grid.size):
                value, _ = _hull_value(points, flat[r], points[i], tol)
                out[r, i] = max(value, flat[r, i])
    return out.reshape(*batch, grid.size)


def convex_envelope_rows(grid: SimplexGrid, rows: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    return -concave_envelope_rows(grid, -np.asarray(rows, dtype=float), tol=tol)


class FiberProjector:
    """Fibers of a joint-belief grid with the conditionals on one side held fixed.

    For side "K" the fiber through pi is p -> p (x) Q with Q = Q(l|k) of pi;
    each fiber is sampled on a Delta(K) grid of the same resolution, and pi sits
    on its own fiber at the node given by its marginal.
    """

    def __init__(self, grid: SimplexGrid, side: Side = "K") -> None:
        if len(grid.shape) != 2:
            raise ValidationError(f"Fiber projection needs a joint-belief grid, got shape {grid.shape}.")
        self.grid = grid
        self.side = side
        n_k, n_l = grid.shape
        counts = grid.indices.reshape(-1, n_k, n_l)
        if side == "L":
            counts = np.swapaxes(counts, 1, 2)
        marginal_counts = counts.sum(axis=2)
        _, rows = conditional_rows(counts.astype(float))
        self.fiber_grid = simplex_grid(counts.shape[1], grid.resolution)
        self.marginal_rank = self.fiber_grid.rank(marginal_counts)
        keys = np.round(rows.reshape(rows.shape[0], -1), FIBER_KEY_DECIMALS)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        self.fiber_of = inverse.reshape(-1)
        self.conditionals = rows[first]

    @property
    def n_fibers(self) -> int:
        return int(self.conditionals.shape[0])

    @cached_property
    def beliefs(self) -> np.ndarray:
        """Joint beliefs on every fiber node, shape (fibers, fiber nodes, |K|, |L|)."""
        marginals = self.fiber_grid.points
        joint = marginals[None, :, :, None] * self.conditionals[:, None, :, :]
        if self.side == "L":
            joint = np.swapaxes(joint, 2, 3)
        return joint

    @cached_property
    def _stencil(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.beliefs.reshape(-1, self.grid.dimension)
        ranks, weights = kuhn_stencil(self.grid, flat)
        shape = (self.n_fibers, self.fiber_grid.size, -1)
        return ranks.reshape(shape), weights.reshape(shape)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Fiber functions (..., fibers, fiber nodes) of tables (..., grid.size)."""
        ranks, weights = self._stencil
        return np.sum(np.asarray(values, dtype=float)[..., ranks] * weights, axis=-1)

    def read_back(self, fiber_values: np.ndarray) -> np.ndarray:
        return np.asarray(fiber_values)[..., self.fiber_of, self.marginal_rank]

    def concave(self, values: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
        return self.read_back(concave_envelope_rows(self.fiber_grid, self.restrict(values), tol=tol))

    def convex(self, values: np.ndarray, *, tol: float = PIVOT_TOLERANCE) -> np.ndarray:
        return self.read_back(convex_envelope_rows(self.fiber_grid, self.restrict(values), tol=tol))

    def evaluate(self, evaluator: BeliefEvaluator) -> np.ndarray:
        """Fiber functions computed by direct evaluation on p (x) Q."""
        n_k, n_l = self.grid.shape
        flat = self.beliefs.reshape(-1, n_k, n_l)
        return np.asarray(evaluator(flat), dtype=float).reshape(self.n_fibers, self.fiber_grid.size)


def _joint_grid(table: ValueTable) -> SimplexGrid:
    grid = _simplex_table(table)
    if len(grid.shape) != 2:
        raise ValidationError(f"Expected a table over joint beliefs, got grid shape {grid.shape}.")
    return grid


def cav_K(
    w: ValueTable,
    evaluator: BeliefEvaluator | None = None,
    *,
    projector: FiberProjector | None = None,
) -> ValueTable:
    """Concavify along K-fibers p -> w(p (x) Q), read back at each node's own marginal.

    With an evaluator, fiber functions come from evaluating it on p (x) Q
    instead of interpolating w.
    """
    grid = _joint_grid(w)
    fibers = projector or FiberProjector(grid, "K")
    if evaluator is None:
        return w.with_values(fibers.concave(w.values))
    env = concave_envelope_rows(fibers.fiber_grid, fibers.evaluate(evaluator))
    return w.with_values(fibers.read_back(env))


def vex_L(
    w: ValueTable,
    evaluator: BeliefEvaluator | None = None,
    *,
    projector: FiberProjector | None = None,
) -> ValueTable:
    grid = _joint_grid(w)
    fibers = projector or FiberProjector(grid, "L")
    if evaluator is None:
        return w.with_values(fibers.convex(w.values))
    env = convex_envelope_rows(fibers.fiber_grid, fibers.evaluate(evaluator))
    return w.with_values(fibers.read_back(env))
