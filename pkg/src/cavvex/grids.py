"""Uniform barycentric grids on simplices and tables sampled on them.

A grid of resolution m on the simplex of dimension d holds every point whose
coordinates are multiples of 1/m. Points are stored as integer multi-indices
(compositions of m into d parts) in ascending lexicographic order, so tables
built on the same grid line up entry by entry across runs.

Interpolation uses the Kuhn (Freudenthal) triangulation in cumulative
coordinates c_i = m * sum_{j >= i} x_j, where the grid becomes the integer
lattice restricted to m >= c_1 >= ... >= c_{d-1} >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb
from typing import Union

import numpy as np

from cavvex.errors import GridCapError, ValidationError

DEFAULT_GRID_POINT_CAP = 10_000_000
DOMAIN_TOLERANCE = 1e-9
SNAP_TOLERANCE = 1e-9


@lru_cache(maxsize=64)
def _binomial_table(n_max: int, k_max: int) -> np.ndarray:
    table = np.zeros((n_max + 1, k_max + 1), dtype=np.int64)
    for n in range(n_max + 1):
        for k in range(min(n, k_max) + 1):
            table[n, k] = comb(n, k)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def _compositions(d: int, m: int) -> np.ndarray:
    if d == 1:
        out = np.array([[m]], dtype=np.int64)
    else:
        blocks = []
        for first in range(m + 1):
            rest = _compositions(d - 1, m - first)
            head = np.full((rest.shape[0], 1), first, dtype=np.int64)
            blocks.append(np.hstack([head, rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def grid_point_count(d: int, m: int) -> int:
    return comb(m + d - 1, d - 1)


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    dimension: int
    resolution: int
    shape: tuple[int, ...]
    indices: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    @cached_property
    def points(self) -> np.ndarray:
        pts = self.indices / self.resolution
        pts.setflags(write=False)
        return pts

    def rank(self, multi_indices: np.ndarray) -> np.ndarray:
        """Canonical positions of integer multi-indices (rows summing to m)."""
        a = np.asarray(multi_indices, dtype=np.int64)
        single = a.ndim == 1
        a = np.atleast_2d(a)
        d, m = self.dimension, self.resolution
        ranks = np.zeros(a.shape[0], dtype=np.int64)
        if d == 1:
            return ranks[0] if single else ranks
        table = _binomial_table(m + d, d)
        remaining = m - np.concatenate(
            [np.zeros((a.shape[0], 1), dtype=np.int64), np.cumsum(a, axis=1)[:, :-1]],
            axis=1,
        )
        for i in range(d - 1):
            k = d - i - 1
            r = remaining[:, i]
            ranks += table[r + k, k] - table[r - a[:, i] + k, k]
        return ranks[0] if single else ranks

    def locate(self, point: np.ndarray) -> int:
        """Position of a grid point given by its coordinates."""
        x = np.asarray(point, dtype=float).reshape(-1)
        scaled = x * self.resolution
        counts = np.rint(scaled).astype(np.int64)
        if x.shape[0] != self.dimension or np.max(np.abs(scaled - counts)) > SNAP_TOLERANCE * max(
            1, self.resolution
        ):
            raise ValidationError(f"Point {x.tolist()} is not a node of the grid.")
        if counts.sum() != self.resolution or counts.min() < 0:
            raise ValidationError(f"Point {x.tolist()} is not a node of the grid.")
        return int(self.rank(counts))


def simplex_grid(
    d: int,
    m: int,
    *,
    shape: tuple[int, ...] | None = None,
    cap: int = DEFAULT_GRID_POINT_CAP,
) -> SimplexGrid:
    """Grid of resolution m on the simplex with d coordinates.

    `shape` records a factorization of the coordinates (for instance (|K|, |L|)
    for joint beliefs); it defaults to (d,).
    """
    if d < 1 or m < 1:
        raise ValidationError(f"Grid needs d >= 1 and m >= 1, got d={d}, m={m}.")
    layout = shape or (d,)
    if int(np.prod(layout)) != d:
        raise ValidationError(f"Grid shape {layout} does not factor dimension {d}.")
    count = grid_point_count(d, m)
    if count > cap:
        raise GridCapError(
            f"Grid with d={d}, m={m} has {count} points, above the cap of {cap}."
        )
    return SimplexGrid(dimension=d, resolution=m, shape=tuple(layout), indices=_compositions(d, m))


@dataclass(frozen=True, eq=False)
class ProductGrid:
    factors: tuple[SimplexGrid, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.size for g in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dimension(self) -> int:
        return sum(g.dimension for g in self.factors)

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*[np.arange(g.size) for g in self.factors], indexing="ij")
        parts = [g.points[idx.reshape(-1)] for g, idx in zip(self.factors, mesh)]
        pts = np.hstack(parts)
        pts.setflags(write=False)
        return pts


def product_grid(*grids: SimplexGrid, cap: int = DEFAULT_GRID_POINT_CAP) -> ProductGrid:
    if not grids:
        raise ValidationError("A product grid needs at least one factor.")
    out = ProductGrid(factors=tuple(grids))
    if out.size > cap:
        raise GridCapError(f"Product grid has {out.size} points, above the cap of {cap}.")
    return out


Grid = Union[SimplexGrid, ProductGrid]


@dataclass(frozen=True, eq=False)
class ValueTable:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.grid.size:
            raise ValidationError(
                f"Table has {values.shape[0]} values for a grid of {self.grid.size} points."
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("Table values must be finite.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> ValueTable:
        return ValueTable(self.grid, values)


def _check_domain(points: np.ndarray, d: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != d:
        raise ValidationError(f"Expected points with {d} coordinates, got {x.shape[1]}.")
    if np.any(x < -DOMAIN_TOLERANCE) or np.any(
        np.abs(x.sum(axis=1) - 1.0) > DOMAIN_TOLERANCE
    ):
        raise ValidationError("Point lies outside the simplex.")
    return np.clip(x, 0.0, None)


def kuhn_stencil(grid: SimplexGrid, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex positions and barycentric weights of the Kuhn simplex holding each point.

    Returns two (P, d) arrays. Weights are nonnegative and sum to one.
    """
    d, m = grid.dimension, grid.resolution
    x = _check_domain(points, d)
    n_points = x.shape[0]
    if d == 1:
        return np.zeros((n_points, 1), dtype=np.int64), np.ones((n_points, 1))

    scaled = m * x
    cumulative = np.cumsum(scaled[:, ::-1], axis=1)[:, ::-1][:, 1:]
    nearest = np.rint(cumulative)
    snap = np.abs(cumulative - nearest) <= SNAP_TOLERANCE * m
    cumulative = np.clip(np.where(snap, nearest, cumulative), 0.0, float(m))

    base = np.clip(np.floor(cumulative), 0, m - 1)
    frac = cumulative - base
    order = np.argsort(-frac, axis=1, kind="stable")
    sorted_frac = np.take_along_axis(frac, order, axis=1)

    weights = np.empty((n_points, d))
    weights[:, 0] = 1.0 - sorted_frac[:, 0]
    weights[:, 1:-1] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
    weights[:, -1] = sorted_frac[:, -1]

    steps = (order[:, :, None] == np.arange(d - 1)[None, None, :]).astype(np.int64)
    offsets = np.concatenate(
        [np.zeros((n_points, 1, d - 1), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1
    )
    vertices = base.astype(np.int64)[:, None, :] + offsets
    padded = np.concatenate(
        [
            np.full((n_points, d, 1), m, dtype=np.int64),
            vertices,
            np.zeros((n_points, d, 1), dtype=np.int64),
        ],
        axis=2,
    )
    multi = padded[:, :, :-1] - padded[:, :, 1:]
    ranks = grid.rank(multi.reshape(-1, d)).reshape(n_points, d)
    return ranks, weights


def stencil(grid: Grid, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation stencil on a simplex grid or a product of simplex grids."""
    if isinstance(grid, SimplexGrid):
        return kuhn_stencil(grid, points)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != grid.dimension:
        raise ValidationError(
            f"Expected points with {grid.dimension} coordinates, got {x.shape[1]}."
        )
    ranks = np.zeros((x.shape[0], 1), dtype=np.int64)
    weights = np.ones((x.shape[0], 1))
    start = 0
    for factor in grid.factors:
        part = x[:, start : start + factor.dimension]
        start += factor.dimension
        f_ranks, f_weights = kuhn_stencil(factor, part)
        ranks = (ranks[:, :, None] * factor.size + f_ranks[:, None, :]).reshape(x.shape[0], -1)
        weights = (weights[:, :, None] * f_weights[:, None, :]).reshape(x.shape[0], -1)
    return ranks, weights


def interpolate_many(table: ValueTable, points: np.ndarray) -> np.ndarray:
    ranks, weights = stencil(table.grid, points)
    return np.sum(table.values[ranks] * weights, axis=1)


def interpolate(table: ValueTable, x: np.ndarray) -> float:
    """Piecewise-affine interpolation of a table at one point of its domain."""
    return float(interpolate_many(table, np.asarray(x, dtype=float)[None, :])[0])
