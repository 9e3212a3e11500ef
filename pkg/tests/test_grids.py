import numpy as np
import pytest

from cavvex.errors import GridCapError, ValidationError
from cavvex.grids import (
    ValueTable,
    grid_point_count,
    interpolate,
    interpolate_many,
    product_grid,
    simplex_grid,
)


def _random_simplex_points(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(d), size=n)


def test_simplex_grid_holds_every_composition_in_lexicographic_order() -> None:
    grid = simplex_grid(3, 4)

    assert grid.size == grid_point_count(3, 4) == 15
    assert np.all(grid.indices.sum(axis=1) == 4)
    assert np.allclose(grid.points.sum(axis=1), 1.0)
    rows = [tuple(r) for r in grid.indices]
    assert rows == sorted(rows)
    assert len(set(rows)) == grid.size


def test_rank_inverts_the_canonical_order() -> None:
    grid = simplex_grid(4, 5, shape=(2, 2))

    assert np.array_equal(grid.rank(grid.indices), np.arange(grid.size))
    assert grid.locate(grid.points[7]) == 7


def test_locate_rejects_points_off_the_grid() -> None:
    grid = simplex_grid(2, 4)

    with pytest.raises(ValidationError):
        grid.locate(np.array([0.3, 0.7]))


def test_grid_cap_is_enforced() -> None:
    with pytest.raises(GridCapError):
        simplex_grid(4, 50, cap=1000)


def test_grid_shape_must_factor_the_dimension() -> None:
    with pytest.raises(ValidationError):
        simplex_grid(4, 3, shape=(3, 2))


def test_interpolation_reproduces_grid_values_exactly() -> None:
    rng = np.random.default_rng(3)
    grid = simplex_grid(3, 6)
    table = ValueTable(grid, rng.normal(size=grid.size))

    assert np.array_equal(interpolate_many(table, grid.points), table.values)


def test_interpolation_is_exact_for_affine_functions() -> None:
    rng = np.random.default_rng(5)
    for d in (2, 3, 4):
        grid = simplex_grid(d, 7)
        slope = rng.normal(size=d)
        table = ValueTable(grid, grid.points @ slope)
        points = _random_simplex_points(rng, d, 50)

        assert np.allclose(interpolate_many(table, points), points @ slope, atol=1e-12)


def test_interpolation_stays_within_vertex_values() -> None:
    rng = np.random.default_rng(11)
    grid = simplex_grid(3, 5)
    table = ValueTable(grid, rng.uniform(-1, 1, size=grid.size))
    points = _random_simplex_points(rng, 3, 200)
    values = interpolate_many(table, points)

    assert values.max() <= table.values.max() + 1e-12
    assert values.min() >= table.values.min() - 1e-12


def test_interpolation_rejects_points_outside_the_simplex() -> None:
    grid = simplex_grid(2, 4)
    table = ValueTable(grid, np.zeros(grid.size))

    with pytest.raises(ValidationError):
        interpolate(table, np.array([0.7, 0.7]))
    with pytest.raises(ValidationError):
        interpolate(table, np.array([0.2, 0.3, 0.5]))


def test_product_grid_interpolation_is_exact_for_biaffine_functions() -> None:
    rng = np.random.default_rng(8)
    grid = product_grid(simplex_grid(2, 4), simplex_grid(3, 3))
    a, b = rng.normal(size=2), rng.normal(size=3)

    def f(x: np.ndarray) -> np.ndarray:
        return (x[:, :2] @ a) * (x[:, 2:] @ b) + x[:, 0]

    table = ValueTable(grid, f(grid.points))
    points = np.hstack([_random_simplex_points(rng, 2, 40), _random_simplex_points(rng, 3, 40)])

    assert grid.size == 5 * 10
    assert np.allclose(interpolate_many(table, points), f(points), atol=1e-12)


def test_value_table_checks_its_length() -> None:
    with pytest.raises(ValidationError):
        ValueTable(simplex_grid(2, 3), np.zeros(3))
