import numpy as np
import pytest

from cavvex.errors import LPInfeasibleError, LPUnboundedError, ValidationError
from cavvex.lp import lp_solve


def test_lp_solves_a_small_production_problem() -> None:
    result = lp_solve(
        np.array([1.0, 1.0]),
        np.array([[1.0, 2.0], [3.0, 1.0]]),
        np.array([4.0, 6.0]),
    )

    assert result.objective == pytest.approx(2.8, abs=1e-12)
    assert np.allclose(result.x, [1.6, 1.2], atol=1e-12)
    assert np.allclose(result.duals_ub, [0.4, 0.2], atol=1e-12)
    assert result.slackness_residual <= 1e-12


def test_lp_handles_equalities_and_free_columns() -> None:
    # maximize -x with x free and x >= -3, plus y = 1 - x with y >= 0
    result = lp_solve(
        np.array([-1.0, 0.0]),
        np.array([[-1.0, 0.0]]),
        np.array([3.0]),
        np.array([[1.0, 1.0]]),
        np.array([1.0]),
        free=np.array([True, False]),
    )

    assert result.objective == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(result.x, [-3.0, 4.0], atol=1e-12)


def test_lp_reports_infeasible_and_unbounded_problems() -> None:
    with pytest.raises(LPInfeasibleError):
        lp_solve(np.array([1.0]), np.array([[1.0]]), np.array([-1.0]))
    with pytest.raises(LPUnboundedError):
        lp_solve(np.array([1.0]), np.array([[-1.0]]), np.array([1.0]))


def test_lp_rejects_mismatched_blocks() -> None:
    with pytest.raises(ValidationError):
        lp_solve(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0, 2.0]))


def test_lp_strong_duality_on_random_packing_problems() -> None:
    rng = np.random.default_rng(17)
    for _ in range(30):
        m, n = rng.integers(2, 7, size=2)
        a = rng.uniform(0.1, 1.0, size=(m, n))
        b = rng.uniform(1.0, 2.0, size=m)
        c = rng.uniform(0.0, 1.0, size=n)

        result = lp_solve(c, a, b)

        assert np.all(a @ result.x <= b + 1e-9)
        assert np.all(result.x >= -1e-12)
        assert np.all(result.duals_ub >= -1e-12)
        assert np.all(a.T @ result.duals_ub >= c - 1e-9)
        assert result.objective == pytest.approx(float(result.duals_ub @ b), abs=1e-9)
        assert result.slackness_residual <= 1e-9


def test_lp_is_deterministic() -> None:
    rng = np.random.default_rng(2)
    a = rng.uniform(0.1, 1.0, size=(5, 6))
    b = rng.uniform(1.0, 2.0, size=5)
    c = rng.uniform(0.0, 1.0, size=6)

    first = lp_solve(c, a, b)
    second = lp_solve(c, a, b)

    assert np.array_equal(first.x, second.x)
    assert first.objective == second.objective
    assert first.iterations == second.iterations
