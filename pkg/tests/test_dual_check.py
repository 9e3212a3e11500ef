from dataclasses import replace

import numpy as np
import pytest

from cavvex.dual_check import (
    check_dual_solution,
    compare,
    hamiltonian_regularity_probe,
    residual_tolerance,
)
from cavvex.dynamics import (
    DifferentialGameSpec,
    LinearDynamics,
    LinearTerminal,
    MayerSpec,
    reduce_to_mayer,
    repeated_game_embedding,
)
from cavvex.errors import DeclaredBoundsViolation, ValidationError
from cavvex.games import MatrixGameFamily
from cavvex.hji import HJSettings, ValueGrid, solve_value


def _aumann_maschler() -> MayerSpec:
    family = MatrixGameFamily(np.array([[[[1.0, 0.0], [0.0, 0.0]]], [[[0.0, 0.0], [0.0, 1.0]]]]))
    return reduce_to_mayer(repeated_game_embedding(family))


def _steered(*, drift: float = 0.0, lipschitz: float = 1.0) -> MayerSpec:
    spec = DifferentialGameSpec(
        types=(1, 1),
        t0=0.0,
        x0=np.zeros((1, 1, 1)),
        controls_u=np.array([-1.0, 1.0]),
        controls_v=np.array([0.0]),
        dynamics=LinearDynamics(
            a=np.full((1, 1), drift), b=np.ones((1, 1)), c=np.zeros((1, 1)), d=np.zeros(1)
        ),
        terminal=LinearTerminal(np.ones((1, 1, 1)), np.zeros((1, 1))),
        bound=3.0,
        lipschitz=lipschitz,
    )
    return reduce_to_mayer(spec)


def _shifted(grid: ValueGrid, amount: float) -> ValueGrid:
    return replace(grid, values=grid.values + amount)


def test_complete_information_value_passes_verification() -> None:
    spec = _steered()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=1))

    report = check_dual_solution(grid, spec)

    assert report.passed, report.failures()
    assert report.check("terminal").residual == 0.0
    assert residual_tolerance(grid) == pytest.approx(2e-3)


def test_repeated_game_value_passes_verification() -> None:
    spec = _aumann_maschler()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=10))

    report = check_dual_solution(grid, spec, seed=1)

    assert report.passed, report.failures()
    assert [c.name for c in report.checks] == [
        "k_concavity",
        "l_convexity",
        "terminal",
        "k_conjugate_subsolution",
        "l_conjugate_supersolution",
    ]


def test_corrupted_terminal_slice_is_reported() -> None:
    spec = _steered()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=1))
    values = grid.values.copy()
    values[-1, 3, 0] += 1e-3

    report = check_dual_solution(replace(grid, values=values), spec)

    terminal = report.check("terminal")
    assert not terminal.passed
    assert terminal.residual == pytest.approx(1e-3)
    assert terminal.witness is not None
    assert terminal.witness["t"] == 1.0
    assert terminal.witness["x"] == pytest.approx(grid.lattice.nodes[3].tolist())


def test_partial_grids_cannot_be_verified() -> None:
    spec = _steered()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=1, store_every=2))

    with pytest.raises(ValidationError):
        check_dual_solution(grid, spec)


def test_comparison_of_a_grid_with_itself_passes() -> None:
    spec = _aumann_maschler()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=6))

    outcome = compare(grid, grid, spec)

    assert outcome.status == "pass"
    assert outcome.conclusion.residual == 0.0


def test_comparison_accepts_a_lower_shifted_grid() -> None:
    spec = _steered()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=1))

    outcome = compare(grid, _shifted(grid, -0.1), spec)

    assert outcome.passed
    assert all(h.passed for h in outcome.hypotheses)


def test_terminal_order_violation_is_a_hypothesis_failure() -> None:
    spec = _steered()
    grid = solve_value(spec, HJSettings(dt=0.1, grid_m=1))

    outcome = compare(_shifted(grid, -0.1), grid, spec)

    assert outcome.status == "hypothesis-failure"
    ordering = next(h for h in outcome.hypotheses if h.name == "terminal_ordering")
    assert ordering.residual == pytest.approx(0.1)
    assert not outcome.conclusion.passed


def test_comparison_needs_matching_lattices() -> None:
    spec = _steered()
    coarse = solve_value(spec, HJSettings(dt=0.1, grid_m=1))
    fine = solve_value(spec, HJSettings(dt=0.05, grid_m=1))

    with pytest.raises(ValidationError):
        compare(coarse, fine, spec)


def test_regularity_probe_accepts_state_free_hamiltonians() -> None:
    assert hamiltonian_regularity_probe(_aumann_maschler(), samples=500) == 0.0
    assert hamiltonian_regularity_probe(_steered(), samples=500) == 0.0


def test_regularity_probe_rejects_an_understated_constant() -> None:
    with pytest.raises(DeclaredBoundsViolation):
        hamiltonian_regularity_probe(_steered(drift=2.0, lipschitz=0.5), samples=500)
