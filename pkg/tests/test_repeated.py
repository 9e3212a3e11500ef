import numpy as np
import pytest

from cavvex.beliefs import JointBelief
from cavvex.errors import GridCapError, ValidationError
from cavvex.games import MatrixGameFamily, solve_matrix_game
from cavvex.repeated import (
    Evaluation,
    bayesian_value,
    best_response_value,
    build_extensive,
    extensive_size,
    value_n,
    value_sequence,
)


def _aumann_maschler() -> MatrixGameFamily:
    return MatrixGameFamily(np.array([[[[1.0, 0.0], [0.0, 0.0]]], [[[0.0, 0.0], [0.0, 1.0]]]]))


def _half() -> JointBelief:
    return JointBelief(np.array([[0.5], [0.5]]))


def _random_case(seed: int) -> tuple[MatrixGameFamily, JointBelief]:
    rng = np.random.default_rng(seed)
    family = MatrixGameFamily(rng.uniform(-1, 1, size=(2, 2, 2, 2)))
    probs = rng.dirichlet(np.ones(4)).reshape(2, 2)
    return family, JointBelief(probs)


def test_aumann_maschler_values_decrease_towards_a_quarter() -> None:
    values = value_sequence(_aumann_maschler(), _half(), 4)

    assert len(values) == 4
    assert values[0] == pytest.approx(0.5, abs=1e-8)
    for earlier, later in zip(values, values[1:]):
        assert later <= earlier + 1e-9
    assert all(v >= 0.25 - 1e-8 for v in values)


def test_four_stage_sequence_form_size() -> None:
    form = build_extensive(_aumann_maschler(), _half(), Evaluation.uniform(4))

    assert form.n_sequences_1 == 340
    assert form.n_sequences_2 == 170


@pytest.mark.parametrize("seed", range(20))
def test_one_stage_value_matches_the_bayesian_normal_form(seed: int) -> None:
    family, pi = _random_case(seed)

    result = value_n(family, pi, Evaluation.uniform(1))

    assert result.value == pytest.approx(bayesian_value(family, pi), abs=1e-9)


def test_degenerate_belief_gives_the_stage_value_at_every_horizon() -> None:
    family, _ = _random_case(4)
    pi = JointBelief.point_mass(1, 0, (2, 2))
    expected = solve_matrix_game(family.payoffs[1, 0]).value

    values = value_sequence(family, pi, 2)

    assert values == pytest.approx([expected, expected], abs=1e-8)


def test_optimal_plans_guarantee_the_value() -> None:
    family, pi = _random_case(5)

    result = value_n(family, pi, Evaluation.uniform(2))

    assert best_response_value(result.form, result.plan_1, 1) == pytest.approx(result.value, abs=1e-7)
    assert best_response_value(result.form, result.plan_2, 2) == pytest.approx(result.value, abs=1e-7)


def test_plans_satisfy_the_sequence_constraints() -> None:
    family, pi = _random_case(6)

    result = value_n(family, pi, Evaluation.uniform(2))
    form = result.form

    assert np.allclose(form.e_matrix @ result.plan_1, form.rhs(1), atol=1e-9)
    assert np.allclose(form.f_matrix @ result.plan_2, form.rhs(2), atol=1e-7)


def test_sequence_counts_for_two_stages() -> None:
    form = build_extensive(_aumann_maschler(), _half(), Evaluation.uniform(2))

    assert form.n_sequences_1 == 20
    assert form.n_sequences_2 == 10
    assert extensive_size(_aumann_maschler(), 2) == 32


def test_front_loaded_discounting_reduces_to_one_stage() -> None:
    family, pi = _random_case(7)

    evaluation = Evaluation.discounted(1.0, 3)

    assert evaluation.weights == (1.0, 0.0, 0.0)
    assert value_n(family, pi, evaluation).value == pytest.approx(bayesian_value(family, pi), abs=1e-8)


def test_discounted_weights_are_normalized() -> None:
    evaluation = Evaluation.discounted(0.5, 3)

    assert sum(evaluation.weights) == pytest.approx(1.0)
    assert evaluation.weights[0] == pytest.approx(4 / 7)


def test_evaluation_rejects_weights_that_do_not_sum_to_one() -> None:
    with pytest.raises(ValidationError):
        Evaluation((0.5, 0.4))
    with pytest.raises(ValidationError):
        Evaluation.discounted(0.0, 2)
    with pytest.raises(ValidationError):
        value_sequence(_aumann_maschler(), _half(), 0)


def test_large_horizons_hit_the_size_cap() -> None:
    with pytest.raises(GridCapError):
        build_extensive(_aumann_maschler(), _half(), Evaluation.uniform(10))


def test_belief_shape_must_match_the_family() -> None:
    with pytest.raises(ValidationError):
        bayesian_value(_aumann_maschler(), JointBelief(np.full((2, 2), 0.25)))
