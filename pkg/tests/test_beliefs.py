import numpy as np
import pytest

from cavvex.beliefs import (
    JointBelief,
    compose,
    conditional_rows,
    decompose_K,
    decompose_L,
)
from cavvex.errors import ValidationError


def test_joint_belief_rejects_invalid_probabilities() -> None:
    with pytest.raises(ValidationError):
        JointBelief(np.array([[0.5, 0.6]]))
    with pytest.raises(ValidationError):
        JointBelief(np.array([[1.2, -0.2]]))
    with pytest.raises(ValidationError):
        JointBelief(np.array([0.5, 0.5]))


def test_decompositions_recover_the_joint_belief() -> None:
    rng = np.random.default_rng(0)
    pi = JointBelief(rng.dirichlet(np.ones(6)).reshape(2, 3))

    by_k = decompose_K(pi)
    by_l = decompose_L(pi)

    assert np.allclose(by_k.marginal, pi.probs.sum(axis=1))
    assert np.allclose(by_k.conditionals.sum(axis=1), 1.0)
    assert by_l.conditionals.shape == (3, 2)
    assert np.allclose(compose(by_k.marginal, by_k.conditionals, by_k.side).probs, pi.probs, atol=1e-15)
    assert np.allclose(compose(by_l.marginal, by_l.conditionals, by_l.side).probs, pi.probs, atol=1e-15)


def test_zero_marginal_rows_get_uniform_conditionals() -> None:
    marginal, rows = conditional_rows(np.array([[0.0, 0.0, 0.0], [0.2, 0.3, 0.5]]))

    assert np.allclose(marginal, [0.0, 1.0])
    assert np.allclose(rows[0], 1.0 / 3.0)
    assert np.allclose(rows[1], [0.2, 0.3, 0.5])


def test_point_mass_and_independent_composition() -> None:
    delta = JointBelief.point_mass(1, 0, (2, 2))
    assert delta.probs[1, 0] == 1.0
    assert delta.probs.sum() == 1.0

    p = np.array([0.25, 0.75])
    q = np.array([0.4, 0.6])
    product = compose(p, np.tile(q, (2, 1)))
    assert np.allclose(product.probs, np.outer(p, q))

    flipped = compose(q, np.tile(p, (2, 1)), side="L")
    assert np.allclose(flipped.probs, np.outer(p, q))


def test_compose_rejects_non_stochastic_conditionals() -> None:
    with pytest.raises(ValidationError):
        compose(np.array([0.5, 0.5]), np.array([[0.5, 0.6], [0.5, 0.5]]))
