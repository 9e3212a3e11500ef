import numpy as np
import pytest

from cavvex.dynamics import (
    DifferentialGameSpec,
    LinearDynamics,
    LinearRunning,
    LinearTerminal,
    bolza_payoff,
    check_declared_bounds,
    mayer_payoff,
    reduce_to_mayer,
    repeated_game_embedding,
)
from cavvex.errors import DeclaredBoundsViolation, ValidationError
from cavvex.games import MatrixGameFamily


def _aumann_maschler() -> MatrixGameFamily:
    return MatrixGameFamily(np.array([[[[1.0, 0.0], [0.0, 0.0]]], [[[0.0, 0.0], [0.0, 1.0]]]]))


def _pursuit(running: LinearRunning | None = None, *, d: float = 0.0, bound: float = 3.0) -> DifferentialGameSpec:
    return DifferentialGameSpec(
        types=(2, 1),
        t0=0.0,
        x0=np.array([[[0.5]], [[-0.25]]]),
        controls_u=np.array([-1.0, 1.0]),
        controls_v=np.array([-1.0, 1.0]),
        dynamics=LinearDynamics(
            a=np.zeros((1, 1)), b=np.ones((1, 1)), c=-np.ones((1, 1)), d=np.array([d])
        ),
        terminal=LinearTerminal(np.array([[[1.0]], [[-2.0]]]), np.array([[0.5], [0.0]])),
        running=running,
        bound=bound,
        lipschitz=3.0,
    )


def test_embedding_has_one_accumulator_per_type_pair() -> None:
    mayer = reduce_to_mayer(repeated_game_embedding(_aumann_maschler()))

    assert mayer.dimension == 2
    assert mayer.mixed_controls
    assert mayer.lipschitz == 0.0
    phi = mayer.phi(0.0, mayer.z)
    assert phi.shape == (1, 2, 2, 2)
    assert phi[0, 0, 0, 0] == 1.0
    assert phi[0, 1, 1, 1] == 1.0
    assert np.all(phi[0, 0, 0, 1:] == 0.0)
    payoff = mayer.payoff(np.array([0.3, -0.7]))
    assert payoff[0, :, 0].tolist() == pytest.approx([0.3, -0.7])


def test_mayer_reduction_reproduces_the_average_stage_payoff() -> None:
    spec = repeated_game_embedding(_aumann_maschler())
    mayer = reduce_to_mayer(spec)
    dt = 0.25
    u = np.array([0, 1, 0, 1])
    v = np.array([0, 0, 1, 1])

    for k in range(2):
        expected = float(np.mean(_aumann_maschler().payoffs[k, 0][u, v]))
        assert bolza_payoff(spec, k, 0, u, v, dt) == pytest.approx(expected)
        assert mayer_payoff(mayer, k, 0, u, v, dt) == pytest.approx(expected)


def test_mayer_reduction_matches_terminal_only_games_exactly() -> None:
    spec = _pursuit()
    mayer = reduce_to_mayer(spec)
    rng = np.random.default_rng(0)
    dt = 0.1

    for _ in range(5):
        u = rng.integers(0, 2, size=10)
        v = rng.integers(0, 2, size=10)
        for k in range(2):
            assert mayer_payoff(mayer, k, 0, u, v, dt) == pytest.approx(
                bolza_payoff(spec, k, 0, u, v, dt), abs=1e-12
            )


def test_running_payoff_quadrature_agrees_to_first_order() -> None:
    running = LinearRunning(np.array([[[1.0]], [[0.5]]]), np.array([[0.0], [1.0]]))
    spec = _pursuit(running)
    mayer = reduce_to_mayer(spec)
    dt = 0.05
    u = np.zeros(20, dtype=np.int64)
    v = np.ones(20, dtype=np.int64)

    for k in range(2):
        gap = abs(mayer_payoff(mayer, k, 0, u, v, dt) - bolza_payoff(spec, k, 0, u, v, dt))
        assert gap <= 2 * dt


def _random_running_spec(seed: int) -> tuple[DifferentialGameSpec, float]:
    rng = np.random.default_rng(seed)
    b, c, d = rng.uniform(-1, 1, size=3)
    weights = rng.uniform(-1, 1, size=(2, 2, 1))
    spec = DifferentialGameSpec(
        types=(2, 2),
        t0=0.0,
        x0=rng.uniform(-1, 1, size=(2, 2, 1)),
        controls_u=np.array([-1.0, 1.0]),
        controls_v=np.array([-1.0, 1.0]),
        dynamics=LinearDynamics(a=np.zeros((1, 1)), b=np.full((1, 1), b), c=np.full((1, 1), c), d=np.array([d])),
        terminal=LinearTerminal(rng.uniform(-1, 1, size=(2, 2, 1)), rng.uniform(-1, 1, size=(2, 2))),
        running=LinearRunning(weights, rng.uniform(-1, 1, size=(2, 2))),
        bound=4.0,
        lipschitz=4.0,
    )
    constant = float(np.max(np.abs(weights)) * (abs(b) + abs(c) + abs(d)))
    return spec, constant


@pytest.mark.parametrize("seed", range(5))
def test_bolza_and_mayer_payoffs_agree_within_first_order(seed: int) -> None:
    spec, constant = _random_running_spec(seed)
    mayer = reduce_to_mayer(spec)
    rng = np.random.default_rng(100 + seed)
    dt = 0.05

    for _ in range(20):
        u = rng.integers(0, 2, size=20)
        v = rng.integers(0, 2, size=20)
        for k in range(2):
            for l in range(2):
                gap = abs(mayer_payoff(mayer, k, l, u, v, dt) - bolza_payoff(spec, k, l, u, v, dt))
                assert gap <= 2 * constant * dt + 1e-12


def test_reduction_scales_the_declared_constants() -> None:
    spec = _pursuit(LinearRunning(np.zeros((2, 1, 1)), np.zeros((2, 1))))

    mayer = reduce_to_mayer(spec)

    assert mayer.dimension == 4
    assert mayer.z.tolist() == [0.0, 0.5, 0.0, -0.25]
    assert mayer.bound == pytest.approx(2.0 * 3.0)


def test_declared_bounds_accept_consistent_constants() -> None:
    sampled = check_declared_bounds(repeated_game_embedding(_aumann_maschler()))

    assert sampled["bound"] <= 1.0
    assert sampled["lipschitz"] == 0.0


def test_declared_bounds_reject_an_understated_bound() -> None:
    with pytest.raises(DeclaredBoundsViolation):
        check_declared_bounds(_pursuit(d=5.0, bound=1.0))


def test_control_sequences_must_cover_the_horizon() -> None:
    spec = _pursuit()

    with pytest.raises(ValidationError):
        bolza_payoff(spec, 0, 0, np.zeros(3), np.zeros(3), 0.1)
    with pytest.raises(ValidationError):
        bolza_payoff(spec, 0, 0, np.zeros(3), np.zeros(3), 0.3)


def test_spec_rejects_a_misshapen_initial_state() -> None:
    with pytest.raises(ValidationError):
        DifferentialGameSpec(
            types=(2, 1),
            t0=0.0,
            x0=np.zeros((1, 1, 1)),
            controls_u=np.array([0.0]),
            controls_v=np.array([0.0]),
            dynamics=LinearDynamics(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1)),
            terminal=LinearTerminal(np.zeros((2, 1, 1)), np.zeros((2, 1))),
        )
