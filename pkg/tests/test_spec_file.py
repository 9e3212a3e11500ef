import json
from pathlib import Path

import numpy as np
import pytest

from cavvex.dynamics import LinearDynamics, LinearTerminal
from cavvex.errors import SpecValidationError
from cavvex.spec_file import parse_spec

SPECS = Path(__file__).resolve().parents[1] / "specs"


def _minimal(**extra: object) -> dict[str, object]:
    doc: dict[str, object] = {
        "types_k": ["k"],
        "types_l": ["l"],
        "actions_i": ["a"],
        "actions_j": ["b"],
        "payoffs": {"k|l": [[2]]},
    }
    doc.update(extra)
    return doc


def _two_types(**extra: object) -> dict[str, object]:
    doc: dict[str, object] = {
        "types_k": ["k1", "k2"],
        "types_l": ["l"],
        "actions_i": ["T", "B"],
        "actions_j": ["L", "R"],
        "payoffs": {"k1|l": [[1, 0], [0, 0]], "k2|l": [[0, 0], [0, 1]]},
    }
    doc.update(extra)
    return doc


def _errors(doc: object) -> tuple[str, ...]:
    with pytest.raises(SpecValidationError) as excinfo:
        parse_spec(json.dumps(doc))
    return excinfo.value.errors


def test_minimal_spec_uses_defaults() -> None:
    spec = parse_spec(json.dumps(_minimal()))

    assert spec.family.types == (1, 1)
    assert spec.family.payoffs[0, 0].tolist() == [[2.0]]
    assert spec.belief.probs.tolist() == [[1.0]]
    assert spec.evaluation is None
    assert spec.differential is None
    assert spec.config == {}
    assert spec.pair_labels == ["k|l"]


def test_bundled_aumann_maschler_spec_parses() -> None:
    spec = parse_spec((SPECS / "aumann_maschler.json").read_text(encoding="utf-8"))

    assert spec.family.types == (2, 1)
    assert spec.belief.flat.tolist() == [0.5, 0.5]
    assert spec.evaluation is not None
    assert spec.evaluation.stages == 3
    assert spec.differential is not None
    assert spec.differential.mixed_controls
    assert spec.config == {"grid_m": 50, "dt": 0.02, "seed": 0}
    assert spec.pair_labels == ["k1|l", "k2|l"]


def test_belief_must_sum_to_one() -> None:
    errors = _errors(_two_types(belief=[0.75, 0.5]))

    assert errors == ("belief: entries sum to 1.25, not 1",)


def test_belief_must_be_nonnegative() -> None:
    errors = _errors(_two_types(belief=[1.5, -0.5]))

    assert errors == ("belief: entries must be nonnegative",)


def test_nested_belief_is_accepted() -> None:
    spec = parse_spec(json.dumps(_two_types(belief=[[0.25], [0.75]])))

    assert spec.belief.probs.tolist() == [[0.25], [0.75]]


def test_every_problem_is_reported_at_once() -> None:
    doc = _two_types(config={"grid_m": 10, "foo": 1}, belief=[0.75, 0.5])
    doc["payoffs"] = {"k1|l": [[1, 0], [0, 0]], "kx|l": [[0, 0], [0, 1]]}

    errors = _errors(doc)

    assert "payoffs.k2|l: missing matrix" in errors
    assert "payoffs.kx|l: unknown type pair" in errors
    assert "belief: entries sum to 1.25, not 1" in errors
    assert "config.foo: unknown setting" in errors


def test_payoff_shapes_are_checked() -> None:
    doc = _two_types()
    doc["payoffs"] = {"k1|l": [[1, 0]], "k2|l": [[0, 0], [0, 1]]}

    errors = _errors(doc)

    assert errors == ("payoffs.k1|l: expected shape [2, 2], got [1, 2]",)


def test_labels_must_be_unique() -> None:
    errors = _errors(_two_types(types_k=["k", "k"]))

    assert "types_k: labels must be unique" in errors


def test_malformed_json_reports_its_position() -> None:
    with pytest.raises(SpecValidationError) as excinfo:
        parse_spec('{"types_k": [}')

    assert excinfo.value.errors[0].startswith("$: malformed JSON at line 1")


def test_discounted_evaluation() -> None:
    spec = parse_spec(json.dumps(_minimal(evaluation={"kind": "discounted", "lambda": 0.5, "stages": 2})))

    assert spec.evaluation is not None
    assert spec.evaluation.weights == pytest.approx((2 / 3, 1 / 3))


def test_unknown_evaluation_kind_is_reported() -> None:
    errors = _errors(_minimal(evaluation={"kind": "harmonic", "stages": 2}))

    assert errors[0].startswith("evaluation.kind: unknown kind 'harmonic'")


def test_linear_differential_block() -> None:
    differential = {
        "dynamics": {"name": "linear", "params": {"b": [[1]]}},
        "controls_u": [-1, 1],
        "controls_v": [0],
        "x0": [0.5],
        "bounds": {"dynamics": 1, "lipschitz": 0},
        "terminal": {"weights": [1], "offsets": {"k1|l": 0, "k2|l": 1}},
    }

    spec = parse_spec(json.dumps(_two_types(differential=differential)))

    game = spec.differential
    assert game is not None
    assert game.state_dimension == 1
    assert game.x0.reshape(-1).tolist() == [0.5, 0.5]
    assert game.controls_u.shape == (2, 1)
    assert isinstance(game.dynamics, LinearDynamics)
    assert np.array_equal(game.dynamics.a, np.zeros((1, 1)))
    assert isinstance(game.terminal, LinearTerminal)
    assert game.terminal.offsets.tolist() == [[0.0], [1.0]]
    assert game.running is None
    assert not game.mixed_controls


def test_differential_problems_carry_their_paths() -> None:
    differential = {
        "dynamics": {"name": "spiral"},
        "controls_u": [-1, 1],
        "controls_v": [0],
        "x0": [0.0],
    }

    errors = _errors(_two_types(differential=differential))

    assert "differential.bounds: expected an object with 'dynamics' and 'lipschitz'" in errors
    assert any(e.startswith("differential.dynamics.name: expected one of") for e in errors)


def test_dynamics_params_must_be_an_object() -> None:
    differential = {
        "dynamics": {"name": "linear", "params": 5},
        "controls_u": [-1, 1],
        "controls_v": [0],
        "x0": [0.0],
        "bounds": {"dynamics": 1, "lipschitz": 0},
    }

    errors = _errors(_two_types(differential=differential))

    assert "differential.dynamics.params: expected an object, got int" in errors
