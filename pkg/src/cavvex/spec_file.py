"""JSON game specs: parsing and validation with path-addressed messages.

A spec looks like

    {
      "types_k": ["k1", "k2"], "types_l": ["l"],
      "actions_i": ["T", "B"], "actions_j": ["L", "R"],
      "payoffs": {"k1|l": [[1, 0], [0, 0]], "k2|l": [[0, 0], [0, 1]]},
      "belief": [0.5, 0.5],
      "evaluation": {"kind": "uniform", "stages": 3},
      "differential": {"dynamics": {"name": "payoff-accumulator"}},
      "config": {"grid_m": 50, "dt": 0.02}
    }

`belief` may be flat (row-major over (k, l)) or nested; it defaults to uniform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from cavvex.beliefs import JointBelief
from cavvex.config import SETTING_NAMES
from cavvex.dynamics import (
    BilinearDynamics,
    DifferentialGameSpec,
    Dynamics,
    LinearDynamics,
    LinearRunning,
    LinearTerminal,
    PayoffRunning,
    Running,
    ZeroDynamics,
    repeated_game_embedding,
)
from cavvex.errors import SpecValidationError, ValidationError
from cavvex.games import MatrixGameFamily
from cavvex.repeated import Evaluation

BELIEF_SUM_TOLERANCE = 1e-9
DYNAMICS_NAMES = ("linear", "bilinear", "zero", "payoff-accumulator")


@dataclass(frozen=True, eq=False)
class GameSpecFile:
    labels_k: tuple[str, ...]
    labels_l: tuple[str, ...]
    labels_i: tuple[str, ...]
    labels_j: tuple[str, ...]
    family: MatrixGameFamily
    belief: JointBelief
    evaluation: Evaluation | None = None
    differential: DifferentialGameSpec | None = None
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def pair_labels(self) -> list[str]:
        return [f"{k}|{l}" for k in self.labels_k for l in self.labels_l]


class _Problems:
    """Collects validation messages so one parse reports all of them."""

    def __init__(self) -> None:
        self.messages: list[str] = []

    def add(self, path: str, message: str) -> None:
        self.messages.append(f"{path}: {message}")

    def array(self, path: str, raw: Any, shape: tuple[int, ...] | None = None) -> np.ndarray | None:
        try:
            out = np.array(raw, dtype=float)
        except (TypeError, ValueError):
            self.add(path, "expected a numeric array")
            return None
        if shape is not None and out.shape != shape:
            self.add(path, f"expected shape {list(shape)}, got {list(out.shape)}")
            return None
        if not np.all(np.isfinite(out)):
            self.add(path, "entries must be finite")
            return None
        return out

    def number(self, path: str, raw: Any, *, minimum: float | None = None) -> float | None:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.add(path, f"expected a number, got {raw!r}")
            return None
        value = float(raw)
        if not np.isfinite(value) or (minimum is not None and value < minimum):
            self.add(path, f"value {raw!r} is out of range")
            return None
        return value


def _labels(doc: dict[str, Any], key: str, problems: _Problems) -> tuple[str, ...]:
    raw = doc.get(key)
    if not isinstance(raw, list) or not raw:
        problems.add(key, "expected a nonempty list of labels")
        return ()
    labels = tuple(str(x) for x in raw)
    if len(set(labels)) != len(labels):
        problems.add(key, "labels must be unique")
    if any("|" in label for label in labels):
        problems.add(key, "labels may not contain '|'")
    return labels


def _payoffs(
    doc: dict[str, Any], labels: list[tuple[str, ...]], problems: _Problems
) -> np.ndarray | None:
    ks, ls, is_, js = labels
    raw = doc.get("payoffs")
    if not isinstance(raw, dict):
        problems.add("payoffs", "expected an object keyed 'k|l'")
        return None
    out = np.zeros((len(ks), len(ls), len(is_), len(js)))
    ok = True
    for a, k in enumerate(ks):
        for b, l in enumerate(ls):
            key = f"{k}|{l}"
            if key not in raw:
                problems.add(f"payoffs.{key}", "missing matrix")
                ok = False
                continue
            matrix = problems.array(f"payoffs.{key}", raw[key], (len(is_), len(js)))
            if matrix is None:
                ok = False
            else:
                out[a, b] = matrix
    known = {f"{k}|{l}" for k in ks for l in ls}
    for key in raw:
        if key not in known:
            problems.add(f"payoffs.{key}", "unknown type pair")
            ok = False
    return out if ok else None


def _belief(doc: dict[str, Any], shape: tuple[int, int], problems: _Problems) -> JointBelief | None:
    if "belief" not in doc:
        return JointBelief(np.full(shape, 1.0 / (shape[0] * shape[1])))
    values = problems.array("belief", doc["belief"])
    if values is None:
        return None
    if values.size != shape[0] * shape[1] or values.shape not in ((values.size,), shape):
        problems.add("belief", f"expected {shape[0] * shape[1]} entries in row-major (k, l) order")
        return None
    flat = values.reshape(-1)
    if np.any(flat < 0):
        problems.add("belief", "entries must be nonnegative")
        return None
    total = float(flat.sum())
    if abs(total - 1.0) > BELIEF_SUM_TOLERANCE:
        problems.add("belief", f"entries sum to {total!r}, not 1")
        return None
    return JointBelief.from_flat(flat / total, shape)


def _evaluation(doc: dict[str, Any], problems: _Problems) -> Evaluation | None:
    raw = doc.get("evaluation")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        problems.add("evaluation", "expected an object")
        return None
    kind = raw.get("kind", "weights" if "weights" in raw else "uniform")
    try:
        if kind == "weights":
            weights = problems.array("evaluation.weights", raw.get("weights"))
            return None if weights is None else Evaluation(tuple(weights.reshape(-1)))
        stages = raw.get("stages")
        if isinstance(stages, bool) or not isinstance(stages, int):
            problems.add("evaluation.stages", "expected an integer")
            return None
        if kind == "uniform":
            return Evaluation.uniform(stages)
        if kind == "discounted":
            lam = problems.number("evaluation.lambda", raw.get("lambda"))
            return None if lam is None else Evaluation.discounted(lam, stages)
    except ValidationError as exc:
        problems.add("evaluation", str(exc))
        return None
    problems.add("evaluation.kind", f"unknown kind {kind!r}; use uniform, discounted or weights")
    return None


def _per_pair(
    raw: Any, path: str, shape: tuple[int, ...], pairs: list[tuple[str, str]], problems: _Problems
) -> np.ndarray | None:
    """A value shared by all type pairs, or an object keyed 'k|l'."""
    if isinstance(raw, dict):
        rows = []
        for k, l in pairs:
            key = f"{k}|{l}"
            if key not in raw:
                problems.add(f"{path}.{key}", "missing entry")
                return None
            value = problems.array(f"{path}.{key}", raw[key], shape)
            if value is None:
                return None
            rows.append(value)
        return np.stack(rows)
    value = problems.array(path, raw, shape)
    if value is None:
        return None
    return np.broadcast_to(value, (len(pairs), *shape)).copy()


def _dynamics(block: dict[str, Any], n: int, du: int, dv: int, problems: _Problems) -> Dynamics | None:
    raw = block.get("dynamics")
    name = raw.get("name") if isinstance(raw, dict) else None
    params = raw.get("params", {}) if isinstance(raw, dict) else {}
    if not isinstance(params, dict):
        problems.add("differential.dynamics.params", f"expected an object, got {type(params).__name__}")
        return None
    if name == "linear":
        a = problems.array("differential.dynamics.params.a", params.get("a", np.zeros((n, n))), (n, n))
        b = problems.array("differential.dynamics.params.b", params.get("b", np.zeros((n, du))), (n, du))
        c = problems.array("differential.dynamics.params.c", params.get("c", np.zeros((n, dv))), (n, dv))
        d = problems.array("differential.dynamics.params.d", params.get("d", np.zeros(n)), (n,))
        if a is None or b is None or c is None or d is None:
            return None
        return LinearDynamics(a, b, c, d)
    if name == "bilinear":
        if du != n or dv != n:
            problems.add("differential.dynamics", f"bilinear dynamics need {n}-dimensional controls")
            return None
        alpha = problems.array("differential.dynamics.params.alpha", params.get("alpha", np.zeros(n)), (n,))
        beta = problems.array("differential.dynamics.params.beta", params.get("beta", np.zeros(n)), (n,))
        if alpha is None or beta is None:
            return None
        return BilinearDynamics(alpha, beta)
    if name == "zero":
        return ZeroDynamics(n)
    problems.add("differential.dynamics.name", f"expected one of {list(DYNAMICS_NAMES)}, got {name!r}")
    return None


def _running(
    block: dict[str, Any], n: int, pairs: list[tuple[str, str]], shape: tuple[int, int], family: MatrixGameFamily | None,
    problems: _Problems,
) -> Running | None:
    raw = block.get("running")
    if raw is None:
        return None
    name = raw.get("name") if isinstance(raw, dict) else None
    if name == "payoff":
        if family is None:
            return None
        return PayoffRunning(np.array(family.payoffs))
    if name == "linear":
        weights = _per_pair(raw.get("weights", np.zeros(n)), "differential.running.weights", (n,), pairs, problems)
        offsets = _per_pair(raw.get("offsets", 0.0), "differential.running.offsets", (), pairs, problems)
        if weights is None or offsets is None:
            return None
        return LinearRunning(weights.reshape(*shape, n), offsets.reshape(shape))
    problems.add("differential.running.name", f"expected 'linear' or 'payoff', got {name!r}")
    return None


def _differential(
    doc: dict[str, Any],
    labels: list[tuple[str, ...]],
    family: MatrixGameFamily | None,
    problems: _Problems,
) -> DifferentialGameSpec | None:
    block = doc.get("differential")
    if block is None:
        return None
    if not isinstance(block, dict):
        problems.add("differential", "expected an object")
        return None
    ks, ls = labels[0], labels[1]
    shape = (len(ks), len(ls))
    pairs = [(k, l) for k in ks for l in ls]
    dynamics = block.get("dynamics")
    if isinstance(dynamics, dict) and dynamics.get("name") == "payoff-accumulator":
        if family is None:
            return None
        return repeated_game_embedding(family)

    t0 = problems.number("differential.t0", block.get("t0", 0.0), minimum=0.0)
    if t0 is not None and t0 >= 1.0:
        problems.add("differential.t0", "must lie in [0, 1)")
        t0 = None
    controls: list[np.ndarray | None] = []
    for key in ("controls_u", "controls_v"):
        if key not in block:
            problems.add(f"differential.{key}", "missing control point list")
            controls.append(None)
            continue
        points = problems.array(f"differential.{key}", block[key])
        if points is not None:
            points = points[:, None] if points.ndim == 1 else points
            if points.ndim != 2 or points.shape[0] < 1:
                problems.add(f"differential.{key}", "expected a nonempty list of control points")
                points = None
        controls.append(points)
    x0_raw = block.get("x0")
    if x0_raw is None:
        problems.add("differential.x0", "missing initial state")
        return None
    probe = x0_raw[next(iter(x0_raw))] if isinstance(x0_raw, dict) and x0_raw else x0_raw
    n = int(np.size(probe)) if probe is not None else 0
    x0 = _per_pair(x0_raw, "differential.x0", (n,), pairs, problems)

    bounds = block.get("bounds")
    bound = lipschitz = None
    if not isinstance(bounds, dict):
        problems.add("differential.bounds", "expected an object with 'dynamics' and 'lipschitz'")
    else:
        bound = problems.number("differential.bounds.dynamics", bounds.get("dynamics"), minimum=0.0)
        lipschitz = problems.number("differential.bounds.lipschitz", bounds.get("lipschitz"), minimum=0.0)

    control_u, control_v = controls
    dyn = None
    if control_u is not None and control_v is not None:
        dyn = _dynamics(block, n, control_u.shape[1], control_v.shape[1], problems)
    terminal_raw = block.get("terminal", {})
    if not isinstance(terminal_raw, dict):
        problems.add("differential.terminal", "expected an object with 'weights' and 'offsets'")
        terminal_raw = {}
    weights = _per_pair(terminal_raw.get("weights", np.zeros(n)), "differential.terminal.weights", (n,), pairs, problems)
    offsets = _per_pair(terminal_raw.get("offsets", 0.0), "differential.terminal.offsets", (), pairs, problems)
    running = _running(block, n, pairs, shape, family, problems)
    mixed = block.get("mixed_controls", False)
    if not isinstance(mixed, bool):
        problems.add("differential.mixed_controls", "expected true or false")
        mixed = False
    if (
        t0 is None or x0 is None or control_u is None or control_v is None or dyn is None
        or weights is None or offsets is None or bound is None or lipschitz is None
    ):
        return None
    return DifferentialGameSpec(
        types=shape,
        t0=t0,
        x0=x0.reshape(*shape, n),
        controls_u=control_u,
        controls_v=control_v,
        dynamics=dyn,
        terminal=LinearTerminal(weights.reshape(*shape, n), offsets.reshape(shape)),
        running=running,
        bound=bound,
        lipschitz=lipschitz,
        mixed_controls=mixed,
    )


def _config(doc: dict[str, Any], problems: _Problems) -> dict[str, Any]:
    raw = doc.get("config", {})
    if not isinstance(raw, dict):
        problems.add("config", "expected an object")
        return {}
    for key in raw:
        if key not in SETTING_NAMES:
            problems.add(f"config.{key}", "unknown setting")
    return {k: v for k, v in raw.items() if k in SETTING_NAMES}


def parse_spec(text: str) -> GameSpecFile:
    """Validate a JSON game spec; every problem found is reported in one SpecValidationError."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecValidationError([f"$: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    if not isinstance(doc, dict):
        raise SpecValidationError(["$: expected a JSON object"])

    problems = _Problems()
    labels = [_labels(doc, key, problems) for key in ("types_k", "types_l", "actions_i", "actions_j")]
    if not all(labels):
        raise SpecValidationError(problems.messages)
    shape = (len(labels[0]), len(labels[1]))

    payoffs = _payoffs(doc, labels, problems)
    family = MatrixGameFamily(payoffs) if payoffs is not None else None
    belief = _belief(doc, shape, problems)
    evaluation = _evaluation(doc, problems)
    try:
        differential = _differential(doc, labels, family, problems)
    except ValidationError as exc:
        problems.add("differential", str(exc))
        differential = None
    config = _config(doc, problems)

    if problems.messages or family is None or belief is None:
        raise SpecValidationError(problems.messages)
    return GameSpecFile(
        labels_k=labels[0],
        labels_l=labels[1],
        labels_i=labels[2],
        labels_j=labels[3],
        family=family,
        belief=belief,
        evaluation=evaluation,
        differential=differential,
        config=config,
    )
