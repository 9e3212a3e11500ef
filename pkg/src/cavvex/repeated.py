"""Exact n-stage values of the repeated game with correlated private types.

A type pair (k, l) is drawn from pi; player 1 learns k, player 2 learns l,
and at every stage both choose actions simultaneously, with past actions
publicly observed. The game is solved through the sequence form: each player's
strategy is a realization plan over (own type, public history, action)
sequences, and the value is one LP.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from cavvex.beliefs import JointBelief
from cavvex.errors import GridCapError, ValidationError
from cavvex.games import MatrixGameFamily, solve_matrix_game
from cavvex.lp import PIVOT_TOLERANCE, lp_solve

EXTENSIVE_SIZE_CAP = 1_000_000
EVALUATION_TOLERANCE = 1e-12

History = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Evaluation:
    """Stage weights theta_1..theta_n."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("An evaluation needs at least one stage weight.")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("Stage weights must be finite and nonnegative.")
        if abs(float(w.sum()) - 1.0) > EVALUATION_TOLERANCE:
            raise ValidationError(f"Stage weights sum to {float(w.sum())!r}, not 1.")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def stages(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, n: int) -> Evaluation:
        if n < 1:
            raise ValidationError("The number of stages must be at least 1.")
        return cls(tuple([1.0 / n] * n))

    @classmethod
    def discounted(cls, lam: float, n: int) -> Evaluation:
        """theta_m proportional to lam (1 - lam)^(m - 1), truncated to n stages."""
        if not 0.0 < lam <= 1.0:
            raise ValidationError("The discount factor must lie in (0, 1].")
        if n < 1:
            raise ValidationError("The number of stages must be at least 1.")
        raw = lam * (1.0 - lam) ** np.arange(n)
        return cls(tuple(float(x) for x in raw / raw.sum()))


@dataclass(frozen=True)
class Infoset:
    type_index: int
    history: History
    parent: int
    sequences: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ExtensiveForm:
    """Sequence-form data for both players.

    Sequence 0 is each player's empty sequence. Constraint rows are the root
    (mass 1) followed by one row per information set (children sum to parent).
    """

    family: MatrixGameFamily
    belief: JointBelief
    evaluation: Evaluation
    infosets_1: tuple[Infoset, ...]
    infosets_2: tuple[Infoset, ...]
    e_matrix: np.ndarray
    f_matrix: np.ndarray
    payoff: np.ndarray

    @property
    def n_sequences_1(self) -> int:
        return int(self.e_matrix.shape[1]) - 1

    @property
    def n_sequences_2(self) -> int:
        return int(self.f_matrix.shape[1]) - 1

    def rhs(self, player: int) -> np.ndarray:
        rows = (self.e_matrix if player == 1 else self.f_matrix).shape[0]
        out = np.zeros(rows)
        out[0] = 1.0
        return out


def _histories(n_i: int, n_j: int, length: int) -> list[History]:
    pairs = list(product(range(n_i), range(n_j)))
    return [tuple(h) for h in product(pairs, repeat=length)]


def _player_tree(
    n_types: int, n_actions: int, stages: list[list[History]], own: int
) -> tuple[tuple[Infoset, ...], dict[tuple[int, History, int], int], np.ndarray]:
    sequence_of: dict[tuple[int, History, int], int] = {}
    infosets: list[Infoset] = []
    counter = 1
    for histories in stages:
        for t in range(n_types):
            for h in histories:
                parent = 0 if not h else sequence_of[(t, h[:-1], h[-1][own])]
                seqs = []
                for a in range(n_actions):
                    sequence_of[(t, h, a)] = counter
                    seqs.append(counter)
                    counter += 1
                infosets.append(Infoset(t, h, parent, tuple(seqs)))
    constraints = np.zeros((1 + len(infosets), counter))
    constraints[0, 0] = 1.0
    for row, infoset in enumerate(infosets, start=1):
        constraints[row, infoset.parent] = -1.0
        constraints[row, list(infoset.sequences)] = 1.0
    return tuple(infosets), sequence_of, constraints


def extensive_size(family: MatrixGameFamily, stages: int) -> int:
    n_k, n_l = family.types
    n_i, n_j = family.actions
    return (n_i**stages) * (n_j**stages) * n_k * n_l


def build_extensive(
    family: MatrixGameFamily, pi: JointBelief, evaluation: Evaluation
) -> ExtensiveForm:
    if pi.shape != family.types:
        raise ValidationError(f"Belief shape {pi.shape} does not match family types {family.types}.")
    n = evaluation.stages
    size = extensive_size(family, n)
    if size > EXTENSIVE_SIZE_CAP:
        raise GridCapError(
            f"The {n}-stage game has size {size}, above the cap of {EXTENSIVE_SIZE_CAP}."
        )
    n_k, n_l = family.types
    n_i, n_j = family.actions
    stages = [_histories(n_i, n_j, t) for t in range(n)]
    infosets_1, seq_1, e_matrix = _player_tree(n_k, n_i, stages, own=0)
    infosets_2, seq_2, f_matrix = _player_tree(n_l, n_j, stages, own=1)

    payoff = np.zeros((e_matrix.shape[1], f_matrix.shape[1]))
    probs, theta, games = pi.probs, evaluation.weights, family.payoffs
    for t, histories in enumerate(stages):
        for k, l in zip(*np.nonzero(probs)):
            weight = probs[k, l] * theta[t]
            if weight == 0.0:
                continue
            block = weight * games[k, l]
            for h in histories:
                rows = [seq_1[(int(k), h, i)] for i in range(n_i)]
                cols = [seq_2[(int(l), h, j)] for j in range(n_j)]
                payoff[np.ix_(rows, cols)] += block
    return ExtensiveForm(
        family=family,
        belief=pi,
        evaluation=evaluation,
        infosets_1=infosets_1,
        infosets_2=infosets_2,
        e_matrix=e_matrix,
        f_matrix=f_matrix,
        payoff=payoff,
    )


@dataclass(frozen=True, eq=False)
class RepeatedValue:
    value: float
    plan_1: np.ndarray
    plan_2: np.ndarray
    form: ExtensiveForm


def solve_extensive(form: ExtensiveForm, *, tol: float = PIVOT_TOLERANCE) -> RepeatedValue:
    """max_x min_y x'Ay over realization plans, as max f'q s.t. F'q <= A'x, Ex = e."""
    a = form.payoff
    n1 = a.shape[0]
    n_q = form.f_matrix.shape[0]
    a_ub = np.hstack([-a.T, form.f_matrix.T])
    a_eq = np.hstack([form.e_matrix, np.zeros((form.e_matrix.shape[0], n_q))])
    c = np.concatenate([np.zeros(n1), form.rhs(2)])
    free = np.concatenate([np.zeros(n1, dtype=bool), np.ones(n_q, dtype=bool)])
    result = lp_solve(c, a_ub, np.zeros(a.shape[1]), a_eq, form.rhs(1), free=free, tol=tol)
    return RepeatedValue(
        value=result.objective,
        plan_1=np.clip(result.x[:n1], 0.0, None),
        plan_2=np.clip(result.duals_ub, 0.0, None),
        form=form,
    )


def value_n(
    family: MatrixGameFamily,
    pi: JointBelief,
    evaluation: Evaluation,
    *,
    tol: float = PIVOT_TOLERANCE,
) -> RepeatedValue:
    return solve_extensive(build_extensive(family, pi, evaluation), tol=tol)


def value_sequence(
    family: MatrixGameFamily, pi: JointBelief, n_max: int, *, tol: float = PIVOT_TOLERANCE
) -> list[float]:
    """[v_1, ..., v_n_max] under uniform stage weights."""
    if n_max < 1:
        raise ValidationError("n_max must be at least 1.")
    return [value_n(family, pi, Evaluation.uniform(n), tol=tol).value for n in range(1, n_max + 1)]


def best_response_value(form: ExtensiveForm, plan: np.ndarray, player: int) -> float:
    """Payoff of the opponent's exact best reply to `plan`, found by backward induction.

    For player 1 this is the plan's guaranteed payoff (the opponent minimizes);
    for player 2 it is the largest payoff player 1 can extract.
    """
    if player == 1:
        gains = form.payoff.T @ np.asarray(plan, dtype=float)
        infosets, pick = form.infosets_2, np.min
    elif player == 2:
        gains = form.payoff @ np.asarray(plan, dtype=float)
        infosets, pick = form.infosets_1, np.max
    else:
        raise ValidationError(f"Player must be 1 or 2, got {player}.")
    values = gains.copy()
    for infoset in reversed(infosets):
        values[infoset.parent] += pick(values[list(infoset.sequences)])
    return float(values[0])


def bayesian_value(family: MatrixGameFamily, pi: JointBelief) -> float:
    """One-shot value from the normal form over type-contingent pure actions."""
    if pi.shape != family.types:
        raise ValidationError(f"Belief shape {pi.shape} does not match family types {family.types}.")
    n_k, n_l = family.types
    n_i, n_j = family.actions
    rows = np.array(list(product(range(n_i), repeat=n_k)), dtype=np.int64)
    cols = np.array(list(product(range(n_j), repeat=n_l)), dtype=np.int64)
    matrix = np.zeros((rows.shape[0], cols.shape[0]))
    for k in range(n_k):
        for l in range(n_l):
            if pi.probs[k, l] > 0:
                matrix += pi.probs[k, l] * family.payoffs[k, l][np.ix_(rows[:, k], cols[:, l])]
    return solve_matrix_game(matrix).value
