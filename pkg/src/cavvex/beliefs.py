from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from cavvex.errors import ValidationError

BELIEF_TOLERANCE = 1e-12

Side = Literal["K", "L"]


@dataclass(frozen=True, eq=False)
class JointBelief:
    """A probability on K x L stored as a |K| x |L| matrix."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2 or min(probs.shape) < 1:
            raise ValidationError(f"Joint belief must be a nonempty matrix, got shape {probs.shape}.")
        if not np.all(np.isfinite(probs)) or np.any(probs < -BELIEF_TOLERANCE):
            raise ValidationError("Joint belief entries must be finite and nonnegative.")
        total = float(probs.sum())
        if abs(total - 1.0) > BELIEF_TOLERANCE:
            raise ValidationError(f"Joint belief entries sum to {total!r}, not 1.")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.probs.shape[0]), int(self.probs.shape[1]))

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    @classmethod
    def from_flat(cls, values: np.ndarray, shape: tuple[int, int]) -> JointBelief:
        flat = np.asarray(values, dtype=float).reshape(-1)
        if flat.shape[0] != shape[0] * shape[1]:
            raise ValidationError(
                f"Belief has {flat.shape[0]} entries, expected {shape[0] * shape[1]}."
            )
        return cls(flat.reshape(shape))

    @classmethod
    def point_mass(cls, k: int, l: int, shape: tuple[int, int]) -> JointBelief:
        probs = np.zeros(shape)
        probs[k, l] = 1.0
        return cls(probs)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Marginal on one side and conditional rows on the other.

    For side "K" the conditionals are Q(l|k) with shape (|K|, |L|); for side
    "L" they are P(k|l) with shape (|L|, |K|).
    """

    marginal: np.ndarray
    conditionals: np.ndarray
    side: Side = "K"


def conditional_rows(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row sums and row-normalized weights; zero rows become uniform.

    Works on any array whose last two axes are (marginal side, other side).
    """
    marginal = weights.sum(axis=-1)
    width = weights.shape[-1]
    safe = np.where(marginal > 0, marginal, 1.0)[..., None]
    rows = np.where(marginal[..., None] > 0, weights / safe, 1.0 / width)
    return marginal, rows


def decompose_K(pi: JointBelief) -> Decomposition:
    marginal, rows = conditional_rows(pi.probs)
    return Decomposition(marginal=marginal, conditionals=rows, side="K")


def decompose_L(pi: JointBelief) -> Decomposition:
    marginal, rows = conditional_rows(pi.probs.T)
    return Decomposition(marginal=marginal, conditionals=rows, side="L")


def compose(marginal: np.ndarray, conditionals: np.ndarray, side: Side = "K") -> JointBelief:
    p = np.asarray(marginal, dtype=float).reshape(-1)
    rows = np.asarray(conditionals, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != p.shape[0]:
        raise ValidationError(
            f"Marginal of length {p.shape[0]} does not match conditionals of shape {rows.shape}."
        )
    if np.any(np.abs(rows.sum(axis=1) - 1.0) > BELIEF_TOLERANCE) or np.any(rows < 0):
        raise ValidationError("Conditional rows must be probability vectors.")
    joint = p[:, None] * rows
    return JointBelief(joint if side == "K" else joint.T)
