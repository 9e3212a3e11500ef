from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class Check:
    """One residual with its tolerance and the location of the worst defect."""

    name: str
    residual: float
    tolerance: float
    witness: dict[str, Any] | None = None

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "witness": _plain(self.witness),
        }


@dataclass(frozen=True)
class VerificationReport:
    subject: str
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


ComparisonStatus = Literal["pass", "hypothesis-failure", "conclusion-failure"]


@dataclass(frozen=True)
class ComparisonReport:
    """Outcome of the ordering harness w1 >= w2 - slack."""

    status: ComparisonStatus
    hypotheses: tuple[Check, ...]
    conclusion: Check

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "hypotheses": [c.to_dict() for c in self.hypotheses],
            "conclusion": self.conclusion.to_dict(),
        }


@dataclass
class RunReport:
    command: str
    inputs_digest: str
    config: dict[str, Any]
    outputs: dict[str, Any] = field(default_factory=dict)
    verification: list[dict[str, Any]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "config": _plain(self.config),
            "outputs": _plain(self.outputs),
            "verification": _plain(self.verification),
            "timings": {k: round(float(v), 6) for k, v in self.timings.items()},
        }


def worst(residuals: np.ndarray) -> tuple[float, int]:
    """Largest entry of a residual array (0 when empty) and its flat position."""
    flat = np.asarray(residuals, dtype=float).reshape(-1)
    if flat.size == 0:
        return 0.0, -1
    idx = int(np.argmax(flat))
    return max(float(flat[idx]), 0.0), idx
