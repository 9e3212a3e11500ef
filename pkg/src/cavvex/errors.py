from __future__ import annotations

from typing import Sequence

import numpy as np

from cavvex.config import ConfigError


class ValidationError(ConfigError):
    """Raised when solver inputs are malformed or inconsistent."""


class SpecValidationError(ValidationError):
    """Raised by the spec-file parser with every problem it found."""

    def __init__(self, errors: Sequence[str]) -> None:
        self.errors = tuple(errors)
        listing = "\n".join(f"  - {message}" for message in self.errors)
        super().__init__(f"Game spec is invalid ({len(self.errors)} problems):\n{listing}")


class GridCapError(ValidationError):
    """Raised when a grid or lattice would exceed the configured point cap."""


class NonConcaveError(ValidationError):
    """Raised when a supergradient is requested for a table that is not concave."""


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class LPError(SolverError):
    pass


class LPInfeasibleError(LPError):
    pass


class LPUnboundedError(LPError):
    pass


class LPIterationLimitError(LPError):
    pass


class NonConvergenceError(SolverError):
    """Raised when the bracketed fixed-point iteration does not certify a solution."""

    def __init__(
        self,
        message: str,
        *,
        upper: np.ndarray | None = None,
        lower: np.ndarray | None = None,
        gap: float | None = None,
        iterations: tuple[int, int] | None = None,
        residuals: dict[str, float] | None = None,
    ) -> None:
        super().__init__(message)
        self.upper = upper
        self.lower = lower
        self.gap = gap
        self.iterations = iterations
        self.residuals = residuals or {}


class HypothesisViolation(RuntimeError):
    """Raised when a game lies outside the hypotheses the solvers rely on."""


class IsaacsViolation(HypothesisViolation):
    def __init__(self, gap: float, point: dict[str, object]) -> None:
        super().__init__(
            f"Isaacs condition fails: upper minus lower Hamiltonian is {gap:.3e} at {point}."
        )
        self.gap = gap
        self.point = point


class CFLViolation(HypothesisViolation):
    def __init__(self, dt: float, dx: float, diffusion: Sequence[float]) -> None:
        total = float(sum(diffusion))
        super().__init__(
            f"CFL condition fails: dt * sum(a) = {dt * total:.6g} exceeds dx = {dx:.6g} "
            f"(dt={dt:.6g}, a={[round(float(a), 12) for a in diffusion]})."
        )
        self.dt = dt
        self.dx = dx
        self.diffusion = tuple(float(a) for a in diffusion)


class DeclaredBoundsViolation(HypothesisViolation):
    """Raised when sampling contradicts a declared bound or Lipschitz constant."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, HypothesisViolation):
        return 4
    if isinstance(exc, SolverError):
        return 3
    if isinstance(exc, ConfigError):
        return 2
    return 1
