from cavvex.config import ConfigError
from cavvex.errors import (
    CFLViolation,
    GridCapError,
    IsaacsViolation,
    LPInfeasibleError,
    NonConvergenceError,
    SpecValidationError,
    exit_code_for,
)


def test_exit_codes_follow_the_error_families() -> None:
    assert exit_code_for(ConfigError("bad")) == 2
    assert exit_code_for(GridCapError("too many points")) == 2
    assert exit_code_for(SpecValidationError(["belief: entries must be nonnegative"])) == 2
    assert exit_code_for(LPInfeasibleError("no feasible point")) == 3
    assert exit_code_for(NonConvergenceError("still moving")) == 3
    assert exit_code_for(IsaacsViolation(0.5, {"t": 0.0})) == 4
    assert exit_code_for(CFLViolation(0.1, 0.01, [1.0])) == 4
    assert exit_code_for(KeyError("other")) == 1


def test_spec_validation_error_lists_every_problem() -> None:
    exc = SpecValidationError(["payoffs.k2|l: missing matrix", "config.foo: unknown setting"])

    message = str(exc)

    assert exc.errors == ("payoffs.k2|l: missing matrix", "config.foo: unknown setting")
    assert "(2 problems)" in message
    assert "  - config.foo: unknown setting" in message


def test_cfl_violation_keeps_its_numbers() -> None:
    exc = CFLViolation(0.1, 0.05, [1.0, 0.5])

    assert exc.dt == 0.1
    assert exc.dx == 0.05
    assert exc.diffusion == (1.0, 0.5)
    assert "exceeds dx = 0.05" in str(exc)
