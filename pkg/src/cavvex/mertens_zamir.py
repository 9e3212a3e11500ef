"""Bracketed fixed-point solver for the Mertens-Zamir system.

The system reads

    w = Cav_K min(u, w)        w = Vex_L max(u, w)

with u the non-revealing value. One step applies the first map and then the
second. Both are monotone, so iterating from the constant max|G| gives a
nonincreasing sequence and iterating from -max|G| a nondecreasing one; the
final gap between the two limits certifies the solution.

On a finite grid the two equations need not share a solution once both
players hold private information. The brackets can then close on a limit
that solves neither equation, so the settled limit is checked against both
equations and both fiber shapes before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol

import numpy as np

from cavvex.config import SolverSettings
from cavvex.convex import (
    FiberProjector,
    concave_envelope_rows,
    convex_envelope_rows,
    extreme_mask_rows,
    is_extreme,
)
from cavvex.errors import NonConvergenceError, ValidationError
from cavvex.games import MatrixGameFamily, nonrevealing_table, nonrevealing_values
from cavvex.grids import (
    DEFAULT_GRID_POINT_CAP,
    ProductGrid,
    SimplexGrid,
    ValueTable,
    product_grid,
    simplex_grid,
)
from cavvex.lp import PIVOT_TOLERANCE
from cavvex.report import Check, VerificationReport, worst

UNIQUE_ARGMAX_MARGIN = 1e-9


@dataclass(frozen=True)
class MZConfig:
    grid_m: int = 20
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    bracket_gap: float = 1e-6
    lp_tol: float = PIVOT_TOLERANCE
    grid_point_cap: int = DEFAULT_GRID_POINT_CAP
    residual_tolerance: float = 1e-6
    shape_tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if self.grid_m < 1:
            raise ValidationError("grid_m must be at least 1.")
        tolerances = (self.tolerance, self.bracket_gap, self.lp_tol, self.residual_tolerance, self.shape_tolerance)
        if min(tolerances) <= 0:
            raise ValidationError("Tolerances must be positive.")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1.")

    @classmethod
    def from_settings(cls, settings: SolverSettings) -> MZConfig:
        return cls(
            grid_m=settings.grid_m,
            tolerance=settings.tol_mz,
            max_iterations=settings.max_iterations,
            bracket_gap=settings.bracket_gap,
            lp_tol=settings.tol_lp,
            grid_point_cap=settings.grid_point_cap,
        )


class SplitOperator(Protocol):
    def cav_part(self, values: np.ndarray) -> np.ndarray: ...

    def vex_part(self, values: np.ndarray) -> np.ndarray: ...

    def shape_defects(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def __call__(self, values: np.ndarray) -> np.ndarray: ...


class MZOperator:
    """One Cav_K-then-Vex_L sweep on a joint-belief grid.

    Fiber functions of u and w are both read through the grid interpolation,
    and the pointwise min/max is taken on the fiber before the envelope.
    """

    def __init__(
        self,
        family: MatrixGameFamily,
        grid: SimplexGrid,
        u: ValueTable | None = None,
        *,
        lp_tol: float = PIVOT_TOLERANCE,
    ) -> None:
        if grid.shape != family.types:
            raise ValidationError(f"Grid shape {grid.shape} does not match family types {family.types}.")
        self.family = family
        self.grid = grid
        self.u = u if u is not None else nonrevealing_table(family, grid)
        self.lp_tol = lp_tol
        self.k_fibers = FiberProjector(grid, "K")
        self.l_fibers = FiberProjector(grid, "L")
        self.u_on_k = self.k_fibers.restrict(self.u.values)
        self.u_on_l = self.l_fibers.restrict(self.u.values)

    def cav_part(self, values: np.ndarray) -> np.ndarray:
        fibers = np.minimum(self.u_on_k, self.k_fibers.restrict(values))
        env = concave_envelope_rows(self.k_fibers.fiber_grid, fibers, tol=self.lp_tol)
        return self.k_fibers.read_back(env)

    def vex_part(self, values: np.ndarray) -> np.ndarray:
        fibers = np.maximum(self.u_on_l, self.l_fibers.restrict(values))
        env = convex_envelope_rows(self.l_fibers.fiber_grid, fibers, tol=self.lp_tol)
        return self.l_fibers.read_back(env)

    def shape_defects(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise gaps to the K-fiber concave and L-fiber convex envelopes."""
        kf, lf = self.k_fibers, self.l_fibers
        k_env = concave_envelope_rows(kf.fiber_grid, kf.restrict(values), tol=self.lp_tol)
        l_env = convex_envelope_rows(lf.fiber_grid, lf.restrict(values), tol=self.lp_tol)
        return kf.read_back(k_env) - values, values - lf.read_back(l_env)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.vex_part(self.cav_part(values))


class IndependentMZOperator:
    """The same sweep on Delta(K) x Delta(L): Cav along p for fixed q, Vex along q for fixed p."""

    def __init__(
        self,
        family: MatrixGameFamily,
        grid: ProductGrid,
        *,
        lp_tol: float = PIVOT_TOLERANCE,
    ) -> None:
        k_grid, l_grid = grid.factors
        if (k_grid.dimension, l_grid.dimension) != family.types:
            raise ValidationError("Product grid factors do not match the family types.")
        self.family = family
        self.grid = grid
        self.k_grid, self.l_grid = k_grid, l_grid
        self.lp_tol = lp_tol
        joint = k_grid.points[:, None, :, None] * l_grid.points[None, :, None, :]
        u = nonrevealing_values(family, joint.reshape(-1, k_grid.dimension * l_grid.dimension))
        self.u = ValueTable(grid, u)
        self._u = u.reshape(grid.shape)

    def cav_part(self, values: np.ndarray) -> np.ndarray:
        w = np.minimum(self._u, np.asarray(values).reshape(self.grid.shape))
        return concave_envelope_rows(self.k_grid, w.T, tol=self.lp_tol).T.reshape(-1)

    def vex_part(self, values: np.ndarray) -> np.ndarray:
        w = np.maximum(self._u, np.asarray(values).reshape(self.grid.shape))
        return convex_envelope_rows(self.l_grid, w, tol=self.lp_tol).reshape(-1)

    def shape_defects(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = np.asarray(values, dtype=float).reshape(-1)
        w = flat.reshape(self.grid.shape)
        k_env = concave_envelope_rows(self.k_grid, w.T, tol=self.lp_tol).T.reshape(-1)
        l_env = convex_envelope_rows(self.l_grid, w, tol=self.lp_tol).reshape(-1)
        return k_env - flat, flat - l_env

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.vex_part(self.cav_part(values))


def mz_step(
    w: ValueTable, family: MatrixGameFamily, *, operator: MZOperator | None = None
) -> ValueTable:
    if not isinstance(w.grid, SimplexGrid):
        raise ValidationError("mz_step expects a table on a joint-belief simplex grid.")
    op = operator or MZOperator(family, w.grid)
    return w.with_values(op(w.values))


@dataclass(frozen=True, eq=False)
class BracketRun:
    values: np.ndarray
    iterations: int
    converged: bool
    monotonicity_defect: float
    movements: tuple[float, ...] = field(default=(), repr=False)


def iterate_bracket(
    operator: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    config: MZConfig,
    *,
    direction: Literal["down", "up"] = "down",
) -> BracketRun:
    """Iterate until the sup-norm move drops below the tolerance or the budget runs out.

    The monotonicity defect is the largest step taken against `direction`.
    """
    sign = 1.0 if direction == "down" else -1.0
    current = np.array(start, dtype=float)
    defect = 0.0
    movements: list[float] = []
    for iteration in range(1, config.max_iterations + 1):
        nxt = operator(current)
        step = nxt - current
        defect = max(defect, float(np.max(sign * step, initial=0.0)))
        move = float(np.max(np.abs(step), initial=0.0))
        movements.append(move)
        current = nxt
        if move < config.tolerance:
            return BracketRun(current, iteration, True, defect, tuple(movements))
    return BracketRun(current, config.max_iterations, False, defect, tuple(movements))


@dataclass(frozen=True, eq=False)
class MZSolution:
    W: ValueTable
    residuals: dict[str, float]
    iterations: tuple[int, int]
    bracket_gap: float
    upper: np.ndarray
    lower: np.ndarray


def solution_defects(operator: SplitOperator, values: np.ndarray) -> dict[str, np.ndarray]:
    """Pointwise shape defects and equation residuals of a candidate table."""
    k_defect, l_defect = operator.shape_defects(values)
    return {
        "k_concavity": k_defect,
        "l_convexity": l_defect,
        "cav_equation": np.abs(values - operator.cav_part(values)),
        "vex_equation": np.abs(values - operator.vex_part(values)),
    }


def _solve_bracketed(
    operator: SplitOperator, grid: SimplexGrid | ProductGrid, bound: float, config: MZConfig
) -> MZSolution:
    upper = iterate_bracket(operator, np.full(grid.size, bound), config, direction="down")
    lower = iterate_bracket(operator, np.full(grid.size, -bound), config, direction="up")
    gap = float(np.max(upper.values - lower.values, initial=0.0))
    iterations = (upper.iterations, lower.iterations)
    if not (upper.converged and lower.converged):
        raise NonConvergenceError(
            f"Bracket iteration did not settle within {config.max_iterations} steps "
            f"(upper converged: {upper.converged}, lower converged: {lower.converged}, gap {gap:.3e}).",
            upper=upper.values,
            lower=lower.values,
            gap=gap,
            iterations=iterations,
        )
    if gap > config.bracket_gap:
        raise NonConvergenceError(
            f"Brackets settled {gap:.3e} apart, above the accepted gap {config.bracket_gap:.1e}.",
            upper=upper.values,
            lower=lower.values,
            gap=gap,
            iterations=iterations,
        )
    values = 0.5 * (upper.values + lower.values)
    defects = solution_defects(operator, values)
    residuals = {name: worst(defect)[0] for name, defect in defects.items()}
    limits = {
        "k_concavity": config.shape_tolerance,
        "l_convexity": config.shape_tolerance,
        "cav_equation": config.residual_tolerance,
        "vex_equation": config.residual_tolerance,
    }
    residuals.update(
        bracket_gap=gap,
        upper_monotonicity_defect=upper.monotonicity_defect,
        lower_monotonicity_defect=lower.monotonicity_defect,
    )
    unsolved = [name for name, limit in limits.items() if residuals[name] > limit]
    if unsolved:
        detail = ", ".join(f"{name} {residuals[name]:.3e}" for name in unsolved)
        raise NonConvergenceError(
            f"Brackets settled {gap:.3e} apart on a limit that does not solve the grid system ({detail}).",
            upper=upper.values,
            lower=lower.values,
            gap=gap,
            iterations=iterations,
            residuals=residuals,
        )
    return MZSolution(
        W=ValueTable(grid, values),
        residuals=residuals,
        iterations=iterations,
        bracket_gap=gap,
        upper=upper.values,
        lower=lower.values,
    )


def solve_mz(family: MatrixGameFamily, config: MZConfig | None = None) -> MZSolution:
    """Solve the dependent-case system on the Delta(K x L) grid of resolution config.grid_m."""
    cfg = config or MZConfig()
    n_k, n_l = family.types
    grid = simplex_grid(n_k * n_l, cfg.grid_m, shape=(n_k, n_l), cap=cfg.grid_point_cap)
    operator = MZOperator(family, grid, lp_tol=cfg.lp_tol)
    return _solve_bracketed(operator, grid, family.bound, cfg)


def solve_mz_independent(family: MatrixGameFamily, config: MZConfig | None = None) -> MZSolution:
    """Solve the independent-case system on Delta(K) x Delta(L)."""
    cfg = config or MZConfig()
    n_k, n_l = family.types
    grid = product_grid(
        simplex_grid(n_k, cfg.grid_m),
        simplex_grid(n_l, cfg.grid_m),
        cap=cfg.grid_point_cap,
    )
    operator = IndependentMZOperator(family, grid, lp_tol=cfg.lp_tol)
    return _solve_bracketed(operator, grid, family.bound, cfg)


def _belief_witness(grid: SimplexGrid, index: int) -> dict[str, object] | None:
    if index < 0:
        return None
    return {"belief": grid.points[index].reshape(grid.shape).tolist()}


def _extreme_at_nodes(fibers: FiberProjector, fiber_values: np.ndarray, tol: float) -> np.ndarray:
    """For each grid node, whether it is an extreme point of its own fiber function."""
    if fibers.fiber_grid.dimension <= 2:
        mask = extreme_mask_rows(fibers.fiber_grid, fiber_values, tol=tol)
        return fibers.read_back(mask)
    out = np.zeros(fibers.grid.size, dtype=bool)
    for i in range(fibers.grid.size):
        row = ValueTable(fibers.fiber_grid, fiber_values[fibers.fiber_of[i]])
        out[i] = is_extreme(row, int(fibers.marginal_rank[i]), tol=tol)
    return out


def _conjugate_residual(
    fibers: FiberProjector,
    w_fibers: np.ndarray,
    excess: np.ndarray,
    duals: np.ndarray,
    *,
    upper: bool,
) -> tuple[float, int]:
    """Worst `excess` over grid nodes that are the unique conjugate optimizer on their fiber."""
    points = fibers.fiber_grid.points
    scores = w_fibers[:, None, :] - duals @ points.T if upper else -(w_fibers[:, None, :] + duals @ points.T)
    best = np.argmax(scores, axis=2)
    if points.shape[0] > 1:
        top_two = -np.partition(-scores, 1, axis=2)[..., :2]
        unique = top_two[..., 0] - top_two[..., 1] > UNIQUE_ARGMAX_MARGIN
    else:
        unique = np.ones(best.shape, dtype=bool)
    node_of = np.full((fibers.n_fibers, points.shape[0]), -1, dtype=np.int64)
    node_of[fibers.fiber_of, fibers.marginal_rank] = np.arange(fibers.grid.size)
    hits = node_of[np.arange(fibers.n_fibers)[:, None], best]
    selected = np.unique(hits[unique & (hits >= 0)])
    if selected.size == 0:
        return 0.0, -1
    value, pos = worst(excess[selected])
    return value, int(selected[pos])


def verify_mz(
    W: ValueTable,
    family: MatrixGameFamily,
    *,
    u: ValueTable | None = None,
    tolerance: float = 1e-6,
    shape_tolerance: float = 1e-8,
    extreme_tolerance: float = 1e-6,
    samples: int = 16,
    seed: int = 0,
) -> VerificationReport:
    """Check a candidate solution against the characterization of the system's solution.

    Reports fiber concavity/convexity defects, both equation residuals, the
    inequalities W <= u (resp. >= u) at extreme points of K-fibers (resp.
    L-fibers), and their conjugate form at unique conjugate optimizers.
    """
    if not isinstance(W.grid, SimplexGrid):
        raise ValidationError("verify_mz expects a table on a joint-belief simplex grid.")
    grid = W.grid
    op = MZOperator(family, grid, u)
    values, u_values = W.values, op.u.values
    kf, lf = op.k_fibers, op.l_fibers
    w_on_k, w_on_l = kf.restrict(values), lf.restrict(values)

    checks: list[Check] = []
    limits = {
        "k_concavity": shape_tolerance,
        "l_convexity": shape_tolerance,
        "cav_equation": tolerance,
        "vex_equation": tolerance,
    }
    for name, defect in solution_defects(op, values).items():
        res, idx = worst(defect)
        checks.append(Check(name, res, limits[name], _belief_witness(grid, idx)))

    above_u = values - u_values
    k_extreme = _extreme_at_nodes(kf, w_on_k, extreme_tolerance)
    res, idx = worst(np.where(k_extreme, above_u, 0.0))
    checks.append(Check("k_extreme_points", res, extreme_tolerance, _belief_witness(grid, idx)))
    l_extreme = _extreme_at_nodes(lf, -w_on_l, extreme_tolerance)
    res, idx = worst(np.where(l_extreme, -above_u, 0.0))
    checks.append(Check("l_extreme_points", res, extreme_tolerance, _belief_witness(grid, idx)))

    rng = np.random.default_rng(seed)
    scale = 2.0 * max(family.bound, 1.0)
    n_k, n_l = family.types
    zetas = rng.uniform(-scale, scale, size=(samples, n_k))
    etas = rng.uniform(-scale, scale, size=(samples, n_l))
    res, idx = _conjugate_residual(kf, w_on_k, above_u, zetas, upper=True)
    checks.append(Check("k_conjugate", res, extreme_tolerance, _belief_witness(grid, idx)))
    res, idx = _conjugate_residual(lf, w_on_l, -above_u, etas, upper=False)
    checks.append(Check("l_conjugate", res, extreme_tolerance, _belief_witness(grid, idx)))
    return VerificationReport(subject="mz", checks=tuple(checks))
