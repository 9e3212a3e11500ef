"""Verification of computed value grids through their Fenchel conjugates.

Along K-fibers the upper conjugate S(t, x) = max_p V(t, x, p (x) Q) - <zeta, p>
must be a discrete sub-solution of the backward scheme,

    S^n <= S^{n+1} + dt * Hhat[S^{n+1}],

and along L-fibers the lower conjugate min_q V(t, x, q (x) P) + <eta, q> a
super-solution. Residuals are measured at interior lattice nodes, per unit time.
"""

from __future__ import annotations

import numpy as np

from cavvex.convex import FiberProjector, supergradient_at
from cavvex.dynamics import MayerSpec
from cavvex.errors import DeclaredBoundsViolation, NonConcaveError, ValidationError
from cavvex.hji import (
    HJContext,
    ValueGrid,
    _control_matrices,
    context_for,
    hamiltonians,
)
from cavvex.report import Check, ComparisonReport, VerificationReport, worst

RANDOM_DUALS = 32
DUAL_CHUNK = 64
SHAPE_TOLERANCE = 1e-8
REGULARITY_SLACK = 1.01


def residual_tolerance(grid: ValueGrid) -> float:
    return 1e-2 * (grid.dt + grid.lattice.spacing)


def _require_complete(grid: ValueGrid) -> None:
    if not grid.complete or grid.values.shape[0] != int(round((1.0 - grid.times[0]) / grid.dt)) + 1:
        raise ValidationError("Verification needs every time slice of the value grid.")


def _slice_witness(grid: ValueGrid, flat_index: int, width: int) -> dict[str, object] | None:
    if flat_index < 0:
        return None
    step, rest = divmod(flat_index, grid.lattice.size * width)
    node, column = divmod(rest, width)
    out: dict[str, object] = {"t": float(grid.times[step]), "x": grid.lattice.nodes[node].tolist()}
    if width == grid.beliefs.size:
        out["belief"] = grid.beliefs.points[column].reshape(grid.beliefs.shape).tolist()
    return out


def sample_duals(
    fibers: FiberProjector, fiber_values: np.ndarray, *, random: int = RANDOM_DUALS, seed: int = 0, upper: bool = True
) -> np.ndarray:
    """Canonical super- (or sub-) gradients of every fiber function at every grid node, plus random draws."""
    points = fibers.fiber_grid.points
    sign = 1.0 if upper else -1.0
    found: list[np.ndarray] = []
    for i in range(fibers.grid.size):
        row = sign * fiber_values[fibers.fiber_of[i]]
        try:
            found.append(sign * supergradient_at(points, row, int(fibers.marginal_rank[i])))
        except NonConcaveError:
            continue
    rng = np.random.default_rng(seed)
    scale = 2.0 * max(1.0, float(np.abs(fiber_values).max(initial=0.0)))
    draws = rng.uniform(-scale, scale, size=(random, points.shape[1]))
    duals = np.vstack([*found, draws]) if found else draws
    return np.unique(np.round(duals, 12), axis=0)


def _conjugate_residual(
    ctx: HJContext,
    grid: ValueGrid,
    fibers: FiberProjector,
    duals: np.ndarray,
    *,
    upper: bool,
) -> tuple[float, dict[str, object] | None]:
    points = fibers.fiber_grid.points
    interior = grid.lattice.interior
    n_times, n_nodes = grid.values.shape[:2]
    best = 0.0
    witness: dict[str, object] | None = None

    def conjugate(step: int, shifts: np.ndarray) -> np.ndarray:
        restricted = fibers.restrict(grid.values[step])
        if upper:
            conj = (restricted[..., None, :] - shifts).max(axis=-1)
        else:
            conj = (restricted[..., None, :] + shifts).min(axis=-1)
        return conj.reshape(n_nodes, -1)

    for start in range(0, duals.shape[0], DUAL_CHUNK):
        shifts = duals[start : start + DUAL_CHUNK] @ points.T
        later = conjugate(n_times - 1, shifts)
        for n in range(n_times - 2, -1, -1):
            current = conjugate(n, shifts)
            flux = ctx.numerical_hamiltonian(float(grid.times[n + 1]), later, check=False)
            gap = (current - later) / grid.dt - flux
            defect = gap if upper else -gap
            defect = np.where(interior[:, None], defect, -np.inf)
            value, pos = worst(defect)
            if value > best:
                best = value
                witness = {"t": float(grid.times[n]), "x": grid.lattice.nodes[pos // defect.shape[1]].tolist()}
            later = current
    return best, witness


def check_dual_solution(
    grid: ValueGrid,
    spec: MayerSpec,
    *,
    tolerance: float | None = None,
    seed: int = 0,
    random_duals: int = RANDOM_DUALS,
) -> VerificationReport:
    """Fiber shape defects, terminal residual and conjugate sub/super-solution residuals."""
    _require_complete(grid)
    ctx = context_for(grid, spec)
    tol = residual_tolerance(grid) if tolerance is None else tolerance
    values = grid.values
    width = grid.beliefs.size
    checks: list[Check] = []

    body = values[:-1]
    k_defect = ctx.k_fibers.concave(body) - body
    res, idx = worst(k_defect)
    checks.append(Check("k_concavity", res, SHAPE_TOLERANCE, _slice_witness(grid, idx, width)))
    l_defect = body - ctx.l_fibers.convex(body)
    res, idx = worst(l_defect)
    checks.append(Check("l_convexity", res, SHAPE_TOLERANCE, _slice_witness(grid, idx, width)))

    terminal = ctx.terminal_slice()
    res, idx = worst(np.abs(values[-1] - terminal))
    scale = max(1.0, float(np.abs(terminal).max(initial=0.0)))
    witness = _slice_witness(grid, (values.shape[0] - 1) * grid.lattice.size * width + idx, width) if idx >= 0 else None
    checks.append(Check("terminal", res, 1e-12 * scale, witness))

    center = grid.lattice.center_index
    k_start = ctx.k_fibers.restrict(values[0, center])
    zetas = sample_duals(ctx.k_fibers, k_start, random=random_duals, seed=seed, upper=True)
    res, wit = _conjugate_residual(ctx, grid, ctx.k_fibers, zetas, upper=True)
    checks.append(Check("k_conjugate_subsolution", res, tol, wit))

    l_start = ctx.l_fibers.restrict(values[0, center])
    etas = sample_duals(ctx.l_fibers, l_start, random=random_duals, seed=seed + 1, upper=False)
    res, wit = _conjugate_residual(ctx, grid, ctx.l_fibers, etas, upper=False)
    checks.append(Check("l_conjugate_supersolution", res, tol, wit))
    return VerificationReport(subject="hj", checks=tuple(checks))


def compare(
    w1: ValueGrid,
    w2: ValueGrid,
    spec: MayerSpec,
    *,
    seed: int = 0,
) -> ComparisonReport:
    """Discrete comparison principle: hypotheses on both grids, then w1 >= w2 - slack."""
    if (
        w1.values.shape != w2.values.shape
        or w1.lattice.counts != w2.lattice.counts
        or w1.beliefs.size != w2.beliefs.size
        or not np.allclose(w1.times, w2.times)
    ):
        raise ValidationError("Compared value grids must share their time, state and belief lattices.")
    first = check_dual_solution(w1, spec, seed=seed)
    second = check_dual_solution(w2, spec, seed=seed)
    hypotheses: list[Check] = []
    for label, report in (("w1", first), ("w2", second)):
        for check in report.checks:
            if check.name != "terminal":
                hypotheses.append(
                    Check(f"{label}_{check.name}", check.residual, check.tolerance, check.witness)
                )
    res, idx = worst(w2.values[-1] - w1.values[-1])
    width = w1.beliefs.size
    last = (w1.values.shape[0] - 1) * w1.lattice.size * width
    hypotheses.append(
        Check("terminal_ordering", res, 0.0, _slice_witness(w1, last + idx, width) if idx >= 0 else None)
    )

    horizon = 1.0 - float(w1.times[0])
    slack = horizon * (
        first.check("l_conjugate_supersolution").residual + second.check("k_conjugate_subsolution").residual
    ) + 1e-12
    res, idx = worst(w2.values - w1.values)
    conclusion = Check("ordering", res, slack, _slice_witness(w1, idx, width))
    if not all(h.passed for h in hypotheses):
        status = "hypothesis-failure"
    elif not conclusion.passed:
        status = "conclusion-failure"
    else:
        status = "pass"
    return ComparisonReport(status=status, hypotheses=tuple(hypotheses), conclusion=conclusion)


def hamiltonian_regularity_probe(
    spec: MayerSpec,
    *,
    samples: int = 10_000,
    seed: int = 0,
) -> float:
    """Largest |H(t,x,xi) - H(s,y,xi)| / (|xi| (|t-s| + |x-y|)) over random pairs."""
    rng = np.random.default_rng(seed)
    reach = spec.bound * (1.0 - spec.t0) + 1.0
    n = spec.dimension
    t = rng.uniform(spec.t0, 1.0, size=samples)
    s = rng.uniform(spec.t0, 1.0, size=samples)
    x = spec.z + rng.uniform(-reach, reach, size=(samples, n))
    y = spec.z + rng.uniform(-reach, reach, size=(samples, n))
    xi = rng.normal(size=(samples, 1, n))
    h_x, _ = hamiltonians(_control_matrices(spec.phi(t, x), xi), spec.mixed_controls)
    h_y, _ = hamiltonians(_control_matrices(spec.phi(s, y), xi), spec.mixed_controls)
    scale = np.linalg.norm(xi[:, 0, :], axis=1) * (np.abs(t - s) + np.linalg.norm(x - y, axis=1))
    quotient = np.abs(h_x[:, 0] - h_y[:, 0]) / np.where(scale > 0, scale, np.inf)
    estimate = float(np.max(quotient, initial=0.0))
    if estimate > spec.lipschitz * REGULARITY_SLACK + 1e-9:
        raise DeclaredBoundsViolation(
            f"Hamiltonian Lipschitz quotient reaches {estimate:.6g}, "
            f"above the declared constant {spec.lipschitz:.6g}."
        )
    return estimate
