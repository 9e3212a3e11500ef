"""Backward Hamilton-Jacobi-Isaacs sweep on a time x state x belief lattice.

Each step is a monotone Lax-Friedrichs update in the state followed by the
fiber projections Cav_K and then Vex_L on the belief grid:

    V^n = Vex_L Cav_K (V^{n+1} + dt * Hhat(t_{n+1}, x, D-, D+))
    Hhat = H(t, x, (D+ + D-)/2) + sum_i (a_i / 2)(D+_i - D-_i)

with a_i the largest sampled |phi_i|. The update is monotone when
dt * sum(a) <= dx.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from cavvex.config import SolverSettings
from cavvex.convex import FiberProjector
from cavvex.dynamics import MayerSpec, Time, time_steps
from cavvex.errors import CFLViolation, GridCapError, IsaacsViolation, ValidationError
from cavvex.games import matrix_game_values
from cavvex.grids import DEFAULT_GRID_POINT_CAP, SimplexGrid, ValueTable, simplex_grid

DEFAULT_ISAACS_TOLERANCE = 1e-9
ISAACS_PROBES = 256
DIFFUSION_SAMPLES = 512
CFL_SLACK = 1e-12


def _control_matrices(phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Payoff matrices <phi(u, v), xi>: phi (m, nu, nv, N), xi (m, B, N) -> (m, B, nu, nv)."""
    return np.einsum("mbd,muvd->mbuv", xi, phi)


def hamiltonians(matrices: np.ndarray, mixed: bool) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper Hamiltonians of a stack of control matrices (..., nu, nv)."""
    if mixed:
        value = matrix_game_values(matrices)
        return value, value
    lower = matrices.min(axis=-1).max(axis=-1)
    upper = matrices.max(axis=-2).min(axis=-1)
    return lower, upper


def hamiltonian(
    spec: MayerSpec,
    t: float,
    x: np.ndarray,
    xi: np.ndarray,
    *,
    isaacs_tol: float = DEFAULT_ISAACS_TOLERANCE,
    check: bool = True,
) -> tuple[float, float]:
    """(H-, H+) at one point by exhaustive scan of the control pairs.

    With mixed controls both equal the value of the matrix game <phi(u, v), xi>.
    """
    point = np.asarray(x, dtype=float).reshape(1, -1)
    direction = np.asarray(xi, dtype=float).reshape(1, 1, -1)
    if point.shape[1] != spec.dimension or direction.shape[2] != spec.dimension:
        raise ValidationError(f"State and covector must have {spec.dimension} entries.")
    matrices = _control_matrices(spec.phi(t, point), direction)
    lower, upper = hamiltonians(matrices, spec.mixed_controls)
    h_minus, h_plus = float(lower[0, 0]), float(upper[0, 0])
    if check and h_plus - h_minus > isaacs_tol:
        raise IsaacsViolation(
            h_plus - h_minus, {"t": t, "x": point[0].tolist(), "xi": direction[0, 0].tolist()}
        )
    return h_minus, h_plus


@dataclass(frozen=True, eq=False)
class StateLattice:
    """Box lattice centered at z with spacing dx; axes with zero reach hold one node."""

    center: np.ndarray
    spacing: float
    counts: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts, dtype=np.int64))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            c + self.spacing * (np.arange(n) - (n - 1) / 2) for c, n in zip(self.center, self.counts)
        )

    @cached_property
    def nodes(self) -> np.ndarray:
        if not self.counts:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @property
    def center_index(self) -> int:
        if not self.counts:
            return 0
        return int(np.ravel_multi_index(tuple((n - 1) // 2 for n in self.counts), self.counts))

    @cached_property
    def interior(self) -> np.ndarray:
        """Nodes away from the boundary of every axis with more than one node."""
        mask = np.ones(self.counts or (1,), dtype=bool)
        for axis, n in enumerate(self.counts):
            if n > 1:
                index = [slice(None)] * len(self.counts)
                index[axis] = 0
                mask[tuple(index)] = False
                index[axis] = n - 1
                mask[tuple(index)] = False
        return mask.reshape(-1)


def build_lattice(center: np.ndarray, diffusion: np.ndarray, dx: float, *, cap: int) -> StateLattice:
    """Box of radius |z_i| + a_i around z on each axis reached by the dynamics."""
    counts: list[int] = []
    for z_i, a_i in zip(center, diffusion):
        if a_i > 0:
            radius = abs(float(z_i)) + float(a_i)
            counts.append(2 * int(np.ceil(radius / dx - 1e-12)) + 1)
        else:
            counts.append(1)
    lattice = StateLattice(center=np.asarray(center, dtype=float), spacing=dx, counts=tuple(counts))
    if lattice.size > cap:
        raise GridCapError(f"State lattice has {lattice.size} nodes, above the cap of {cap}.")
    return lattice


def estimate_diffusion(spec: MayerSpec, *, samples: int = DIFFUSION_SAMPLES, seed: int = 0) -> np.ndarray:
    """a_i = largest sampled |phi_i| over times, states in the reachable box and control pairs."""
    rng = np.random.default_rng(seed)
    reach = spec.bound * (1.0 - spec.t0)
    t = rng.uniform(spec.t0, 1.0, size=samples)
    x = spec.z + rng.uniform(-reach, reach, size=(samples, spec.dimension))
    x = np.vstack([spec.z[None, :], x])
    t = np.concatenate([[spec.t0], t])
    phi = spec.phi(t, x)
    if phi.size == 0:
        return np.zeros(spec.dimension)
    return np.abs(phi).reshape(-1, spec.dimension).max(axis=0)


@dataclass(frozen=True)
class HJSettings:
    dt: float = 0.02
    dx: float | None = None
    grid_m: int = 20
    isaacs_tol: float = DEFAULT_ISAACS_TOLERANCE
    grid_point_cap: int = DEFAULT_GRID_POINT_CAP
    store_every: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.dt <= 1.0:
            raise ValidationError("dt must lie in (0, 1].")
        if self.dx is not None and self.dx <= 0:
            raise ValidationError("dx must be positive.")
        if self.grid_m < 1 or self.store_every < 1:
            raise ValidationError("grid_m and store_every must be at least 1.")

    @classmethod
    def from_settings(cls, settings: SolverSettings, *, store_every: int = 1) -> HJSettings:
        return cls(
            dt=settings.dt,
            dx=settings.dx,
            grid_m=settings.grid_m,
            isaacs_tol=settings.isaacs_tol,
            grid_point_cap=settings.grid_point_cap,
            store_every=store_every,
            seed=settings.seed,
        )


class HJContext:
    """Everything one backward step needs: lattices, projectors and the flux."""

    def __init__(
        self,
        spec: MayerSpec,
        beliefs: SimplexGrid,
        lattice: StateLattice,
        diffusion: np.ndarray,
        dt: float,
        *,
        isaacs_tol: float = DEFAULT_ISAACS_TOLERANCE,
    ) -> None:
        self.spec = spec
        self.beliefs = beliefs
        self.lattice = lattice
        self.diffusion = np.asarray(diffusion, dtype=float)
        self.dt = dt
        self.isaacs_tol = isaacs_tol
        self.k_fibers = FiberProjector(beliefs, "K")
        self.l_fibers = FiberProjector(beliefs, "L")
        total = float(self.diffusion.sum())
        if dt * total > lattice.spacing * (1.0 + CFL_SLACK):
            raise CFLViolation(dt, lattice.spacing, self.diffusion.tolist())

    def differences(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One-sided differences D-, D+ of (nodes, R) values, shaped (nodes, R, N).

        At a boundary the missing side copies the other; single-node axes get zeros.
        """
        lattice = self.lattice
        n_nodes, width = values.shape
        shaped = values.reshape(*lattice.counts, width)
        minus = np.zeros((n_nodes, width, lattice.dimension))
        plus = np.zeros_like(minus)
        for axis, n in enumerate(lattice.counts):
            if n == 1:
                continue
            forward = np.diff(shaped, axis=axis) / lattice.spacing
            pad = [(0, 0)] * shaped.ndim
            pad[axis] = (0, 1)
            d_plus = np.pad(forward, pad, mode="edge")
            pad[axis] = (1, 0)
            d_minus = np.pad(forward, pad, mode="edge")
            plus[..., axis] = d_plus.reshape(n_nodes, width)
            minus[..., axis] = d_minus.reshape(n_nodes, width)
        return minus, plus

    def numerical_hamiltonian(self, t: Time, values: np.ndarray, *, check: bool = True) -> np.ndarray:
        """Lax-Friedrichs flux Hhat for (nodes, R) values."""
        minus, plus = self.differences(values)
        phi = self.spec.phi(t, self.lattice.nodes)
        lower, upper = hamiltonians(_control_matrices(phi, 0.5 * (minus + plus)), self.spec.mixed_controls)
        if check and not self.spec.mixed_controls:
            gap = upper - lower
            worst = int(np.argmax(gap))
            if gap.reshape(-1)[worst] > self.isaacs_tol:
                node = worst // values.shape[1]
                raise IsaacsViolation(
                    float(gap.reshape(-1)[worst]),
                    {"t": float(np.max(t)), "x": self.lattice.nodes[node].tolist()},
                )
        viscosity = np.einsum("nrd,d->nr", plus - minus, 0.5 * self.diffusion)
        return lower + viscosity

    def project(self, values: np.ndarray) -> np.ndarray:
        return self.l_fibers.convex(self.k_fibers.concave(values))

    def terminal_slice(self) -> np.ndarray:
        payoffs = self.spec.payoff(self.lattice.nodes)
        return np.einsum("nkl,bkl->nb", payoffs, self.beliefs.points.reshape(-1, *self.beliefs.shape))


def hj_step(ctx: HJContext, next_slice: np.ndarray, t_next: float) -> np.ndarray:
    """One backward step from time t_next to t_next - dt."""
    flux = ctx.numerical_hamiltonian(t_next, next_slice)
    return ctx.project(next_slice + ctx.dt * flux)


@dataclass(frozen=True, eq=False)
class ValueGrid:
    """Stored slices of V(t, x, pi); values have shape (slices, lattice nodes, beliefs)."""

    times: np.ndarray
    lattice: StateLattice
    beliefs: SimplexGrid
    values: np.ndarray
    dt: float
    diffusion: np.ndarray
    complete: bool

    def slice_at(self, index: int) -> np.ndarray:
        return self.values[index]

    def initial_table(self, node: int | None = None) -> ValueTable:
        """V(t0, x, .) as a belief table at a lattice node (default: the center)."""
        at = self.lattice.center_index if node is None else node
        return ValueTable(self.beliefs, self.values[0, at])


def probe_isaacs(
    spec: MayerSpec,
    lattice: StateLattice,
    *,
    samples: int = ISAACS_PROBES,
    seed: int = 0,
    isaacs_tol: float = DEFAULT_ISAACS_TOLERANCE,
) -> float:
    """Largest H+ - H- over random (t, x, xi) in the lattice box; raises above tolerance."""
    if spec.mixed_controls:
        return 0.0
    rng = np.random.default_rng(seed)
    lo = np.array([axis.min() for axis in lattice.axes]) if lattice.dimension else np.zeros(0)
    hi = np.array([axis.max() for axis in lattice.axes]) if lattice.dimension else np.zeros(0)
    t = rng.uniform(spec.t0, 1.0, size=samples)
    x = rng.uniform(lo, hi, size=(samples, spec.dimension))
    xi = rng.normal(size=(samples, 1, spec.dimension))
    lower, upper = hamiltonians(_control_matrices(spec.phi(t, x), xi), False)
    gap = (upper - lower)[:, 0]
    worst = int(np.argmax(gap))
    if gap[worst] > isaacs_tol:
        raise IsaacsViolation(
            float(gap[worst]),
            {"t": float(t[worst]), "x": x[worst].tolist(), "xi": xi[worst, 0].tolist()},
        )
    return float(gap[worst])


def build_context(spec: MayerSpec, settings: HJSettings) -> HJContext:
    n_k, n_l = spec.types
    beliefs = simplex_grid(n_k * n_l, settings.grid_m, shape=(n_k, n_l), cap=settings.grid_point_cap)
    diffusion = estimate_diffusion(spec, seed=settings.seed)
    total = float(diffusion.sum())
    dx = settings.dx if settings.dx is not None else (settings.dt * total if total > 0 else 1.0)
    if settings.dt * total > dx * (1.0 + CFL_SLACK):
        raise CFLViolation(settings.dt, dx, diffusion.tolist())
    lattice = build_lattice(spec.z, diffusion, dx, cap=max(1, settings.grid_point_cap // beliefs.size))
    return HJContext(spec, beliefs, lattice, diffusion, settings.dt, isaacs_tol=settings.isaacs_tol)


def solve_value(spec: MayerSpec, settings: HJSettings | None = None) -> ValueGrid:
    """Sweep backward from V(1, x, pi) = sum_kl pi_kl g^kl(x) to t0."""
    cfg = settings or HJSettings()
    steps = time_steps(spec.t0, cfg.dt)
    ctx = build_context(spec, cfg)
    probe_isaacs(spec, ctx.lattice, seed=cfg.seed, isaacs_tol=cfg.isaacs_tol)

    times = spec.t0 + cfg.dt * np.arange(steps + 1)
    times[-1] = 1.0
    keep = sorted({0, steps, *range(0, steps + 1, cfg.store_every)})
    stored: dict[int, np.ndarray] = {}
    current = ctx.terminal_slice()
    stored[steps] = current
    for n in range(steps - 1, -1, -1):
        current = hj_step(ctx, current, float(times[n + 1]))
        if n in keep:
            stored[n] = current
    return ValueGrid(
        times=times[keep],
        lattice=ctx.lattice,
        beliefs=ctx.beliefs,
        values=np.stack([stored[n] for n in keep]),
        dt=cfg.dt,
        diffusion=ctx.diffusion,
        complete=cfg.store_every == 1,
    )


def context_for(grid: ValueGrid, spec: MayerSpec, *, isaacs_tol: float = DEFAULT_ISAACS_TOLERANCE) -> HJContext:
    """Rebuild the step context of a stored grid."""
    return HJContext(spec, grid.beliefs, grid.lattice, grid.diffusion, grid.dt, isaacs_tol=isaacs_tol)


def embedding_stationarity(grid: ValueGrid, W: ValueTable | None = None) -> dict[str, float]:
    """Residuals of V(t,x,pi) = V(t,0,pi) + <x,pi>, V(t,0,pi) = (1-t) V(0,0,pi) and V(0,0,pi) = W(pi).

    Meant for the repeated-game embedding, whose state stacks one payoff
    accumulator per type pair and starts at 0 when t0 = 0.
    """
    lattice = grid.lattice
    center = lattice.center_index
    pis = grid.beliefs.points
    if lattice.dimension != pis.shape[1]:
        raise ValidationError("Stationarity identities need one state coordinate per type pair.")
    affine = (lattice.nodes - lattice.center) @ pis.T
    at_center = grid.values[:, center, :]
    state_residual = np.abs(grid.values - at_center[:, None, :] - affine[None, :, :]).max()
    initial = at_center[0]
    horizon = 1.0 - grid.times[0]
    time_residual = np.abs(at_center - ((1.0 - grid.times) / horizon)[:, None] * initial[None, :]).max()
    out = {"affine_in_state": float(state_residual), "linear_in_time": float(time_residual)}
    if W is not None:
        if W.grid.size != grid.beliefs.size:
            raise ValidationError("W must live on the belief grid of the value grid.")
        out["initial_equals_W"] = float(np.abs(initial - W.values).max())
    return out
