"""Differential games with type-dependent data and their Mayer reduction.

Every callable here is batched: `t` is a scalar or an array broadcasting
against the rows of `x`, and dynamics/payoffs are evaluated for all control
pairs at once. Shapes:

    dynamics(k, l, t, x (m, n), u (nu, du), v (nv, dv)) -> (m, nu, nv, n)
    running(k, l, t, x, u, v)                           -> (m, nu, nv)
    terminal(k, l, x (m, n))                            -> (m,)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from cavvex.errors import DeclaredBoundsViolation, ValidationError
from cavvex.games import MatrixGameFamily

BOUND_SLACK = 1.01

Time = float | np.ndarray


class Dynamics(Protocol):
    def __call__(
        self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray
    ) -> np.ndarray: ...


class Running(Protocol):
    def __call__(
        self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray
    ) -> np.ndarray: ...


class Terminal(Protocol):
    def __call__(self, k: int, l: int, x: np.ndarray) -> np.ndarray: ...


class MayerDynamics(Protocol):
    def __call__(self, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray: ...


class MayerTerminal(Protocol):
    def __call__(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """f = A x + B u + C v + d, shared by all types."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __call__(self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        drift = (np.atleast_2d(x) @ self.a.T + self.d)[:, None, None, :]
        push_u = (u @ self.b.T)[None, :, None, :]
        push_v = (v @ self.c.T)[None, None, :, :]
        return drift + push_u + push_v


@dataclass(frozen=True, eq=False)
class BilinearDynamics:
    """f_i = alpha_i u_i v_i + beta_i x_i u_i, with controls of the state's dimension."""

    alpha: np.ndarray
    beta: np.ndarray

    def __call__(self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        coupled = self.alpha * u[:, None, :] * v[None, :, :]
        steered = self.beta * np.atleast_2d(x)[:, None, None, :] * u[None, :, None, :]
        return coupled[None, :, :, :] + steered


@dataclass(frozen=True, eq=False)
class ZeroDynamics:
    dimension: int = 0

    def __call__(self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.zeros((np.atleast_2d(x).shape[0], u.shape[0], v.shape[0], self.dimension))


@dataclass(frozen=True, eq=False)
class LinearTerminal:
    """g^{kl}(x) = <w^{kl}, x> + c^{kl}."""

    weights: np.ndarray
    offsets: np.ndarray

    def __call__(self, k: int, l: int, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.weights[k, l] + self.offsets[k, l]


@dataclass(frozen=True, eq=False)
class LinearRunning:
    """gamma^{kl}(t, x, u, v) = <w^{kl}, x> + c^{kl}, independent of the controls."""

    weights: np.ndarray
    offsets: np.ndarray

    def __call__(self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        level = np.atleast_2d(x) @ self.weights[k, l] + self.offsets[k, l]
        return np.broadcast_to(level[:, None, None], (level.shape[0], u.shape[0], v.shape[0])).copy()


@dataclass(frozen=True, eq=False)
class PayoffRunning:
    """gamma^{kl}(u, v) = G^{kl}[u, v] with controls given as action indices."""

    payoffs: np.ndarray

    def __call__(self, k: int, l: int, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        rows = u[:, 0].astype(np.int64)
        cols = v[:, 0].astype(np.int64)
        stage = self.payoffs[k, l][np.ix_(rows, cols)]
        m = np.atleast_2d(x).shape[0]
        return np.broadcast_to(stage, (m, *stage.shape)).copy()


@dataclass(frozen=True, eq=False)
class DifferentialGameSpec:
    types: tuple[int, int]
    t0: float
    x0: np.ndarray
    controls_u: np.ndarray
    controls_v: np.ndarray
    dynamics: Dynamics
    terminal: Terminal
    running: Running | None = None
    bound: float = 1.0
    lipschitz: float = 1.0
    mixed_controls: bool = False

    def __post_init__(self) -> None:
        n_k, n_l = self.types
        if n_k < 1 or n_l < 1:
            raise ValidationError("Type sets must be nonempty.")
        if not 0.0 <= self.t0 < 1.0:
            raise ValidationError(f"t0 must lie in [0, 1), got {self.t0}.")
        x0 = np.array(self.x0, dtype=float)
        if x0.ndim != 3 or x0.shape[:2] != (n_k, n_l):
            raise ValidationError(f"x0 must have shape ({n_k}, {n_l}, n), got {x0.shape}.")
        for name in ("controls_u", "controls_v"):
            controls = np.array(getattr(self, name), dtype=float)
            if controls.ndim == 1:
                controls = controls[:, None]
            if controls.ndim != 2 or controls.shape[0] < 1:
                raise ValidationError(f"{name} must be a nonempty list of control points.")
            object.__setattr__(self, name, controls)
        if self.bound < 0 or self.lipschitz < 0:
            raise ValidationError("Declared bound and Lipschitz constant must be nonnegative.")
        object.__setattr__(self, "x0", x0)

    @property
    def state_dimension(self) -> int:
        return int(self.x0.shape[2])


@dataclass(frozen=True, eq=False)
class MayerSpec:
    """Common initial state z, common dynamics phi and type-dependent terminal payoffs.

    dynamics(t, X (m, N), u, v) -> (m, nu, nv, N); terminal(X (m, N)) -> (m, |K|, |L|).
    """

    types: tuple[int, int]
    t0: float
    z: np.ndarray
    controls_u: np.ndarray
    controls_v: np.ndarray
    dynamics: MayerDynamics
    terminal: MayerTerminal
    bound: float
    lipschitz: float
    mixed_controls: bool = False

    @property
    def dimension(self) -> int:
        return int(self.z.shape[0])

    def phi(self, t: Time, x: np.ndarray) -> np.ndarray:
        return self.dynamics(t, np.atleast_2d(x), self.controls_u, self.controls_v)

    def payoff(self, x: np.ndarray) -> np.ndarray:
        return self.terminal(np.atleast_2d(x))


def repeated_game_embedding(family: MatrixGameFamily) -> DifferentialGameSpec:
    """No state, running payoff G^{kl}(u, v), zero terminal payoff, mixed controls."""
    n_k, n_l = family.types
    n_i, n_j = family.actions
    return DifferentialGameSpec(
        types=(n_k, n_l),
        t0=0.0,
        x0=np.zeros((n_k, n_l, 0)),
        controls_u=np.arange(n_i, dtype=float)[:, None],
        controls_v=np.arange(n_j, dtype=float)[:, None],
        dynamics=ZeroDynamics(0),
        terminal=LinearTerminal(np.zeros((n_k, n_l, 0)), np.zeros((n_k, n_l))),
        running=PayoffRunning(np.array(family.payoffs)),
        bound=family.bound,
        lipschitz=0.0,
        mixed_controls=True,
    )


@dataclass(frozen=True, eq=False)
class _StackedDynamics:
    spec: DifferentialGameSpec
    block: int

    def __call__(self, t: Time, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        n_k, n_l = self.spec.types
        n = self.spec.state_dimension
        offset = 1 if self.spec.running is not None else 0
        m = x.shape[0]
        out = np.zeros((m, u.shape[0], v.shape[0], n_k * n_l * self.block))
        for k in range(n_k):
            for l in range(n_l):
                start = (k * n_l + l) * self.block
                own = x[:, start + offset : start + self.block]
                if self.spec.running is not None:
                    out[..., start] = self.spec.running(k, l, t, own, u, v)
                if n:
                    out[..., start + offset : start + self.block] = self.spec.dynamics(k, l, t, own, u, v)
        return out


@dataclass(frozen=True, eq=False)
class _StackedTerminal:
    spec: DifferentialGameSpec
    block: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        n_k, n_l = self.spec.types
        offset = 1 if self.spec.running is not None else 0
        out = np.zeros((x.shape[0], n_k, n_l))
        for k in range(n_k):
            for l in range(n_l):
                start = (k * n_l + l) * self.block
                out[:, k, l] = self.spec.terminal(k, l, x[:, start + offset : start + self.block])
                if offset:
                    out[:, k, l] += x[:, start]
        return out


def reduce_to_mayer(spec: DifferentialGameSpec) -> MayerSpec:
    """Stack one (y, x) block per type pair; y integrates the running payoff.

    Without a running payoff the blocks carry x only.
    """
    n_k, n_l = spec.types
    pairs = n_k * n_l
    with_running = spec.running is not None
    block = spec.state_dimension + (1 if with_running else 0)
    z = np.zeros(pairs * block)
    for k in range(n_k):
        for l in range(n_l):
            start = (k * n_l + l) * block + (1 if with_running else 0)
            z[start : start + spec.state_dimension] = spec.x0[k, l]
    factor = np.sqrt((2 if with_running else 1) * pairs)
    return MayerSpec(
        types=spec.types,
        t0=spec.t0,
        z=z,
        controls_u=spec.controls_u,
        controls_v=spec.controls_v,
        dynamics=_StackedDynamics(spec, block),
        terminal=_StackedTerminal(spec, block),
        bound=float(factor * spec.bound),
        lipschitz=float(factor * spec.lipschitz),
        mixed_controls=spec.mixed_controls,
    )


def time_steps(t0: float, dt: float) -> int:
    """Number of dt steps covering [t0, 1]; dt must divide the horizon."""
    steps = int(round((1.0 - t0) / dt))
    if steps < 1 or abs(steps * dt - (1.0 - t0)) > 1e-9:
        raise ValidationError(f"dt={dt} does not divide the horizon [{t0}, 1].")
    return steps


def _control_sequence(indices: np.ndarray, steps: int, name: str) -> np.ndarray:
    seq = np.asarray(indices, dtype=np.int64).reshape(-1)
    if seq.shape[0] != steps:
        raise ValidationError(f"{name} needs one control index per step ({steps}), got {seq.shape[0]}.")
    return seq


def bolza_payoff(
    spec: DifferentialGameSpec,
    k: int,
    l: int,
    u_indices: np.ndarray,
    v_indices: np.ndarray,
    dt: float,
) -> float:
    """Payoff of a piecewise-constant control pair: Euler trajectory, trapezoid running integral."""
    steps = time_steps(spec.t0, dt)
    us = _control_sequence(u_indices, steps, "u_indices")
    vs = _control_sequence(v_indices, steps, "v_indices")
    x = spec.x0[k, l][None, :].copy()
    integral = 0.0
    for i in range(steps):
        t = spec.t0 + i * dt
        u = spec.controls_u[us[i] : us[i] + 1]
        v = spec.controls_v[vs[i] : vs[i] + 1]
        nxt = x + dt * spec.dynamics(k, l, t, x, u, v)[:, 0, 0, :] if spec.state_dimension else x
        if spec.running is not None:
            left = float(spec.running(k, l, t, x, u, v)[0, 0, 0])
            right = float(spec.running(k, l, t + dt, nxt, u, v)[0, 0, 0])
            integral += 0.5 * dt * (left + right)
        x = nxt
    return integral + float(spec.terminal(k, l, x)[0])


def mayer_payoff(
    spec: MayerSpec,
    k: int,
    l: int,
    u_indices: np.ndarray,
    v_indices: np.ndarray,
    dt: float,
) -> float:
    """Terminal payoff of type pair (k, l) along the explicit-Euler augmented trajectory."""
    steps = time_steps(spec.t0, dt)
    us = _control_sequence(u_indices, steps, "u_indices")
    vs = _control_sequence(v_indices, steps, "v_indices")
    x = spec.z[None, :].copy()
    for i in range(steps):
        t = spec.t0 + i * dt
        u = spec.controls_u[us[i] : us[i] + 1]
        v = spec.controls_v[vs[i] : vs[i] + 1]
        x = x + dt * spec.dynamics(t, x, u, v)[:, 0, 0, :]
    return float(spec.payoff(x)[0, k, l])


def _sampled_extremes(fx: np.ndarray, fy: np.ndarray, dist: np.ndarray) -> tuple[float, float]:
    """Largest norm and largest Lipschitz quotient; the last axis is the output vector."""
    size = float(np.max(np.linalg.norm(fx, axis=-1)))
    diff = np.linalg.norm(fx - fy, axis=-1).reshape(dist.shape[0], -1).max(axis=1)
    quotient = diff / np.where(dist > 0, dist, np.inf)
    return size, float(np.max(quotient))


def check_declared_bounds(
    spec: DifferentialGameSpec, *, samples: int = 1000, seed: int = 0
) -> dict[str, float]:
    """Sample |f|, |gamma| and (t, x)-Lipschitz quotients against the declared constants."""
    rng = np.random.default_rng(seed)
    n_k, n_l = spec.types
    n = spec.state_dimension
    u, v = spec.controls_u, spec.controls_v
    radius = spec.bound * (1.0 - spec.t0) + 1.0
    worst_bound = 0.0
    worst_quotient = 0.0
    for k in range(n_k):
        for l in range(n_l):
            t = rng.uniform(spec.t0, 1.0, size=samples)
            s = rng.uniform(spec.t0, 1.0, size=samples)
            x = spec.x0[k, l] + rng.uniform(-radius, radius, size=(samples, n))
            y = spec.x0[k, l] + rng.uniform(-radius, radius, size=(samples, n))
            dist = np.abs(t - s) + np.linalg.norm(x - y, axis=1)
            if n:
                size, quotient = _sampled_extremes(
                    spec.dynamics(k, l, t, x, u, v), spec.dynamics(k, l, s, y, u, v), dist
                )
                worst_bound = max(worst_bound, size)
                worst_quotient = max(worst_quotient, quotient)
            if spec.running is not None:
                size, quotient = _sampled_extremes(
                    spec.running(k, l, t, x, u, v)[..., None],
                    spec.running(k, l, s, y, u, v)[..., None],
                    dist,
                )
                worst_bound = max(worst_bound, size)
                worst_quotient = max(worst_quotient, quotient)
    if worst_bound > spec.bound * BOUND_SLACK + 1e-9:
        raise DeclaredBoundsViolation(
            f"Sampled |f| reaches {worst_bound:.6g}, above the declared bound {spec.bound:.6g}."
        )
    if worst_quotient > spec.lipschitz * BOUND_SLACK + 1e-9:
        raise DeclaredBoundsViolation(
            f"Sampled Lipschitz quotient reaches {worst_quotient:.6g}, "
            f"above the declared constant {spec.lipschitz:.6g}."
        )
    return {"bound": worst_bound, "lipschitz": worst_quotient}
