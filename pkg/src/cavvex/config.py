from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

from dotenv import dotenv_values, load_dotenv


class ConfigError(RuntimeError):
    """Raised when configuration or input validation fails."""


@dataclass(frozen=True)
class ConfigVar:
    name: str
    description: str
    setting: str
    parse: Callable[[str], object]
    example: str | None = None


def _parse_optional_float(raw: str) -> float | None:
    if raw.strip().lower() in {"", "none", "auto"}:
        return None
    return float(raw)


CONFIG_REGISTRY: tuple[ConfigVar, ...] = (
    ConfigVar(
        name="CAVVEX_GRID_M",
        description="Belief grid resolution m (points are multiples of 1/m).",
        setting="grid_m",
        parse=int,
        example="20",
    ),
    ConfigVar(
        name="CAVVEX_DT",
        description="Time step of the HJ scheme; must divide the horizon.",
        setting="dt",
        parse=float,
        example="0.02",
    ),
    ConfigVar(
        name="CAVVEX_DX",
        description="State lattice spacing; 'auto' picks the smallest CFL-compliant value.",
        setting="dx",
        parse=_parse_optional_float,
        example="auto",
    ),
    ConfigVar(
        name="CAVVEX_TOL_MZ",
        description="Sup-norm stopping tolerance of the Mertens-Zamir iteration.",
        setting="tol_mz",
        parse=float,
        example="1e-8",
    ),
    ConfigVar(
        name="CAVVEX_TOL_LP",
        description="Pivot tolerance of the dense simplex solver.",
        setting="tol_lp",
        parse=float,
        example="1e-9",
    ),
    ConfigVar(
        name="CAVVEX_SEED",
        description="Seed for every sampled probe and conjugate draw.",
        setting="seed",
        parse=int,
        example="0",
    ),
    ConfigVar(
        name="CAVVEX_MAX_ITERATIONS",
        description="Iteration budget of each Mertens-Zamir bracket.",
        setting="max_iterations",
        parse=int,
        example="10000",
    ),
    ConfigVar(
        name="CAVVEX_BRACKET_GAP",
        description="Largest accepted gap between the upper and lower brackets.",
        setting="bracket_gap",
        parse=float,
        example="1e-6",
    ),
    ConfigVar(
        name="CAVVEX_N_MAX",
        description="Longest repeated game solved by vn and xcheck.",
        setting="n_max",
        parse=int,
        example="3",
    ),
    ConfigVar(
        name="CAVVEX_ISAACS_TOL",
        description="Largest accepted gap between upper and lower Hamiltonians.",
        setting="isaacs_tol",
        parse=float,
        example="1e-9",
    ),
    ConfigVar(
        name="CAVVEX_GRID_POINT_CAP",
        description="Largest number of points any grid or lattice may hold.",
        setting="grid_point_cap",
        parse=int,
        example="10000000",
    ),
)


@dataclass(frozen=True)
class SolverSettings:
    grid_m: int = 20
    dt: float = 0.02
    dx: float | None = None
    tol_mz: float = 1e-8
    tol_lp: float = 1e-9
    seed: int = 0
    max_iterations: int = 10_000
    bracket_gap: float = 1e-6
    n_max: int = 3
    isaacs_tol: float = 1e-9
    grid_point_cap: int = 10_000_000

    def __post_init__(self) -> None:
        problems: list[str] = []
        if self.grid_m < 1:
            problems.append("grid_m must be at least 1")
        if not 0.0 < self.dt <= 1.0:
            problems.append("dt must lie in (0, 1]")
        if self.dx is not None and self.dx <= 0.0:
            problems.append("dx must be positive")
        for name in ("tol_mz", "tol_lp", "bracket_gap", "isaacs_tol"):
            if getattr(self, name) <= 0.0:
                problems.append(f"{name} must be positive")
        if self.max_iterations < 1:
            problems.append("max_iterations must be at least 1")
        if self.n_max < 1:
            problems.append("n_max must be at least 1")
        if self.grid_point_cap < 1:
            problems.append("grid_point_cap must be at least 1")
        if problems:
            raise ConfigError("Invalid solver settings: " + "; ".join(problems) + ".")


SETTING_NAMES: tuple[str, ...] = tuple(f.name for f in fields(SolverSettings))


def _render_template_entry(var: ConfigVar) -> str:
    lines = [f"# {var.description}"]
    if var.example:
        lines.append(f"# Example: {var.example}")
    lines.append(f"{var.name}=")
    return "\n".join(lines)


def bootstrap_env_file(env_path: Path) -> list[str]:
    """Create or update .env with missing keys from the registry.

    Existing values are preserved. Missing keys are appended with instructions.
    Returns the list of keys that were added.
    """
    env_path.parent.mkdir(parents=True, exist_ok=True)

    if not env_path.exists():
        header = [
            "# cavvex solver defaults",
            "# Empty values fall back to built-in defaults.",
            "",
        ]
        env_path.write_text("\n".join(header), encoding="utf-8")

    existing = dotenv_values(env_path)
    added: list[str] = []
    blocks: list[str] = []

    for var in CONFIG_REGISTRY:
        if var.name in existing:
            continue
        added.append(var.name)
        blocks.append(_render_template_entry(var))

    if blocks:
        original = env_path.read_text(encoding="utf-8")
        suffix = "\n" if original and not original.endswith("\n") else ""
        appended = "\n\n".join(blocks) + "\n"
        env_path.write_text(f"{original}{suffix}{appended}", encoding="utf-8")

    return added


def load_config(env_path: Path | None = None) -> dict[str, str]:
    """Read registry values from the process environment and an optional .env.

    Process environment wins over the file. Keys without a value are omitted.
    """
    target = env_path or Path(".env")
    parsed: dict[str, str | None] = {}
    if target.exists():
        load_dotenv(target)
        parsed = dotenv_values(target)

    resolved: dict[str, str] = {}
    for var in CONFIG_REGISTRY:
        env_value = (os.getenv(var.name) or "").strip()
        file_value = (parsed.get(var.name) or "").strip()
        value = env_value or file_value
        if value:
            resolved[var.name] = value
    return resolved


def _coerce(name: str, raw: object, parse: Callable[[str], object]) -> object:
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise ConfigError(f"Setting {name} must be numeric, got {raw!r}.")
    try:
        return parse(str(raw))
    except ValueError as exc:
        raise ConfigError(f"Setting {name} has an unparseable value {raw!r}.") from exc


def resolve_settings(
    env: dict[str, str] | None = None,
    spec_config: dict[str, object] | None = None,
    overrides: dict[str, object] | None = None,
) -> SolverSettings:
    """Merge defaults, environment, spec-file config and CLI overrides, in that order."""
    parsers = {var.setting: var.parse for var in CONFIG_REGISTRY}
    values: dict[str, object] = {}

    for var in CONFIG_REGISTRY:
        if env and var.name in env:
            values[var.setting] = _coerce(var.name, env[var.name], var.parse)

    for layer, label in ((spec_config, "config"), (overrides, "flag")):
        for key, raw in (layer or {}).items():
            if key not in parsers:
                raise ConfigError(f"Unknown setting in {label}: {key}.")
            if raw is None:
                if label == "config" and key == "dx":
                    values[key] = None
                continue
            values[key] = _coerce(f"{label}.{key}", raw, parsers[key])

    return SolverSettings(**values)  # type: ignore[arg-type]
