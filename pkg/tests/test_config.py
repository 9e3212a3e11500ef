from pathlib import Path

import pytest

from cavvex.config import (
    CONFIG_REGISTRY,
    ConfigError,
    SolverSettings,
    bootstrap_env_file,
    load_config,
    resolve_settings,
)


@pytest.fixture(autouse=True)
def _blank_registry_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for var in CONFIG_REGISTRY:
        monkeypatch.setenv(var.name, "")


def _write_env(path: Path, values: dict[str, str]) -> None:
    lines = [f"{key}={value}" for key, value in values.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_bootstrap_creates_env_with_registry_keys(tmp_path: Path) -> None:
    env_path = tmp_path / ".env"
    added = bootstrap_env_file(env_path)

    assert env_path.exists()
    assert added == [var.name for var in CONFIG_REGISTRY]
    content = env_path.read_text(encoding="utf-8")
    for var in CONFIG_REGISTRY:
        assert f"{var.name}=" in content


def test_bootstrap_preserves_existing_values_and_adds_missing(tmp_path: Path) -> None:
    env_path = tmp_path / ".env"
    first = CONFIG_REGISTRY[0].name
    _write_env(env_path, {first: "12"})

    added = bootstrap_env_file(env_path)

    assert first not in added
    content = env_path.read_text(encoding="utf-8")
    assert content.count(f"{first}=") == 1
    assert f"{first}=12" in content
    for var in CONFIG_REGISTRY[1:]:
        assert var.name in added


def test_load_config_skips_empty_keys(tmp_path: Path) -> None:
    env_path = tmp_path / ".env"
    bootstrap_env_file(env_path)

    assert load_config(env_path) == {}


def test_process_environment_wins_over_the_file(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    env_path = tmp_path / ".env"
    _write_env(env_path, {"CAVVEX_GRID_M": "7", "CAVVEX_DT": "0.05"})
    monkeypatch.setenv("CAVVEX_GRID_M", "9")

    loaded = load_config(env_path)

    assert loaded == {"CAVVEX_GRID_M": "9", "CAVVEX_DT": "0.05"}


def test_settings_resolve_flags_over_spec_over_environment() -> None:
    settings = resolve_settings(
        {"CAVVEX_GRID_M": "7", "CAVVEX_DT": "0.05", "CAVVEX_SEED": "4"},
        {"grid_m": 12, "seed": 5},
        {"grid_m": 30},
    )

    assert settings.grid_m == 30
    assert settings.seed == 5
    assert settings.dt == 0.05
    assert settings.tol_mz == SolverSettings().tol_mz


def test_dx_accepts_auto() -> None:
    assert resolve_settings({"CAVVEX_DX": "auto"}).dx is None
    assert resolve_settings({"CAVVEX_DX": "0.01"}).dx == 0.01
    assert resolve_settings({"CAVVEX_DX": "0.01"}, {"dx": None}).dx is None


@pytest.mark.parametrize(
    ("env", "spec_config"),
    [
        ({"CAVVEX_DT": "fast"}, None),
        (None, {"dt": 2.0}),
        (None, {"grid_m": True}),
        (None, {"colour": "blue"}),
    ],
)
def test_bad_settings_raise_config_errors(env: dict[str, str] | None, spec_config: dict[str, object] | None) -> None:
    with pytest.raises(ConfigError):
        resolve_settings(env, spec_config)
