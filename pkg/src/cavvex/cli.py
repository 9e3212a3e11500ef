from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from cavvex.config import (
    CONFIG_REGISTRY,
    ConfigError,
    SolverSettings,
    bootstrap_env_file,
    load_config,
    resolve_settings,
)
from cavvex.dual_check import check_dual_solution, hamiltonian_regularity_probe
from cavvex.dynamics import (
    MayerSpec,
    check_declared_bounds,
    reduce_to_mayer,
    repeated_game_embedding,
    time_steps,
)
from cavvex.errors import HypothesisViolation, SolverError, ValidationError, exit_code_for
from cavvex.games import nonrevealing_table
from cavvex.grids import SimplexGrid, interpolate, simplex_grid
from cavvex.hji import (
    HJSettings,
    ValueGrid,
    build_context,
    embedding_stationarity,
    solve_value,
)
from cavvex.mertens_zamir import MZConfig, solve_mz, verify_mz
from cavvex.options import build_parser, setting_overrides
from cavvex.output import (
    inputs_digest,
    read_table,
    read_value_grid,
    write_columns,
    write_initial_slice,
    write_json,
    write_report,
    write_sequence,
    write_table,
    write_value_grid,
)
from cavvex.repeated import EXTENSIVE_SIZE_CAP, extensive_size, value_n, value_sequence
from cavvex.report import Check, RunReport, VerificationReport
from cavvex.spec_file import GameSpecFile, parse_spec

XCHECK_GAP_TOLERANCE = 5e-2


def _mayer(spec: GameSpecFile) -> MayerSpec:
    if spec.differential is None:
        raise ValidationError("The hj command needs a 'differential' block in the spec.")
    check_declared_bounds(spec.differential)
    mayer = reduce_to_mayer(spec.differential)
    hamiltonian_regularity_probe(mayer)
    return mayer


def _belief_grid(spec: GameSpecFile, settings: SolverSettings) -> SimplexGrid:
    n_k, n_l = spec.family.types
    return simplex_grid(n_k * n_l, settings.grid_m, shape=(n_k, n_l), cap=settings.grid_point_cap)


def _record(report: RunReport, verification: VerificationReport) -> None:
    report.verification.append(verification.to_dict())
    print(f"Verification {verification.subject}: {'passed' if verification.passed else 'failed'}")
    for check in verification.failures():
        print(f"  {check.name}: residual {check.residual:.3e} > {check.tolerance:.1e}")


def _cmd_u(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport) -> None:
    table = nonrevealing_table(spec.family, _belief_grid(spec, settings))
    write_table(out / "u_table.csv", table, spec.pair_labels)
    at_belief = interpolate(table, spec.belief.flat)
    report.outputs.update({"u_table": "u_table.csv", "grid_points": table.grid.size, "u_at_belief": at_belief})
    print(f"Grid points: {table.grid.size}")
    print(f"u(pi): {at_belief!r}")


def _cmd_mz(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport, verify: bool) -> None:
    solution = solve_mz(spec.family, MZConfig.from_settings(settings))
    write_table(out / "mz_W.csv", solution.W, spec.pair_labels)
    at_belief = interpolate(solution.W, spec.belief.flat)
    report.outputs.update(
        {
            "mz_W": "mz_W.csv",
            "grid_points": solution.W.grid.size,
            "W_at_belief": at_belief,
            "iterations": list(solution.iterations),
            "residuals": solution.residuals,
        }
    )
    print(f"Grid points: {solution.W.grid.size}")
    print(f"Iterations (upper, lower): {solution.iterations[0]}, {solution.iterations[1]}")
    print(f"Bracket gap: {solution.bracket_gap:.3e}")
    print(f"W(pi): {at_belief!r}")
    if verify:
        _record(report, verify_mz(solution.W, spec.family, seed=settings.seed))


def _cmd_vn(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport) -> None:
    values = value_sequence(spec.family, spec.belief, settings.n_max, tol=settings.tol_lp)
    write_sequence(out / "vn_sequence.csv", values)
    report.outputs.update({"vn_sequence": "vn_sequence.csv", "values": values})
    for n, value in enumerate(values, start=1):
        print(f"v_{n}(pi): {value!r}")
    if spec.evaluation is not None:
        custom = value_n(spec.family, spec.belief, spec.evaluation, tol=settings.tol_lp).value
        report.outputs["evaluation_value"] = custom
        print(f"v_theta(pi): {custom!r}")


def _cmd_hj(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport, verify: bool) -> None:
    mayer = _mayer(spec)
    grid = solve_value(mayer, HJSettings.from_settings(settings))
    full = write_value_grid(out / "hj_value.csv", grid, spec.pair_labels)
    write_initial_slice(out / "hj_initial.csv", grid, spec.pair_labels)
    at_belief = interpolate(grid.initial_table(), spec.belief.flat)
    report.outputs.update(
        {
            "hj_value": "hj_value.csv",
            "hj_value_scope": "full" if full else "initial-slice",
            "hj_initial": "hj_initial.csv",
            "lattice_nodes": grid.lattice.size,
            "lattice_spacing": grid.lattice.spacing,
            "time_steps": int(grid.times.shape[0]) - 1,
            "V_at_belief": at_belief,
        }
    )
    print(f"Lattice nodes: {grid.lattice.size}")
    print(f"Time steps: {grid.times.shape[0] - 1}")
    print(f"Stored grid: {'full' if full else 'initial slice'}")
    print(f"V(t0, z, pi): {at_belief!r}")
    if verify:
        _record(report, check_dual_solution(grid, mayer, seed=settings.seed))


def _hj_template(mayer: MayerSpec, settings: SolverSettings) -> ValueGrid:
    hj_settings = HJSettings.from_settings(settings)
    ctx = build_context(mayer, hj_settings)
    steps = time_steps(mayer.t0, hj_settings.dt)
    times = mayer.t0 + hj_settings.dt * np.arange(steps + 1)
    times[-1] = 1.0
    return ValueGrid(
        times=times,
        lattice=ctx.lattice,
        beliefs=ctx.beliefs,
        values=np.empty(0),
        dt=hj_settings.dt,
        diffusion=ctx.diffusion,
        complete=True,
    )


def _cmd_verify(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport) -> None:
    found = False
    if (out / "mz_W.csv").exists():
        found = True
        table = read_table(out / "mz_W.csv", _belief_grid(spec, settings))
        _record(report, verify_mz(table, spec.family, seed=settings.seed))
    if (out / "hj_value.csv").exists() and spec.differential is not None:
        found = True
        mayer = _mayer(spec)
        grid = read_value_grid(out / "hj_value.csv", _hj_template(mayer, settings))
        _record(report, check_dual_solution(grid, mayer, seed=settings.seed))
    if not found:
        raise ValidationError(f"Nothing to verify in {out}: run mz or hj first.")


def _cmd_xcheck(spec: GameSpecFile, settings: SolverSettings, out: Path, report: RunReport) -> None:
    family = spec.family
    solution = solve_mz(family, MZConfig.from_settings(settings))
    embedding = reduce_to_mayer(repeated_game_embedding(family))
    grid = solve_value(embedding, HJSettings.from_settings(settings))
    initial = grid.values[0, grid.lattice.center_index]
    u = nonrevealing_table(family, solution.W.grid).values
    gaps = np.abs(initial - solution.W.values)
    write_columns(
        out / "xcheck.csv",
        solution.W.grid,
        {"u": u, "W": solution.W.values, "V": initial, "gap": gaps},
        spec.pair_labels,
    )
    stationarity = embedding_stationarity(grid, solution.W)
    checks = [Check("mz_hj_gap", float(gaps.max(initial=0.0)), XCHECK_GAP_TOLERANCE)]
    checks += [Check(f"stationarity_{name}", value, XCHECK_GAP_TOLERANCE) for name, value in stationarity.items()]
    report.outputs.update(
        {
            "xcheck": "xcheck.csv",
            "mz_hj_gap": float(gaps.max(initial=0.0)),
            "stationarity": stationarity,
        }
    )
    print(f"Grid points: {solution.W.grid.size}")
    print(f"|W - V| max: {gaps.max(initial=0.0):.3e}")
    for name, value in stationarity.items():
        print(f"Stationarity {name}: {value:.3e}")

    if extensive_size(family, settings.n_max) <= EXTENSIVE_SIZE_CAP:
        values = value_sequence(family, spec.belief, settings.n_max, tol=settings.tol_lp)
        w_at = interpolate(solution.W, spec.belief.flat)
        vn_gaps = [abs(v - w_at) for v in values]
        report.outputs.update({"values": values, "vn_gaps": vn_gaps})
        print(f"|v_n - W| at pi: {', '.join(f'{g:.3e}' for g in vn_gaps)}")
    else:
        print(f"Skipped vn: {settings.n_max}-stage game exceeds the size cap")
    _record(report, VerificationReport(subject="xcheck", checks=tuple(checks)))


def _config_command(args: argparse.Namespace) -> int:
    env_path = Path(args.env)
    if args.config_command == "init":
        added = bootstrap_env_file(env_path)
        print(f"Env file: {env_path}")
        print(f"Added keys: {', '.join(added) if added else 'none'}")
        return 0
    settings = resolve_settings(load_config(env_path))
    registry = {var.setting: var.name for var in CONFIG_REGISTRY}
    for name, value in asdict(settings).items():
        print(f"{registry.get(name, name)}: {value}")
    return 0


def _error_block(exc: BaseException) -> dict[str, object]:
    block: dict[str, object] = {
        "type": type(exc).__name__,
        "message": str(exc),
        "exit_code": exit_code_for(exc),
    }
    errors = getattr(exc, "errors", None)
    if errors:
        block["errors"] = list(errors)
    residuals = getattr(exc, "residuals", None)
    if residuals:
        block["residuals"] = {name: float(value) for name, value in residuals.items()}
    return {"error": block}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.action == "config":
        return _config_command(args)

    out = Path(args.out)
    try:
        if args.spec is None or args.command is None:
            raise ConfigError("Both --spec and --command are required (or use `cavvex config`).")
        spec_path = Path(args.spec)
        if not spec_path.is_file():
            raise ConfigError(f"Spec file not found: {spec_path}")
        text = spec_path.read_text(encoding="utf-8")
        spec = parse_spec(text)
        settings = resolve_settings(load_config(Path(".env")), spec.config, setting_overrides(args))
        out.mkdir(parents=True, exist_ok=True)
        report = RunReport(command=args.command, inputs_digest=inputs_digest(text), config=asdict(settings))
        print(f"Command: {args.command}")
        print(f"Types: {len(spec.labels_k)} x {len(spec.labels_l)}, actions: {len(spec.labels_i)} x {len(spec.labels_j)}")

        started = time.perf_counter()
        if args.command == "u":
            _cmd_u(spec, settings, out, report)
        elif args.command == "mz":
            _cmd_mz(spec, settings, out, report, args.verify)
        elif args.command == "vn":
            _cmd_vn(spec, settings, out, report)
        elif args.command == "hj":
            _cmd_hj(spec, settings, out, report, args.verify)
        elif args.command == "verify":
            _cmd_verify(spec, settings, out, report)
        else:
            _cmd_xcheck(spec, settings, out, report)
        report.timings[args.command] = time.perf_counter() - started

        target = write_report(out, report)
        print(f"Report: {target}")
        failed = [v["subject"] for v in report.verification if not v["passed"]]
        if failed and (args.verify or args.command == "verify"):
            raise SolverError(f"Verification failed for: {', '.join(failed)}.")
        return 0
    except (ConfigError, SolverError, HypothesisViolation, OSError) as exc:
        block = _error_block(exc)
        print(json.dumps(block, indent=2, sort_keys=True), file=sys.stderr)
        try:
            write_json(out / "error.json", block)
        except OSError:
            pass
        return exit_code_for(exc)


def main() -> None:
    try:
        raise SystemExit(run())
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        raise SystemExit(2) from exc
