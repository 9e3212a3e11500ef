from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from cavvex.errors import ValidationError
from cavvex.grids import SimplexGrid, ValueTable
from cavvex.hji import ValueGrid
from cavvex.report import RunReport

FULL_GRID_ROW_LIMIT = 2_000_000
COORDINATE_TOLERANCE = 1e-12


def format_float(value: float) -> str:
    """Shortest round-trip decimal, so repeated runs produce identical bytes."""
    return repr(float(value))


def inputs_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def belief_columns(pair_labels: Sequence[str]) -> list[str]:
    return [f"pi[{label}]" for label in pair_labels]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float | int | str]]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(x) if isinstance(x, (float, np.floating)) else x for x in row]
            )
            count += 1
    return count


def write_table(path: Path, table: ValueTable, pair_labels: Sequence[str]) -> int:
    """(pi..., value) rows in canonical grid order."""
    points = table.grid.points
    values = table.values
    rows = ([*map(float, points[i]), float(values[i])] for i in range(points.shape[0]))
    return write_csv(path, [*belief_columns(pair_labels), "value"], rows)


def write_columns(path: Path, grid: SimplexGrid, columns: dict[str, np.ndarray], pair_labels: Sequence[str]) -> int:
    points = grid.points
    names = list(columns)
    rows = (
        [*map(float, points[i]), *(float(columns[name][i]) for name in names)]
        for i in range(points.shape[0])
    )
    return write_csv(path, [*belief_columns(pair_labels), *names], rows)


def write_sequence(path: Path, values: Sequence[float]) -> int:
    return write_csv(path, ["n", "value"], ([n, float(v)] for n, v in enumerate(values, start=1)))


def _state_columns(dimension: int) -> list[str]:
    return [f"x{i}" for i in range(dimension)]


def _grid_rows(grid: ValueGrid, slices: Sequence[int]) -> Iterable[list[float]]:
    nodes = grid.lattice.nodes
    beliefs = grid.beliefs.points
    for s in slices:
        t = float(grid.times[s])
        block = grid.values[s]
        for node in range(nodes.shape[0]):
            x = [float(c) for c in nodes[node]]
            for b in range(beliefs.shape[0]):
                yield [t, *x, *map(float, beliefs[b]), float(block[node, b])]


def write_value_grid(path: Path, grid: ValueGrid, pair_labels: Sequence[str]) -> bool:
    """Write every slice when the grid fits the row limit, else the initial slice. Returns True for full."""
    per_slice = grid.lattice.size * grid.beliefs.size
    full = grid.complete and per_slice * grid.values.shape[0] <= FULL_GRID_ROW_LIMIT
    slices = list(range(grid.values.shape[0])) if full else [0]
    header = ["t", *_state_columns(grid.lattice.dimension), *belief_columns(pair_labels), "value"]
    write_csv(path, header, _grid_rows(grid, slices))
    return full


def write_initial_slice(path: Path, grid: ValueGrid, pair_labels: Sequence[str]) -> int:
    nodes = grid.lattice.nodes
    beliefs = grid.beliefs.points
    rows = (
        [*map(float, nodes[node]), *map(float, beliefs[b]), float(grid.values[0, node, b])]
        for node in range(nodes.shape[0])
        for b in range(beliefs.shape[0])
    )
    return write_csv(path, [*_state_columns(grid.lattice.dimension), *belief_columns(pair_labels), "value"], rows)


def _read_rows(path: Path) -> tuple[list[str], np.ndarray]:
    if not path.exists():
        raise ValidationError(f"Missing stored output: {path}")
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"Stored output is empty: {path}")
        try:
            data = np.array([[float(x) for x in row] for row in reader], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"Stored output has a non-numeric entry: {path}") from exc
    return header, data.reshape(-1, len(header))


def read_table(path: Path, grid: SimplexGrid) -> ValueTable:
    """Load a (pi..., value) CSV back onto `grid`, checking every coordinate."""
    _, data = _read_rows(path)
    if data.shape[0] != grid.size or data.shape[1] != grid.dimension + 1:
        raise ValidationError(f"{path} does not match a grid of {grid.size} points in dimension {grid.dimension}.")
    if np.max(np.abs(data[:, :-1] - grid.points), initial=0.0) > COORDINATE_TOLERANCE:
        raise ValidationError(f"{path} was written on a different belief grid.")
    return ValueTable(grid, data[:, -1].copy())


def read_value_grid(path: Path, template: ValueGrid) -> ValueGrid:
    """Load a full hj_value.csv onto the lattices of `template` (whose values are ignored)."""
    _, data = _read_rows(path)
    n_slices = template.times.shape[0]
    nodes, beliefs = template.lattice.nodes, template.beliefs.points
    per_slice = nodes.shape[0] * beliefs.shape[0]
    width = 1 + nodes.shape[1] + beliefs.shape[1] + 1
    if data.shape != (n_slices * per_slice, width):
        raise ValidationError(
            f"{path} holds {data.shape[0]} rows; verification needs the full grid of {n_slices * per_slice}."
        )
    expected_t = np.repeat(template.times, per_slice)
    expected_x = np.tile(np.repeat(nodes, beliefs.shape[0], axis=0), (n_slices, 1))
    expected_pi = np.tile(beliefs, (n_slices * nodes.shape[0], 1))
    coords = np.hstack([expected_t[:, None], expected_x, expected_pi])
    if np.max(np.abs(data[:, :-1] - coords), initial=0.0) > COORDINATE_TOLERANCE:
        raise ValidationError(f"{path} was written on a different time, state or belief grid.")
    values = data[:, -1].reshape(n_slices, nodes.shape[0], beliefs.shape[0])
    return ValueGrid(
        times=template.times,
        lattice=template.lattice,
        beliefs=template.beliefs,
        values=values,
        dt=template.dt,
        diffusion=template.diffusion,
        complete=True,
    )


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_report(out_dir: Path, report: RunReport) -> Path:
    target = out_dir / "report.json"
    write_json(target, report.to_dict())
    return target
