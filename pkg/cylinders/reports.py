"""Writers for masks, fields, histories and summaries, plus the run ledger.

Every writer produces byte-stable output for identical inputs: CSV floats
use ``.17g`` and JSON floats use Python's shortest round-trip repr.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from django.conf import settings
from django.db import OperationalError
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .contours import contour_length, signed_distance
from .errors import InvalidParameterError
from .geometry import CrossSection, CylinderGrid, DomainMask, boundary_decompose, volume
from .optimizer import StepRecord
from .torsion import ScalarField, TorsionSolution


log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iter", "energy", "volume", "c0_estimate", "gamma_length")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def jsonable(value):
    """Convert numpy scalars, dataclasses, enums and paths into JSON-ready values."""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, ensure_ascii=False) + "\n")
    return path


def gamma_length(mask: DomainMask) -> float:
    """Free-boundary measure: contour length in 2-D, staircase facet area otherwise."""
    if mask.grid.dim == 2:
        return contour_length(mask.grid, signed_distance(mask))
    return boundary_decompose(mask).free_measure


def solution_summary(solution: TorsionSolution) -> dict:
    """The JSON record of one torsion solve."""
    summary = {
        "volume": volume(solution.mask),
        "energy": solution.energy,
        "energy_dirichlet": solution.energy_dirichlet,
        "residual": solution.residual,
        "iterations": solution.iterations,
        "max_u": solution.u.max(),
    }
    try:
        summary["c0_estimate"] = solution.boundary_gradient.c0_estimate
    except InvalidParameterError:
        summary["c0_estimate"] = None
    summary["gamma_length"] = gamma_length(solution.mask)
    return summary


def write_mask_text(path: Path, mask: DomainMask) -> Path:
    """``grid <nx> <nz> <h_g> <a> <L> <mode>`` then one 0/1 row per transverse index."""
    grid = mask.grid
    if grid.dim != 2:
        raise InvalidParameterError("the mask text format holds N = 2 masks only")
    nx, nz = grid.shape
    a = grid.cross_section.widths[0]
    lines = [f"grid {nx} {nz} {_fmt(grid.h)} {_fmt(a)} {_fmt(grid.L)} {grid.mode}"]
    lines += ["".join("1" if cell else "0" for cell in row) for row in mask.inside]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mask_text(path: Path) -> DomainMask:
    lines = Path(path).read_text().split()
    if len(lines) < 7 or lines[0] != "grid":
        raise InvalidParameterError(f"{path} is not a mask file")
    nx, nz = int(lines[1]), int(lines[2])
    a, L, mode = float(lines[4]), float(lines[5]), lines[6]
    if mode not in ("full", "half"):
        raise InvalidParameterError(f"unknown grid mode {mode!r} in {path}")
    rows = lines[7:]
    if len(rows) != nx or any(len(row) != nz for row in rows):
        raise InvalidParameterError(f"{path} does not hold a {nx}x{nz} mask")
    grid = CylinderGrid(CrossSection.interval(a), L, (nx, nz), mode == "half")
    inside = np.array([[ch == "1" for ch in row] for row in rows], dtype=bool)
    return DomainMask(grid, inside)


def write_field_csv(path: Path, field: ScalarField, name: str = "value") -> Path:
    """Rows ``x1, xN, value`` over every cell; 2-D fields only."""
    grid = field.grid
    if grid.dim != 2:
        raise InvalidParameterError("field CSV export holds N = 2 fields only")
    points = grid.cell_points()
    values = field.values.ravel()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x1", "xN", name])
        for (x1, xn), v in zip(points, values):
            writer.writerow([_fmt(x1), _fmt(xn), _fmt(v)])
    return path


def write_field_vtk(path: Path, field: ScalarField, name: str = "u") -> Path:
    """Legacy ASCII VTK structured points with the field as cell data."""
    grid = field.grid
    dims = [n + 1 for n in grid.shape] + [1] * (3 - grid.dim)
    spacing = list(grid.spacing) + [1.0] * (3 - grid.dim)
    origin = [0.0] * (grid.dim - 1) + [grid.z_min] + [0.0] * (3 - grid.dim)
    # VTK walks x fastest.
    values = np.asarray(field.values).ravel(order="F")
    lines = [
        "# vtk DataFile Version 3.0",
        f"torsion field {name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(n) for n in dims),
        "ORIGIN " + " ".join(_fmt(o) for o in origin),
        "SPACING " + " ".join(_fmt(s) for s in spacing),
        f"CELL_DATA {values.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines += [_fmt(v) for v in values]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_history_csv(path: Path, records: list[StepRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for r in records:
            writer.writerow(
                [r.iteration]
                + [_fmt(v) for v in (r.energy, r.volume, r.c0_estimate, r.gamma_length)]
            )
    return path


def write_table_csv(path: Path, rows: list[dict]) -> Path:
    """Write dict rows with the first row's keys as the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0]) if rows else []
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    return str(value)


@retry(
    stop=stop_after_attempt(5),
    wait=wait_exponential(multiplier=0.2, max=5),
    retry=retry_if_exception_type(OperationalError),
    reraise=True,
)
def _create_run(command: str, config: dict, summary: dict, exit_code: int, elapsed_ms: float):
    from .models import Run  # local import: models need the app registry

    return Run.objects.create(
        command=command,
        config=jsonable(config),
        summary=jsonable(summary),
        exit_code=exit_code,
        elapsed_ms=elapsed_ms,
    )


def persist_run(
    command: str,
    config: dict,
    summary: dict,
    exit_code: int,
    elapsed_ms: float,
    *,
    enabled: bool | None = None,
):
    """Best-effort: record a run in the ledger. Never raises to the caller."""
    enabled = enabled if enabled is not None else settings.CYLINDERS["PERSIST_RUNS"]
    if not enabled:
        return None
    try:
        return _create_run(command, config, summary, exit_code, elapsed_ms)
    except Exception:  # noqa: BLE001
        log.exception("failed to persist run ledger entry for %s", command)
        return None
