"""Tests for the file writers and the run ledger."""

from __future__ import annotations

import json
import math
from unittest.mock import MagicMock

import numpy as np
import pytest
from django.db import OperationalError
from tenacity import wait_none

from cylinders import reports
from cylinders.errors import InvalidParameterError
from cylinders.geometry import BoundedCylinder, CrossSection, HalfDisk, build_grid, mask_from_shape
from cylinders.optimizer import StepRecord
from cylinders.oracles import Verdict
from cylinders.torsion import ScalarField, solve_torsion


UNIT = CrossSection.interval(1.0)


def test_jsonable_handles_numpy_enums_and_non_finite_values(tmp_path):
    payload = {
        "energy": np.float64(-0.1),
        "count": np.int64(3),
        "flag": np.bool_(True),
        "verdict": Verdict.LOCAL_MIN,
        "ratio": math.inf,
        "cells": np.array([1, 2]),
        "path": tmp_path,
    }
    data = reports.jsonable(payload)
    assert data == {
        "energy": -0.1,
        "count": 3,
        "flag": True,
        "verdict": "local_min",
        "ratio": None,
        "cells": [1, 2],
        "path": str(tmp_path),
    }
    path = reports.write_json(tmp_path / "out" / "summary.json", payload)
    assert json.loads(path.read_text())["verdict"] == "local_min"


def test_mask_text_roundtrip(tmp_path):
    grid = build_grid(UNIT, 1.5, 16, half_mode=True)
    mask = mask_from_shape(grid, HalfDisk(r=0.5))
    path = reports.write_mask_text(tmp_path / "mask.txt", mask)
    lines = path.read_text().splitlines()
    assert lines[0] == "grid 16 24 0.0625 1 1.5 half"
    assert len(lines) == 17
    restored = reports.read_mask_text(path)
    assert restored.grid == grid
    assert restored.same_cells(mask)


def test_read_mask_text_rejects_malformed_files(tmp_path):
    path = tmp_path / "mask.txt"
    path.write_text("grid 2 2 0.5 1 1 full\n01\n")
    with pytest.raises(InvalidParameterError):
        reports.read_mask_text(path)
    path.write_text("not a mask\n")
    with pytest.raises(InvalidParameterError):
        reports.read_mask_text(path)


def test_field_csv_has_one_row_per_cell(tmp_path):
    grid = build_grid(UNIT, 1.0, 8)
    solution = solve_torsion(grid, mask_from_shape(grid, BoundedCylinder(h=0.5)))
    path = reports.write_field_csv(tmp_path / "field.csv", solution.u)
    rows = path.read_text().splitlines()
    assert rows[0] == "x1,xN,value"
    assert len(rows) == 1 + grid.size
    x1, xn, value = rows[1].split(",")
    assert float(x1) == 0.0625 and float(xn) == -0.9375 and float(value) == 0.0


def test_field_vtk_header(tmp_path):
    grid = build_grid(UNIT, 1.0, 8)
    field = ScalarField(grid, np.arange(grid.size, dtype=float).reshape(grid.shape))
    lines = reports.write_field_vtk(tmp_path / "u.vtk", field).read_text().splitlines()
    assert lines[4] == "DIMENSIONS 9 17 1"
    assert lines[5] == "ORIGIN 0 -1 0"
    assert lines[7] == "CELL_DATA 128"
    # x runs fastest: the second value is cell (1, 0).
    assert float(lines[11]) == field.values[1, 0]


def test_history_csv_columns(tmp_path):
    records = [StepRecord(0, -0.01, 0.5, 0.08, 1.6, 0.001, 0.3)]
    text = reports.write_history_csv(tmp_path / "history.csv", records).read_text()
    header, row = text.splitlines()
    assert header == "iter,energy,volume,c0_estimate,gamma_length"
    assert row.split(",")[0] == "0"
    assert float(row.split(",")[1]) == -0.01


def test_table_csv_formats_cells(tmp_path):
    rows = [{"c": 0.5, "verdict": Verdict.NOT_LOCAL_MIN, "connected": True, "half_disk": None}]
    text = reports.write_table_csv(tmp_path / "sweep.csv", rows).read_text()
    assert text.splitlines() == ["c,verdict,connected,half_disk", "0.5,not_local_min,true,"]


def test_gamma_length_uses_contours_in_the_plane():
    grid = build_grid(UNIT, 1.5, 16)
    mask = mask_from_shape(grid, BoundedCylinder(h=0.5))
    assert reports.gamma_length(mask) == pytest.approx(2.0)

    box = build_grid(CrossSection.box(1.0, 1.0), 1.0, 8)
    slab = mask_from_shape(box, BoundedCylinder(h=0.5))
    assert reports.gamma_length(slab) == pytest.approx(2.0)


def test_persist_run_is_off_unless_enabled():
    assert reports.persist_run("solve", {}, {}, 0, 1.0, enabled=False) is None


def test_persist_run_retries_operational_errors(monkeypatch):
    from cylinders.models import Run

    monkeypatch.setattr(reports._create_run.retry, "wait", wait_none())
    row = MagicMock()
    create = MagicMock(side_effect=[OperationalError("locked"), OperationalError("locked"), row])
    monkeypatch.setattr(Run.objects, "create", create)

    run = reports.persist_run(
        "solve", {"a": 1.0}, {"energy": np.float64(-0.1)}, 0, 5.0, enabled=True
    )
    assert run is row
    assert create.call_count == 3
    assert create.call_args.kwargs["summary"] == {"energy": -0.1}


def test_persist_run_swallows_persistent_failures(monkeypatch, caplog):
    from cylinders.models import Run

    monkeypatch.setattr(reports._create_run.retry, "wait", wait_none())
    create = MagicMock(side_effect=OperationalError("disk I/O error"))
    monkeypatch.setattr(Run.objects, "create", create)

    assert reports.persist_run("verify", {}, {}, 5, 1.0, enabled=True) is None
    assert create.call_count == 5
    assert "failed to persist run ledger entry for verify" in caplog.text


@pytest.mark.django_db
def test_persist_run_writes_a_row():
    from cylinders.models import Run

    run = reports.persist_run(
        "sweep", {"c_values": (0.3, 0.5)}, {"rows": []}, 0, 12.5, enabled=True
    )
    stored = Run.objects.get(pk=run.pk)
    assert stored.command == "sweep"
    assert stored.config == {"c_values": [0.3, 0.5]}
    assert stored.elapsed_ms == 12.5
    assert len(stored.id) == 24
