"""Tests for the finite-volume torsion solver and field rearrangements."""

from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylinders.errors import InvalidParameterError, SolverNonconvergenceError
from cylinders.geometry import (
    BoundedCylinder,
    CrossSection,
    CylinderGrid,
    Disk,
    DomainMask,
    build_grid,
    mask_from_shape,
    random_mask,
    scale_axial,
    seeded_generators,
    steiner_symmetrize_mask,
)
from cylinders.oracles import ball_energy, bounded_cylinder_energy, stretch_inequality
from cylinders.torsion import (
    ScalarField,
    analytic_rect_field,
    assemble,
    axial_dirichlet_energy,
    boundary_gradient_stats,
    energy_of,
    solve_torsion,
    steiner_symmetrize_field,
    torsion_functional,
)


UNIT = CrossSection.interval(1.0)


def _rect(res: float, h: float = 1.0, L: float = 1.0, half: bool = False):
    grid = build_grid(UNIT, L, res, half)
    mask = mask_from_shape(grid, BoundedCylinder(h=h))
    return grid, mask, solve_torsion(grid, mask)


def test_assemble_is_symmetric_with_dirichlet_faces_doubled():
    grid, mask, _ = _rect(8, h=0.5)
    matrix, rhs, index = assemble(mask)
    assert (abs(matrix - matrix.T) > 1e-14).nnz == 0
    assert rhs == pytest.approx(np.full(mask.cell_count, grid.cell_volume))
    assert (index[mask.inside] >= 0).all() and (index[~mask.inside] == -1).all()
    # Top-row cell next to a wall: one axial neighbor, one Dirichlet face, one transverse neighbor.
    corner = index[0, grid.axial_offset + 1]
    assert matrix[corner, corner] == pytest.approx(4.0)


def test_flat_cylinder_energy_and_peak():
    grid, mask, solution = _rect(32)
    exact = bounded_cylinder_energy(1.0, 1.0)
    assert solution.energy == pytest.approx(exact, rel=0.01)
    assert solution.u.max() == pytest.approx(0.125, rel=0.01)
    assert solution.energy_gap <= 1e-8 * abs(solution.energy)


def test_flat_cylinder_discrete_solution_is_shifted_quadratic():
    grid, mask, solution = _rect(32)
    d = grid.spacing[-1]
    analytic = analytic_rect_field(grid, 1.0).values
    assert np.allclose(
        solution.u.values[mask.inside], analytic[mask.inside] + d * d / 8, atol=1e-6
    )


def test_flat_cylinder_error_shrinks_quadratically():
    exact = bounded_cylinder_energy(1.0, 1.0)
    errors = [abs(_rect(res)[2].energy - exact) / abs(exact) for res in (16, 32)]
    assert errors[0] / errors[1] >= 1.8


def test_transverse_profile_is_constant_under_neumann_walls():
    _, _, solution = _rect(16, h=0.5)
    values = solution.u.values
    assert np.allclose(values, values[:1], atol=1e-9)


def test_half_mode_energy_is_half_of_the_full_cylinder():
    _, _, full = _rect(32, h=0.5)
    _, _, half = _rect(32, h=0.5, half=True)
    assert half.energy == pytest.approx(0.5 * full.energy, rel=1e-7)


def test_disk_energy_is_close_to_the_ball_formula():
    grid = build_grid(UNIT, 1.0, 128)
    mask = mask_from_shape(grid, Disk(center=(0.5, 0.0), r=0.3))
    solution = solve_torsion(grid, mask)
    assert solution.energy == pytest.approx(ball_energy(np.pi * 0.09, 2), rel=0.05)


def test_energy_of_field_matches_solution_energy():
    _, _, solution = _rect(16, h=0.5)
    assert energy_of(solution.u) == pytest.approx(solution.energy, rel=1e-12)
    assert energy_of(solution) == solution.energy
    with pytest.raises(InvalidParameterError):
        energy_of(3.0)


def test_solution_minimizes_the_torsion_functional():
    grid, mask, solution = _rect(16)
    assert torsion_functional(grid, mask, solution.u) == pytest.approx(solution.energy, rel=1e-8)
    trial = analytic_rect_field(grid, 1.0)
    assert torsion_functional(grid, mask, trial) > solution.energy


def test_solver_logs_its_summary_at_info(caplog):
    with caplog.at_level(logging.INFO, logger="cylinders.torsion"):
        _rect(8, h=0.5)
    assert "torsion solve:" in caplog.text


def test_solver_errors():
    grid, mask, _ = _rect(16)
    with pytest.raises(SolverNonconvergenceError) as exc:
        solve_torsion(grid, mask, maxiter=1)
    assert exc.value.iterations == 1
    with pytest.raises(InvalidParameterError):
        solve_torsion(grid, DomainMask.empty(grid))
    with pytest.raises(InvalidParameterError):
        solve_torsion(build_grid(UNIT, 1.0, 8), mask)


def test_warm_start_needs_fewer_iterations():
    grid, mask, cold = _rect(16)
    warm = solve_torsion(grid, mask, x0=cold.u)
    assert warm.iterations < cold.iterations
    assert warm.energy == pytest.approx(cold.energy, rel=1e-9)


def test_axial_stretch_scales_energy_at_least_linearly():
    grid = build_grid(UNIT, 1.5, 32)
    mask = mask_from_shape(grid, Disk(center=(0.5, 0.0), r=0.2))
    energy = solve_torsion(grid, mask).energy
    stretched = solve_torsion(grid, scale_axial(mask, 2)).energy
    assert stretch_inequality(energy, stretched, 2)


def test_symmetrized_field_rank_order():
    grid = CylinderGrid(UNIT, 1.0, (1, 8))
    field = ScalarField(grid, np.arange(8.0)[np.newaxis, :])
    out = steiner_symmetrize_field(field).values[0]
    assert list(out) == [0.0, 2.0, 4.0, 6.0, 7.0, 5.0, 3.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_symmetrized_field_keeps_l2_and_lowers_axial_dirichlet(seed):
    grid = CylinderGrid(UNIT, 1.0, (4, 12))
    (rng,) = seeded_generators(seed, 1)
    values = rng.random(grid.shape) * (rng.random(grid.shape) < 0.6)
    field = ScalarField(grid, values)
    sym = steiner_symmetrize_field(field)
    assert np.allclose(sym.l2_columns(), field.l2_columns(), rtol=1e-12)
    assert (axial_dirichlet_energy(sym) <= axial_dirichlet_energy(field) + 1e-12).all()
    assert np.array_equal(np.sort(sym.values, axis=-1), np.sort(values, axis=-1))


def test_symmetrized_torsion_field_lives_on_the_symmetrized_mask():
    grid = build_grid(UNIT, 1.0, 16)
    (rng,) = seeded_generators(11, 1)
    inside = (rng.random(grid.shape) < 0.3) & ~grid.cap_layer
    mask = DomainMask(grid, inside)
    solution = solve_torsion(grid, mask)
    sym_field = steiner_symmetrize_field(solution.u)
    sym_mask = steiner_symmetrize_mask(mask)
    assert np.array_equal(sym_field.values > 0, sym_mask.inside)
    assert solve_torsion(grid, sym_mask).energy <= solution.energy * 0.98


def test_symmetrize_field_rejects_negative_values_and_half_grids():
    grid = CylinderGrid(UNIT, 1.0, (1, 8))
    with pytest.raises(InvalidParameterError):
        steiner_symmetrize_field(ScalarField(grid, -np.ones((1, 8))))
    half = CylinderGrid(UNIT, 1.0, (1, 8), half_mode=True)
    with pytest.raises(InvalidParameterError):
        steiner_symmetrize_field(ScalarField(half, np.ones((1, 8))))


def test_boundary_gradient_of_flat_cylinder():
    _, mask, solution = _rect(32)
    stats = boundary_gradient_stats(solution)
    assert stats.mean == pytest.approx(0.5, rel=0.1)
    assert stats.rel_stddev < 0.05
    assert stats.c0_estimate == pytest.approx(stats.mean**2)
    assert solution.boundary_gradient.mean == stats.mean


def test_boundary_gradient_band_outside_a_thin_shape_is_an_error():
    _, _, solution = _rect(32, h=0.25)
    with pytest.raises(InvalidParameterError):
        boundary_gradient_stats(solution, band=(10.0, 11.0))
    with pytest.raises(InvalidParameterError):
        boundary_gradient_stats(solution, band=(2.0, 1.0))


def test_disjoint_components_add_their_energies():
    grid = build_grid(UNIT, 1.0, 16)
    left = np.zeros(grid.shape, dtype=bool)
    left[:7] = True
    right = np.zeros(grid.shape, dtype=bool)
    right[9:] = True
    for rng in seeded_generators(21, 10):
        a = random_mask(grid, 0.6, rng).inside & left
        b = random_mask(grid, 0.6, rng).inside & right
        e_a = solve_torsion(grid, DomainMask(grid, a)).energy
        e_b = solve_torsion(grid, DomainMask(grid, b)).energy
        e_union = solve_torsion(grid, DomainMask(grid, a | b)).energy
        assert e_union == pytest.approx(e_a + e_b, rel=1e-6)


def test_nested_masks_have_monotone_fields_and_energies():
    grid = build_grid(UNIT, 1.0, 16)
    for rng in seeded_generators(5, 50):
        outer = random_mask(grid, 0.6, rng)
        inner = DomainMask(grid, outer.inside & (rng.random(grid.shape) < 0.7))
        big = solve_torsion(grid, outer)
        small = solve_torsion(grid, inner)
        assert small.energy >= big.energy - 1e-7 * abs(big.energy)
        assert (small.u.values <= big.u.values + 1e-6 * big.u.max()).all()


def test_peak_of_flat_cylinders_scales_with_the_square_of_the_volume():
    peaks = [_rect(64, h=c, L=1.5)[2].u.max() for c in (0.25, 0.5, 1.0)]
    assert peaks[1] / peaks[0] == pytest.approx(4.0, rel=0.05)
    assert peaks[2] / peaks[1] == pytest.approx(4.0, rel=0.05)


def test_steiner_symmetrization_does_not_raise_the_energy_of_random_masks():
    grid = build_grid(UNIT, 1.0, 16)
    for rng in seeded_generators(13, 50):
        mask = random_mask(grid, 0.4, rng)
        energy = solve_torsion(grid, mask).energy
        symmetric = solve_torsion(grid, steiner_symmetrize_mask(mask)).energy
        assert symmetric <= energy + 0.02 * abs(energy)


def test_half_mode_solution_is_the_upper_half_of_a_mirror_symmetric_solve():
    full_grid = build_grid(UNIT, 1.0, 32)
    half_grid = build_grid(UNIT, 1.0, 32, half_mode=True)
    disk = Disk(center=(0.5, 0.0), r=0.3)
    full = solve_torsion(full_grid, mask_from_shape(full_grid, disk), 1e-12).u.values
    half = solve_torsion(half_grid, mask_from_shape(half_grid, disk), 1e-12).u.values
    scale = full.max()
    assert np.allclose(full, full[:, ::-1], atol=1e-7 * scale)
    assert np.allclose(half, full[:, full_grid.axial_offset :], atol=1e-7 * scale)
