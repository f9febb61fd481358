"""Tests for grids, masks, shapes and Steiner symmetrization of masks."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cylinders.errors import InfeasibleGeometryError, InvalidParameterError
from cylinders.geometry import (
    BoundedCylinder,
    CrossSection,
    CylinderGrid,
    Disk,
    DomainMask,
    HalfDisk,
    Indicator,
    boundary_decompose,
    build_grid,
    connectedness_check,
    free_boundary_cells,
    mask_from_shape,
    outer_neighbors,
    random_cell_mask,
    random_mask,
    scale_axial,
    seeded_generators,
    steiner_symmetrize_mask,
    volume,
)


UNIT = CrossSection.interval(1.0)


def test_build_grid_counts_and_spacing():
    grid = build_grid(UNIT, 1.5, 8)
    assert grid.shape == (8, 24)
    assert grid.spacing == (0.125, 0.125)
    assert grid.cell_volume == pytest.approx(1 / 64)
    assert grid.axial_offset == 12
    assert grid.z_min == -1.5

    half = build_grid(UNIT, 1.5, 8, half_mode=True)
    assert half.shape == (8, 12)
    assert half.axial_offset == 0
    assert half.z_min == 0.0


def test_full_mode_axial_count_is_rounded_up_to_even():
    grid = build_grid(UNIT, 1.25, 2, min_cells=1)
    assert grid.axial_count == 6
    with pytest.raises(InvalidParameterError):
        CylinderGrid(UNIT, 1.0, (4, 5))


def test_build_grid_rejects_coarse_and_invalid_input():
    with pytest.raises(InvalidParameterError):
        build_grid(UNIT, 1.5, 4)
    with pytest.raises(InvalidParameterError):
        build_grid(UNIT, 0.0, 8)
    with pytest.raises(InvalidParameterError):
        CrossSection.interval(-1.0)


def test_cap_layer_is_first_and_last_layer_in_full_mode_only_last_in_half():
    full = build_grid(UNIT, 1.5, 8)
    assert full.cap_layer[:, 0].all() and full.cap_layer[:, -1].all()
    assert full.cap_layer.sum() == 16

    half = build_grid(UNIT, 1.5, 8, half_mode=True)
    assert half.cap_layer[:, -1].all()
    assert not half.cap_layer[:, 0].any()


def test_mask_touching_the_cap_layer_is_rejected():
    grid = build_grid(UNIT, 1.5, 8)
    inside = np.zeros(grid.shape, dtype=bool)
    inside[3, -1] = True
    with pytest.raises(InfeasibleGeometryError):
        DomainMask(grid, inside)


def test_bounded_cylinder_mask_volume():
    grid = build_grid(UNIT, 1.5, 8)
    mask = mask_from_shape(grid, BoundedCylinder(h=0.5))
    assert mask.cell_count == 32
    assert volume(mask) == pytest.approx(0.5)
    assert (mask.column_counts() == 4).all()

    half = build_grid(UNIT, 1.5, 8, half_mode=True)
    assert volume(mask_from_shape(half, BoundedCylinder(h=0.5))) == pytest.approx(0.25)


def test_shapes_that_do_not_fit_raise_infeasible():
    grid = build_grid(UNIT, 1.5, 8)
    with pytest.raises(InfeasibleGeometryError):
        mask_from_shape(grid, BoundedCylinder(h=3.0))
    with pytest.raises(InfeasibleGeometryError):
        mask_from_shape(grid, HalfDisk(r=1.2))
    with pytest.raises(InfeasibleGeometryError):
        mask_from_shape(grid, Disk(center=(0.2, 0.0), r=0.3))


def test_half_disk_sits_on_the_requested_wall():
    grid = build_grid(UNIT, 1.5, 32)
    low = mask_from_shape(grid, HalfDisk(r=0.5))
    high = mask_from_shape(grid, HalfDisk(r=0.5, wall="high"))
    assert low.inside[0].any() and not low.inside[-1].any()
    assert np.array_equal(high.inside, low.inside[::-1])


def test_indicator_shape_uses_cell_centers():
    grid = build_grid(UNIT, 1.5, 8)
    mask = mask_from_shape(grid, Indicator(lambda x, z: (x < 0.5) & (np.abs(z) < 0.25)))
    assert mask.cell_count == 16


def test_steiner_symmetrization_stacks_columns_about_the_midplane():
    grid = build_grid(UNIT, 1.5, 8)
    inside = np.zeros(grid.shape, dtype=bool)
    inside[0, [2, 5, 20]] = True
    inside[1, [3, 4]] = True
    sym = steiner_symmetrize_mask(DomainMask(grid, inside))

    k = grid.axial_indices
    assert list(k[sym.inside[0]]) == [-1, 0, 1]
    assert list(k[sym.inside[1]]) == [-1, 0]
    assert not sym.inside[2:].any()


def test_steiner_symmetrization_needs_the_full_cylinder():
    grid = build_grid(UNIT, 1.5, 8, half_mode=True)
    with pytest.raises(InvalidParameterError):
        steiner_symmetrize_mask(mask_from_shape(grid, BoundedCylinder(h=0.5)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), density=st.floats(0.05, 0.9))
def test_steiner_symmetrization_preserves_columns_and_is_idempotent(seed, density):
    grid = build_grid(UNIT, 1.0, 10)
    (rng,) = seeded_generators(seed, 1)
    mask = random_mask(grid, density, rng)
    sym = steiner_symmetrize_mask(mask)
    assert np.array_equal(sym.column_counts(), mask.column_counts())
    assert steiner_symmetrize_mask(sym).same_cells(sym)
    assert (boundary_decompose(sym).free_measure <= boundary_decompose(mask).free_measure + 1e-12)


@pytest.mark.slow
@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), density=st.floats(0.05, 0.95))
def test_steiner_symmetrization_preserves_volume_exactly(seed, density):
    grid = build_grid(UNIT, 1.0, 10)
    (rng,) = seeded_generators(seed, 1)
    mask = random_mask(grid, density, rng)
    assert volume(steiner_symmetrize_mask(mask)) == volume(mask)


def test_scale_axial_stretches_a_flat_cylinder():
    grid = build_grid(UNIT, 1.5, 8)
    mask = mask_from_shape(grid, BoundedCylinder(h=0.5))
    stretched = scale_axial(mask, 2)
    assert stretched.same_cells(mask_from_shape(grid, BoundedCylinder(h=1.0)))
    assert scale_axial(mask, 1) is mask
    with pytest.raises(InfeasibleGeometryError):
        scale_axial(mask, 6)
    with pytest.raises(InvalidParameterError):
        scale_axial(mask, 1.5)


def test_boundary_decompose_flat_cylinder_full_mode():
    grid = build_grid(UNIT, 1.5, 8)
    parts = boundary_decompose(mask_from_shape(grid, BoundedCylinder(h=0.5)))
    assert parts.free_measure == pytest.approx(2.0)
    assert parts.wall_measure == pytest.approx(1.0)
    assert parts.mirror_measure == 0.0
    assert parts.lateral_measure == pytest.approx(1.0)
    assert len(parts.free_facets) == 16


def test_boundary_decompose_half_mode_counts_the_mirror_plane_as_lateral():
    grid = build_grid(UNIT, 1.5, 8, half_mode=True)
    parts = boundary_decompose(mask_from_shape(grid, BoundedCylinder(h=0.5)))
    assert parts.free_measure == pytest.approx(1.0)
    assert parts.mirror_measure == pytest.approx(1.0)
    assert parts.wall_measure == pytest.approx(0.5)
    assert parts.lateral_measure == pytest.approx(1.5)


def test_connectedness_counts_components():
    grid = build_grid(UNIT, 1.5, 32)
    one = mask_from_shape(grid, Disk(center=(0.5, -0.6), r=0.2))
    two = one.union(mask_from_shape(grid, Disk(center=(0.5, 0.6), r=0.2)))
    assert connectedness_check(one).connected
    check = connectedness_check(two)
    assert not check.connected
    assert check.components == 2


def test_outer_neighbors_skip_the_cap_layer():
    grid = build_grid(UNIT, 1.0, 8, half_mode=True)
    inside = np.zeros(grid.shape, dtype=bool)
    inside[:, -2] = True
    mask = DomainMask(grid, inside)
    ring = outer_neighbors(mask)
    assert not ring[:, -1].any()
    assert ring[:, -3].all()
    assert ring.sum() == 8


def test_free_boundary_cells_are_sorted_inside_cells():
    grid = build_grid(UNIT, 1.5, 8)
    mask = mask_from_shape(grid, BoundedCylinder(h=0.5))
    cells = free_boundary_cells(mask)
    assert list(cells) == sorted(cells)
    assert mask.inside.ravel()[cells].all()
    assert len(cells) == 16


def test_seeded_generators_are_reproducible_and_independent():
    a1, a2 = seeded_generators(42, 2)
    b1, _ = seeded_generators(42, 2)
    assert np.array_equal(a1.random(5), b1.random(5))
    assert not np.array_equal(seeded_generators(42, 2)[0].random(5), a2.random(5))


def test_random_cell_mask_has_exact_count():
    grid = build_grid(UNIT, 1.0, 4, half_mode=True, min_cells=1)
    (rng,) = seeded_generators(3, 1)
    mask = random_cell_mask(grid, 5, rng)
    assert mask.cell_count == 5
    with pytest.raises(InvalidParameterError):
        random_cell_mask(grid, 100, rng)
