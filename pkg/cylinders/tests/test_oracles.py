"""Tests for closed-form energies, the stability threshold and the inequalities."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from cylinders.errors import InfeasibleGeometryError, InvalidParameterError
from cylinders.geometry import CrossSection
from cylinders.oracles import (
    Verdict,
    analytic_energy,
    ball_energy,
    beta_equation,
    beta_root,
    bounded_cylinder_energy,
    c0_relations,
    crossing_volume_2d,
    density_inequality,
    energy_upper_bound,
    gamma_bounds,
    half_ball_energy,
    half_disk_energy,
    halfcylinder_relation,
    marginal_height,
    neumann_lambda1,
    stability_classify,
    stability_volume,
    stretch_inequality,
    unit_ball_measure,
    value_monotonicity,
    wall_contact_volume,
)


def test_beta_root():
    beta = beta_root()
    assert 1.4390 <= beta <= 1.4395
    assert abs(beta_equation(beta)) < 1e-12
    assert beta == pytest.approx(1.43923, abs=1e-5)


@pytest.mark.parametrize(
    "widths, expected",
    [
        ((1.0,), math.pi**2),
        ((2.0,), math.pi**2 / 4),
        ((1.0, 2.0), math.pi**2 / 4),
    ],
)
def test_neumann_lambda1(widths, expected):
    assert neumann_lambda1(CrossSection(widths), nodes=1024) == pytest.approx(expected, rel=1e-3)


def test_neumann_lambda1_needs_nodes():
    with pytest.raises(InvalidParameterError):
        neumann_lambda1(CrossSection.interval(1.0), nodes=2)


def test_stability_flips_between_half_and_unit_height():
    cs = CrossSection.interval(1.0)
    low = stability_classify(cs, 0.5)
    high = stability_classify(cs, 1.0)
    assert low.verdict is Verdict.NOT_LOCAL_MIN
    assert low.threshold == pytest.approx(23.0277, rel=1e-4)
    assert high.verdict is Verdict.LOCAL_MIN
    assert high.as_dict()["verdict"] == "local_min"


def test_marginal_height_matches_the_closed_form():
    cs = CrossSection.interval(1.0)
    h_star = marginal_height(cs)
    assert h_star == pytest.approx(2 * math.sqrt(beta_root()) / math.pi, abs=1e-6)
    assert stability_classify(cs, h_star).verdict is Verdict.MARGINAL
    assert stability_volume(cs) == pytest.approx(h_star)


def test_stability_rejects_nonpositive_height():
    with pytest.raises(InvalidParameterError):
        stability_classify(CrossSection.interval(1.0), 0.0)


def test_closed_form_energies():
    assert bounded_cylinder_energy(1.0, 1.0) == pytest.approx(-1 / 24)
    assert half_disk_energy(0.5) == pytest.approx(-0.00994718, abs=1e-8)
    assert ball_energy(math.pi / 4, 2) == pytest.approx(-math.pi / 256)
    assert half_ball_energy(0.5, 2) == pytest.approx(half_disk_energy(0.5))
    assert unit_ball_measure(3) == pytest.approx(4 * math.pi / 3)


def test_analytic_energy_dispatch():
    assert analytic_energy("bounded_cylinder", omega_measure=1.0, h=1.0) == pytest.approx(-1 / 24)
    assert analytic_energy("half_disk_2d", c=0.5) == half_disk_energy(0.5)
    assert analytic_energy("ball", c=1.0, N=3) == ball_energy(1.0, 3)
    with pytest.raises(InvalidParameterError):
        analytic_energy("torus", c=1.0)


def test_half_disk_that_does_not_fit_is_infeasible():
    with pytest.raises(InfeasibleGeometryError):
        half_disk_energy(2.0, a=1.0)
    with pytest.raises(InvalidParameterError):
        half_disk_energy(-1.0)


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_crossing_volume(a):
    c = crossing_volume_2d(a)
    assert c == pytest.approx(3 * a * a / math.pi)
    rect = bounded_cylinder_energy(a, 3 * a / math.pi)
    assert half_disk_energy(c) == pytest.approx(rect, rel=1e-12)
    assert wall_contact_volume(a, 2) == pytest.approx(c, rel=1e-12)


def test_gamma_bounds():
    bounds = gamma_bounds(0.01, 1.0, 2)
    assert bounds.large_volume == pytest.approx(2 * math.sqrt(3), abs=1e-5)
    assert bounds.small_volume == pytest.approx(0.354491, abs=1e-6)
    assert math.sqrt(2 * math.pi * 0.01) == pytest.approx(0.250663, abs=1e-6)


def test_c0_relations():
    rel = c0_relations(1.0, -1 / 24, 2.0)
    assert rel.identity == pytest.approx(0.25)
    assert rel.lower == pytest.approx(1 / 12)
    assert rel.consistent
    assert not c0_relations(1.0, -1.0, 2.0).consistent
    with pytest.raises(InvalidParameterError):
        c0_relations(1.0, -1 / 24, 0.0)


def test_halfcylinder_relation():
    assert halfcylinder_relation(-0.0208333, -0.0416667) == pytest.approx(0.0, abs=1e-5)
    assert halfcylinder_relation(0.9 * -0.0208333, -0.0416666) == pytest.approx(0.10, abs=1e-5)
    with pytest.raises(InvalidParameterError):
        halfcylinder_relation(-0.1, 0.0)


def test_energy_upper_bound_picks_the_lower_competitor():
    cs = CrossSection.interval(1.0)
    assert energy_upper_bound(0.5, cs) == pytest.approx(half_disk_energy(0.5))
    assert energy_upper_bound(1.2, cs) == pytest.approx(bounded_cylinder_energy(1.0, 1.2))


def test_density_and_stretch_inequalities():
    e_half, e_one = bounded_cylinder_energy(1.0, 0.5), bounded_cylinder_energy(1.0, 1.0)
    assert density_inequality(e_half, 0.5, e_one, 1.0)
    assert not density_inequality(e_one, 0.5, e_half, 1.0)
    with pytest.raises(InvalidParameterError):
        density_inequality(e_one, 1.0, e_half, 0.5)
    assert stretch_inequality(-0.01, -0.03, 2.0)
    assert not stretch_inequality(-0.01, -0.015, 2.0)
    with pytest.raises(InvalidParameterError):
        stretch_inequality(-0.01, -0.03, 0.5)


def test_value_monotonicity_reports_violating_pairs():
    assert value_monotonicity([0.3, 0.5, 0.8], [-0.001, -0.005, -0.02]) == []
    assert value_monotonicity([0.5, 0.3, 0.8], [-0.005, -0.001, -0.001]) == [(0.5, 0.8)]
    with pytest.raises(InvalidParameterError):
        value_monotonicity([0.3], [])


@given(c=st.floats(min_value=1e-3, max_value=10.0), h=st.floats(min_value=1e-2, max_value=5.0))
def test_flat_cylinder_energy_per_volume_decreases_with_volume(c, h):
    # E(ω × h)/c = −h²/24 for |ω| = 1, so doubling the height lowers it.
    assert bounded_cylinder_energy(1.0, 2 * h) / (2 * h) < bounded_cylinder_energy(1.0, h) / h
    assert ball_energy(2 * c, 2) < ball_energy(c, 2) < 0
