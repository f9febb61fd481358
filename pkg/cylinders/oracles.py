"""Closed-form energies, stability thresholds and inequalities.

Everything here is analytic or one-dimensional, so these values serve as
reference answers for the solver and the optimizer.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from django.conf import settings
from scipy import sparse
from scipy.optimize import bisect
from scipy.sparse.linalg import eigsh

from .errors import InfeasibleGeometryError, InvalidParameterError
from .geometry import CrossSection


log = logging.getLogger(__name__)

LAMBDA1_DRIFT_WARNING = 1e-3


class Verdict(str, Enum):
    NOT_LOCAL_MIN = "not_local_min"
    LOCAL_MIN = "local_min"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class StabilityVerdict:
    lambda1: float
    threshold: float
    verdict: Verdict
    margin: float

    def as_dict(self) -> dict:
        data = asdict(self)
        data["verdict"] = self.verdict.value
        return data


@dataclass(frozen=True)
class GammaBounds:
    large_volume: float
    small_volume: float


@dataclass(frozen=True)
class C0Relations:
    identity: float
    lower: float
    consistent: bool


def unit_ball_measure(N: int) -> float:
    """σ_N, the volume of the unit ball in ℝ^N."""
    if N < 1:
        raise InvalidParameterError(f"dimension must be at least 1, got {N}")
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def beta_equation(s: float) -> float:
    root = math.sqrt(s)
    return root * math.tanh(root) - 1.0


@functools.cache
def beta_root() -> float:
    """The unique β in [1, 2] with √β·tanh(√β) = 1."""
    return bisect(beta_equation, 1.0, 2.0, xtol=1e-15, rtol=1e-15, maxiter=200)


def _interval_lambda1(a: float, nodes: int) -> float:
    h = a / nodes
    main = np.full(nodes, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(nodes - 1, -1.0)
    laplacian = sparse.diags([off, main, off], [-1, 0, 1], format="csc") / (h * h)
    # Shift-invert around a small negative value picks the two lowest modes.
    values = eigsh(laplacian, k=2, sigma=-1.0 / (a * a), which="LM", return_eigenvectors=False)
    lam = float(np.max(values))

    drift = abs(lam * a * a / math.pi**2 - 1.0)
    if drift > LAMBDA1_DRIFT_WARNING:
        log.warning("lambda1 on [0, %g] drifts %.2e from (pi/a)^2 at %d nodes", a, drift, nodes)
    return lam


def neumann_lambda1(cross_section: CrossSection, nodes: int | None = None) -> float:
    """First nonzero Neumann eigenvalue of −Δ on ω, by a 1-D finite-difference eigensolve.

    A box's spectrum is the sum of its sides' spectra, so its first nonzero
    eigenvalue is the smallest side value.
    """
    nodes = nodes if nodes is not None else settings.CYLINDERS["LAMBDA1_NODES"]
    if nodes < 3:
        raise InvalidParameterError(f"need at least 3 nodes for the eigensolve, got {nodes}")
    return min(_interval_lambda1(w, nodes) for w in cross_section.widths)


def stability_classify(cross_section: CrossSection, h: float) -> StabilityVerdict:
    """Second-variation verdict for the bounded cylinder ω × ]−h/2, h/2[."""
    if not h > 0:
        raise InvalidParameterError(f"cylinder height must be positive, got {h}")
    lambda1 = cross_section.lambda1
    threshold = 4.0 * beta_root() / (h * h)
    margin = lambda1 - threshold
    if abs(margin) <= 1e-9 * threshold:
        verdict = Verdict.MARGINAL
    elif margin < 0:
        verdict = Verdict.NOT_LOCAL_MIN
    else:
        verdict = Verdict.LOCAL_MIN
    return StabilityVerdict(lambda1=lambda1, threshold=threshold, verdict=verdict, margin=margin)


def marginal_height(cross_section: CrossSection) -> float:
    """Height at which the bounded cylinder changes stability: 2√(β/λ₁)."""
    return 2.0 * math.sqrt(beta_root() / cross_section.lambda1)


def stability_volume(cross_section: CrossSection) -> float:
    return cross_section.measure * marginal_height(cross_section)


def _positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")


def bounded_cylinder_energy(omega_measure: float, h: float) -> float:
    """E(ω × ]−h/2, h/2[) = −|ω|·h³/24."""
    _positive(omega_measure=omega_measure, h=h)
    return -omega_measure * h**3 / 24.0


def half_disk_energy(c: float, a: float | None = None) -> float:
    """E of the half-disk of area c on a wall, −c²/(8π).

    With a given width a the half-disk must fit: √(2c/π) ≤ a.
    """
    _positive(c=c)
    if a is not None:
        radius = math.sqrt(2.0 * c / math.pi)
        if radius > a:
            raise InfeasibleGeometryError(
                f"half-disk of area {c:.6g} has radius {radius:.6g} > a = {a:.6g}"
            )
    return -c * c / (8.0 * math.pi)


def ball_energy(c: float, N: int) -> float:
    _positive(c=c)
    sigma = unit_ball_measure(N)
    return -(c ** (1.0 + 2.0 / N)) / (2.0 * N * (N + 2) * sigma ** (2.0 / N))


def half_ball_energy(c: float, N: int) -> float:
    """Half of a ball of volume 2c: the competitor sitting on a flat wall."""
    return 0.5 * ball_energy(2.0 * c, N)


def analytic_energy(kind: str, **params: float) -> float:
    match kind:
        case "bounded_cylinder":
            return bounded_cylinder_energy(params["omega_measure"], params["h"])
        case "half_disk_2d":
            return half_disk_energy(params["c"], params.get("a"))
        case "ball":
            return ball_energy(params["c"], int(params["N"]))
        case "half_ball":
            return half_ball_energy(params["c"], int(params["N"]))
        case _:
            raise InvalidParameterError(f"unknown analytic energy kind {kind!r}")


def crossing_volume_2d(a: float) -> float:
    """Area 3a²/π where the rectangle and half-disk energies coincide."""
    _positive(a=a)
    return 3.0 * a * a / math.pi


def gamma_bounds(c: float, omega_measure: float, N: int) -> GammaBounds:
    """Upper bounds on the free-boundary measure of a minimizer."""
    _positive(c=c, omega_measure=omega_measure)
    sigma = unit_ball_measure(N)
    return GammaBounds(
        large_volume=2.0 * math.sqrt(3.0) * omega_measure,
        small_volume=c ** (1.0 - 1.0 / N) * math.sqrt(N * (N + 2)) * (sigma / 2.0) ** (1.0 / N),
    )


def c0_relations(c: float, energy: float, gamma_length: float, slack: float = 0.10) -> C0Relations:
    """Boundary-gradient identity C₀ = (c/|Γ|)² against its lower bound 2|E|/c.

    ``consistent`` allows the identity to fall short of the bound by the
    relative ``slack``.
    """
    _positive(c=c)
    if not gamma_length > 0:
        raise InvalidParameterError(f"free-boundary measure must be positive, got {gamma_length}")
    identity = (c / gamma_length) ** 2
    lower = 2.0 * abs(energy) / c
    return C0Relations(identity=identity, lower=lower, consistent=identity >= lower * (1.0 - slack))


def halfcylinder_relation(o_half: float, o_full: float) -> float:
    """Relative deviation of O_c(C⁺) from ½·O_{2c}(C)."""
    if o_full == 0:
        raise InvalidParameterError("full-cylinder energy must be nonzero")
    return abs(o_half - 0.5 * o_full) / abs(0.5 * o_full)


def wall_contact_volume(omega_measure: float, N: int) -> float:
    """Volume above which a minimizer must touch the lateral wall."""
    _positive(omega_measure=omega_measure)
    if N < 2:
        raise InvalidParameterError(f"dimension must be at least 2, got {N}")
    sigma = unit_ball_measure(N)
    base = 2.0 * math.sqrt(3.0) * omega_measure / (N * sigma ** (1.0 / N))
    return base ** (N / (N - 1.0))


def _half_ball_fits(c: float, cross_section: CrossSection) -> bool:
    N = cross_section.dim
    radius = (2.0 * c / unit_ball_measure(N)) ** (1.0 / N)
    widths = cross_section.widths
    if N == 2:
        return radius <= widths[0]
    # Sitting on the face normal to axis i: radius across it, full diameter along the others.
    return any(
        radius <= w and all(2.0 * radius <= v for j, v in enumerate(widths) if j != i)
        for i, w in enumerate(widths)
    )


def energy_upper_bound(c: float, cross_section: CrossSection) -> float:
    """Lowest energy among the admissible closed-form competitors of volume c."""
    _positive(c=c)
    candidates = [bounded_cylinder_energy(cross_section.measure, c / cross_section.measure)]
    if _half_ball_fits(c, cross_section):
        candidates.append(half_ball_energy(c, cross_section.dim))
    return min(candidates)


def density_inequality(
    e_small: float, c_small: float, e_large: float, c_large: float, slack: float = 0.05
) -> bool:
    """E/|Ω| of the smaller-volume optimum is at least that of the larger one."""
    _positive(c_small=c_small, c_large=c_large)
    if c_small > c_large:
        raise InvalidParameterError("c_small must not exceed c_large")
    small = e_small / c_small
    large = e_large / c_large
    return small >= large - slack * abs(large)


def stretch_inequality(energy: float, stretched: float, t: float, slack: float = 0.0) -> bool:
    """Axial stretching by t ≥ 1 scales the energy by at least t: E(F_t Ω) ≤ t·E(Ω)."""
    if t < 1:
        raise InvalidParameterError(f"stretch factor must be at least 1, got {t}")
    bound = t * energy
    return stretched <= bound + slack * abs(bound)


def value_monotonicity(c_values, energies, slack: float = 0.01) -> list[tuple[float, float]]:
    """Adjacent volume pairs where the estimated O_c fails to decrease."""
    if len(c_values) != len(energies):
        raise InvalidParameterError("volumes and energies must have the same length")
    pairs = sorted(zip(c_values, energies))
    violations = []
    for (c0, e0), (c1, e1) in zip(pairs, pairs[1:]):
        if e1 > e0 + slack * abs(e0):
            violations.append((c0, c1))
    return violations
