"""Mixed-boundary torsion problem on cell masks.

The torsion function u of a mask solves −Δu = 1 in Ω with u = 0 on the free
boundary Γ and zero flux on the lateral walls (and on the mirror plane in
half mode). It is discretized with cell-centered finite volumes:

* a face between two inside cells contributes the usual two-point flux;
* a face between an inside and an outside cell places the Dirichlet value
  half a cell away, doubling that face's transmissibility;
* faces on the array boundary carry no flux.

The resulting matrix is symmetric positive definite and is solved with
Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from django.conf import settings
from scipy import sparse
from scipy.sparse.linalg import cg

from .contours import signed_distance
from .errors import InvalidParameterError, SolverNonconvergenceError
from .geometry import CylinderGrid, DomainMask, axis_slices, check_axial_extent


log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell values over a whole grid; zero outside the domain by convention."""

    grid: CylinderGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise InvalidParameterError(
                f"field shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def max(self) -> float:
        return float(self.values.max())

    def l2_columns(self) -> np.ndarray:
        """Squared L² norm of each axial column."""
        return (self.values**2).sum(axis=-1) * self.grid.spacing[-1]


@dataclass(frozen=True)
class BoundaryGradientStats:
    samples: np.ndarray
    points: np.ndarray
    mean: float
    rel_stddev: float
    c0_estimate: float


@dataclass(frozen=True, eq=False)
class TorsionSolution:
    mask: DomainMask
    u: ScalarField
    energy: float
    energy_dirichlet: float
    energy_mass: float
    iterations: int
    residual: float
    tol: float

    @property
    def grid(self) -> CylinderGrid:
        return self.mask.grid

    @property
    def energy_gap(self) -> float:
        """|E_dirichlet − E_mass|; vanishes for an exact solve."""
        return abs(self.energy_dirichlet - self.energy_mass)

    @cached_property
    def boundary_gradient(self) -> BoundaryGradientStats:
        return boundary_gradient_stats(self)


def assemble(mask: DomainMask) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
    """Finite-volume matrix, right-hand side and cell → unknown index map."""
    grid = mask.grid
    inside = mask.inside
    n = mask.cell_count
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[inside] = np.arange(n)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag = np.zeros(n)

    for axis in range(grid.dim):
        transmissibility = grid.cell_volume / grid.spacing[axis] ** 2
        lo = index[axis_slices(grid.dim, axis, slice(0, -1))]
        hi = index[axis_slices(grid.dim, axis, slice(1, None))]

        both = (lo >= 0) & (hi >= 0)
        i, j = lo[both], hi[both]
        off = np.full(i.size, -transmissibility)
        rows += [i, j]
        cols += [j, i]
        vals += [off, off]
        np.add.at(diag, i, transmissibility)
        np.add.at(diag, j, transmissibility)

        # Dirichlet faces: the boundary value sits half a cell away.
        np.add.at(diag, lo[(lo >= 0) & (hi < 0)], 2.0 * transmissibility)
        np.add.at(diag, hi[(hi >= 0) & (lo < 0)], 2.0 * transmissibility)

    offdiag = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    matrix = (offdiag + sparse.diags(diag)).tocsr()
    rhs = np.full(n, grid.cell_volume)
    return matrix, rhs, index


def _default_maxiter(n: int) -> int:
    cfg = settings.CYLINDERS
    budget = math.ceil(cfg["SOLVER_ITERS_PER_SQRT_N"] * math.sqrt(n))
    return min(cfg["SOLVER_MAX_ITERS"], max(1, budget))


def solve_torsion(
    grid: CylinderGrid,
    mask: DomainMask,
    tol: float | None = None,
    *,
    x0: ScalarField | np.ndarray | None = None,
    maxiter: int | None = None,
) -> TorsionSolution:
    """Solve the torsion problem on ``mask`` and return u with its energy.

    ``x0`` warm-starts the iteration from a previous field on the same grid.
    """
    tol = tol if tol is not None else settings.CYLINDERS["SOLVER_TOL"]
    if mask.grid != grid:
        raise InvalidParameterError("mask belongs to a different grid")
    if mask.is_empty:
        raise InvalidParameterError("cannot solve the torsion problem on an empty mask")
    if not tol > 0:
        raise InvalidParameterError(f"solver tolerance must be positive, got {tol}")

    matrix, rhs, _ = assemble(mask)
    n = rhs.size
    maxiter = maxiter if maxiter is not None else _default_maxiter(n)
    preconditioner = sparse.diags(1.0 / matrix.diagonal())

    guess = None
    if x0 is not None:
        start = x0.values if isinstance(x0, ScalarField) else np.asarray(x0, dtype=float)
        guess = start[mask.inside]

    iterations = 0

    def count(_xk):
        nonlocal iterations
        iterations += 1

    x, info = cg(
        matrix, rhs, x0=guess, rtol=tol, atol=0.0, maxiter=maxiter, M=preconditioner, callback=count
    )
    residual = float(np.linalg.norm(rhs - matrix @ x) / np.linalg.norm(rhs))
    if info != 0:
        raise SolverNonconvergenceError(residual, iterations, tol)

    values = np.zeros(grid.shape)
    values[mask.inside] = x
    energy_mass = -0.5 * float(rhs @ x)
    energy_dirichlet = -0.5 * float(x @ (matrix @ x))
    log.info(
        "torsion solve: %d unknowns, %d iterations, residual %.2e, energy %.10g",
        n,
        iterations,
        residual,
        energy_mass,
    )
    return TorsionSolution(
        mask=mask,
        u=ScalarField(grid, values),
        energy=energy_mass,
        energy_dirichlet=energy_dirichlet,
        energy_mass=energy_mass,
        iterations=iterations,
        residual=residual,
        tol=tol,
    )


def energy_of(item: TorsionSolution | ScalarField) -> float:
    """Torsion energy −½∫u of a solution or of a supplied torsion field."""
    if isinstance(item, TorsionSolution):
        return item.energy
    if isinstance(item, ScalarField):
        return -0.5 * float(item.values.sum()) * item.grid.cell_volume
    raise InvalidParameterError(f"cannot take the energy of {type(item).__name__}")


def torsion_functional(
    grid: CylinderGrid, mask: DomainMask, field: ScalarField | np.ndarray
) -> float:
    """Discrete ½∫|∇v|² − ∫v of a trial field restricted to the mask cells."""
    if mask.is_empty:
        raise InvalidParameterError("torsion functional of an empty mask is undefined")
    values = field.values if isinstance(field, ScalarField) else np.asarray(field, dtype=float)
    if values.shape != grid.shape:
        raise InvalidParameterError("trial field does not match the grid")
    matrix, rhs, _ = assemble(mask)
    v = values[mask.inside]
    return 0.5 * float(v @ (matrix @ v)) - float(rhs @ v)


def rect_torsion_profile(xn, h: float) -> np.ndarray:
    """Closed-form torsion function ½(h²/4 − x_N²) of the flat cylinder, zero outside."""
    xn = np.asarray(xn, dtype=float)
    return np.where(np.abs(xn) < h / 2, 0.5 * (h * h / 4.0 - xn * xn), 0.0)


def analytic_rect_field(grid: CylinderGrid, h: float) -> ScalarField:
    """The flat-cylinder torsion function sampled at cell centers."""
    if not h > 0:
        raise InvalidParameterError(f"cylinder height must be positive, got {h}")
    check_axial_extent(grid, h / 2)
    profile = rect_torsion_profile(grid.centers(grid.dim - 1), h)
    return ScalarField(grid, np.broadcast_to(profile, grid.shape))


def steiner_symmetrize_field(u: ScalarField) -> ScalarField:
    """Rearrange every axial column into its symmetric decreasing order.

    The largest value goes to signed index 0, then −1, 1, −2, 2, … so a
    column's positive entries land exactly where the mask symmetrization
    would put its cells.
    """
    grid = u.grid
    if grid.half_mode:
        raise InvalidParameterError("Steiner symmetrization needs the full cylinder")
    values = u.values
    if (values < 0).any():
        raise InvalidParameterError("Steiner symmetrization is defined for nonnegative fields")

    order = np.argsort(-values, axis=-1, kind="stable")
    ranked = np.take_along_axis(values, order, axis=-1)
    rank = np.arange(grid.axial_count)
    signed = np.where(rank % 2 == 0, rank // 2, -(rank + 1) // 2)
    out = np.empty_like(values)
    out[..., signed + grid.axial_offset] = ranked
    return ScalarField(grid, out)


def axial_dirichlet_energy(field: ScalarField) -> np.ndarray:
    """Per-column Σ(u_{k+1} − u_k)²/h with zero values beyond both ends."""
    values = np.pad(field.values, [(0, 0)] * (field.grid.dim - 1) + [(1, 1)])
    diffs = np.diff(values, axis=-1)
    return (diffs**2).sum(axis=-1) / field.grid.spacing[-1]


def boundary_gradient_stats(
    solution: TorsionSolution,
    shape=None,
    band: tuple[float, float] | None = None,
) -> BoundaryGradientStats:
    """Sample |∇u| on Γ through u/d in a band of cells near the free boundary.

    ``shape`` may be a mask or anything carrying a ``mask`` attribute; it
    defaults to the solution's own mask. ``band`` is in units of the grid
    spacing.
    """
    band = band if band is not None else tuple(settings.CYLINDERS["BAND"])
    lo, hi = band
    if not 0 < lo < hi:
        raise InvalidParameterError(f"gradient band must satisfy 0 < lo < hi, got {band}")
    mask = solution.mask if shape is None else getattr(shape, "mask", shape)
    grid = solution.grid
    if mask.grid != grid:
        raise InvalidParameterError("shape belongs to a different grid")

    distance = -signed_distance(mask)
    h = grid.h
    eps = 1e-9 * h
    selected = mask.inside & (distance >= lo * h - eps) & (distance <= hi * h + eps)
    if not selected.any():
        raise InvalidParameterError(
            "no inside cells in the gradient band; the shape is too thin for this grid"
        )

    samples = solution.u.values[selected] / distance[selected]
    points = grid.cell_points()[selected.ravel()]
    mean = float(samples.mean())
    rel_stddev = float(samples.std() / mean) if mean > 0 else math.inf
    return BoundaryGradientStats(
        samples=samples,
        points=points,
        mean=mean,
        rel_stddev=rel_stddev,
        c0_estimate=mean * mean,
    )
