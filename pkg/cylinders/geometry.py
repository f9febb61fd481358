"""Containers, grids and cell masks for domains confined to a cylinder.

A domain is a finite union of grid cells inside the truncated container
ω × [−L, L] (or the half container ω × [0, L]). Arrays are indexed
``[transverse..., axial]``: the last axis is x_N, the leading axes span ω.

Axial cells are addressed by a signed index ``k`` so that cell ``k`` covers
``[k·h, (k+1)·h]``. In full mode the plane x_N = 0 is the face between
``k = -1`` and ``k = 0``; in half mode ``k = 0`` sits on the mirror plane.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import InfeasibleGeometryError, InvalidParameterError


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossSection:
    """The generator ω of the container: an interval (N = 2) or a box (N ≥ 3)."""

    widths: tuple[float, ...]

    def __post_init__(self):
        widths = tuple(float(w) for w in self.widths)
        if not widths:
            raise InvalidParameterError("a cross-section needs at least one width")
        if any(not w > 0 for w in widths):
            raise InvalidParameterError(f"cross-section widths must be positive: {widths}")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def interval(cls, a: float) -> CrossSection:
        return cls((a,))

    @classmethod
    def box(cls, *widths: float) -> CrossSection:
        return cls(tuple(widths))

    @property
    def kind(self) -> str:
        return "interval" if len(self.widths) == 1 else "box"

    @property
    def dim(self) -> int:
        """Dimension N of the container (ω lives in ℝ^{N-1})."""
        return len(self.widths) + 1

    @property
    def measure(self) -> float:
        return math.prod(self.widths)

    @cached_property
    def lambda1(self) -> float:
        """First nonzero Neumann eigenvalue of −Δ on ω, computed on first use."""
        from .oracles import neumann_lambda1  # local import to avoid circular

        return neumann_lambda1(self)


@dataclass(frozen=True)
class CylinderGrid:
    """Uniform cell grid on ω × [−L, L], or on ω × [0, L] in half mode."""

    cross_section: CrossSection
    L: float
    shape: tuple[int, ...]
    half_mode: bool = False

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != self.cross_section.dim:
            raise InvalidParameterError(
                f"grid shape {shape} does not match an N={self.cross_section.dim} container"
            )
        if any(n < 1 for n in shape):
            raise InvalidParameterError(f"grid counts must be positive: {shape}")
        if not self.half_mode and shape[-1] % 2:
            raise InvalidParameterError("full-mode axial cell count must be even")
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def mode(self) -> str:
        return "half" if self.half_mode else "full"

    @property
    def axial_count(self) -> int:
        return self.shape[-1]

    @property
    def transverse_counts(self) -> tuple[int, ...]:
        return self.shape[:-1]

    @property
    def axial_length(self) -> float:
        return self.L if self.half_mode else 2.0 * self.L

    @property
    def z_min(self) -> float:
        return 0.0 if self.half_mode else -self.L

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        transverse = tuple(
            w / n for w, n in zip(self.cross_section.widths, self.transverse_counts)
        )
        return transverse + (self.axial_length / self.axial_count,)

    @property
    def h(self) -> float:
        """Smallest cell width; the length unit of bands and CFL steps."""
        return min(self.spacing)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def total_volume(self) -> float:
        return self.size * self.cell_volume

    def facet_area(self, axis: int) -> float:
        return self.cell_volume / self.spacing[axis]

    @property
    def axial_offset(self) -> int:
        """Array index of the axial cell with signed index k = 0."""
        return 0 if self.half_mode else self.axial_count // 2

    @cached_property
    def axial_indices(self) -> np.ndarray:
        return np.arange(self.axial_count) - self.axial_offset

    def centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        h = self.spacing[axis]
        start = self.z_min if axis == self.dim - 1 else 0.0
        return start + (np.arange(n) + 0.5) * h

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable cell-center coordinate arrays, one per axis."""
        return tuple(
            np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij", sparse=True)
        )

    def cell_points(self) -> np.ndarray:
        """All cell centers as a ``(size, dim)`` array in C order."""
        dense = np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij")
        return np.stack([c.ravel() for c in dense], axis=1)

    @cached_property
    def cap_layer(self) -> np.ndarray:
        """Cells that must stay empty: the layers touching x_N = ±L (x_N = L in half mode)."""
        layer = np.zeros(self.shape, dtype=bool)
        layer[..., -1] = True
        if not self.half_mode:
            layer[..., 0] = True
        layer.flags.writeable = False
        return layer


@dataclass(frozen=True, eq=False)
class DomainMask:
    """A candidate domain Ω as the set of inside cells of a grid."""

    grid: CylinderGrid
    inside: np.ndarray

    def __post_init__(self):
        inside = np.array(self.inside, dtype=bool)
        if inside.shape != self.grid.shape:
            raise InvalidParameterError(
                f"mask shape {inside.shape} does not match grid shape {self.grid.shape}"
            )
        if (inside & self.grid.cap_layer).any():
            raise InfeasibleGeometryError(
                "mask reaches the cap layer of the truncated container; increase L"
            )
        inside.flags.writeable = False
        object.__setattr__(self, "inside", inside)

    @classmethod
    def empty(cls, grid: CylinderGrid) -> DomainMask:
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def from_indices(cls, grid: CylinderGrid, flat_indices) -> DomainMask:
        inside = np.zeros(grid.size, dtype=bool)
        inside[np.asarray(flat_indices, dtype=np.int64)] = True
        return cls(grid, inside.reshape(grid.shape))

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.inside))

    @property
    def volume(self) -> float:
        return self.cell_count * self.grid.cell_volume

    @property
    def is_empty(self) -> bool:
        return not self.inside.any()

    @property
    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.inside)

    def column_counts(self) -> np.ndarray:
        return self.inside.sum(axis=-1)

    def union(self, other: DomainMask) -> DomainMask:
        if other.grid != self.grid:
            raise InvalidParameterError("cannot combine masks from different grids")
        return DomainMask(self.grid, self.inside | other.inside)

    def same_cells(self, other: DomainMask) -> bool:
        return other.grid == self.grid and np.array_equal(self.inside, other.inside)


@dataclass(frozen=True, eq=False)
class BoundarySegments:
    """Boundary facets of a mask split into free (Γ) and lateral (Γ₁) parts.

    Facets are rows ``(flat cell index, axis, side)`` with ``side = -1`` for
    the low face of the inside cell and ``+1`` for the high face. In half mode
    the faces on the mirror plane x_N = 0 belong to Γ₁ and are also counted
    in ``mirror_measure``.
    """

    grid: CylinderGrid
    free_facets: np.ndarray
    lateral_facets: np.ndarray
    free_measure: float
    lateral_measure: float
    wall_measure: float
    mirror_measure: float


@dataclass(frozen=True)
class Connectivity:
    connected: bool
    components: int


# Shapes accepted by mask_from_shape.


@dataclass(frozen=True)
class BoundedCylinder:
    """ω × ]−h/2, h/2[; in half mode its upper half ω × ]0, h/2[."""

    h: float


@dataclass(frozen=True)
class HalfDisk:
    """Half-disk (N = 2) centered on a lateral wall.

    ``wall`` is ``"low"`` for x₁ = 0 and ``"high"`` for x₁ = a. A given
    ``axial_radius`` turns it into a half-ellipse with that semi-axis along x_N.
    """

    r: float
    wall: str = "low"
    center: float = 0.0
    axial_radius: float | None = None


@dataclass(frozen=True)
class Disk:
    """Ball of radius r around ``center`` = (x₁, …, x_N)."""

    center: tuple[float, ...]
    r: float


@dataclass(frozen=True)
class Indicator:
    """Custom shape: ``predicate(x1, ..., xN)`` returns a boolean array over cell centers."""

    predicate: Callable[..., np.ndarray]


Shape = BoundedCylinder | HalfDisk | Disk | Indicator


def build_grid(
    cross_section: CrossSection,
    L: float,
    resolution: float,
    half_mode: bool = False,
    *,
    min_cells: int = 8,
) -> CylinderGrid:
    """Build a uniform grid with ``resolution`` cells per unit length.

    Transverse counts are rounded to the nearest integer so the walls are
    cell faces; the axial count is rounded up (to an even number in full
    mode so x_N = 0 is a cell face).
    """
    if not L > 0:
        raise InvalidParameterError(f"axial half-length L must be positive, got {L}")
    if not resolution > 0:
        raise InvalidParameterError(f"resolution must be positive, got {resolution}")

    transverse = tuple(max(1, round(w * resolution)) for w in cross_section.widths)
    axial_length = L if half_mode else 2.0 * L
    axial = math.ceil(axial_length * resolution - 1e-9)
    if not half_mode and axial % 2:
        axial += 1

    shape = transverse + (axial,)
    if min(shape) < min_cells:
        raise InvalidParameterError(
            f"resolution {resolution} gives {shape} cells; need at least {min_cells} per axis"
        )
    return CylinderGrid(cross_section, float(L), shape, half_mode)


def check_axial_extent(grid: CylinderGrid, extent: float) -> None:
    """Require |x_N| ≤ extent to leave one empty cell layer below the caps."""
    limit = grid.L - grid.spacing[-1]
    if extent > limit + 1e-12:
        raise InfeasibleGeometryError(
            f"shape reaches |x_N| = {extent:.6g} but the truncation L = {grid.L:.6g} "
            f"only leaves room up to {limit:.6g}"
        )


def mask_from_shape(grid: CylinderGrid, shape: Shape) -> DomainMask:
    """Cells whose centers satisfy the shape predicate."""
    coords = grid.coordinates()
    xn = coords[-1]

    match shape:
        case BoundedCylinder(h=h):
            if not h > 0:
                raise InvalidParameterError(f"cylinder height must be positive, got {h}")
            check_axial_extent(grid, h / 2)
            inside = np.abs(xn) < h / 2

        case HalfDisk(r=r, wall=wall, center=center, axial_radius=axial_radius):
            if grid.dim != 2:
                raise InvalidParameterError("half-disk shapes need an N = 2 container")
            if wall not in ("low", "high"):
                raise InvalidParameterError(f"wall must be 'low' or 'high', got {wall!r}")
            b = r if axial_radius is None else axial_radius
            if not (r > 0 and b > 0):
                raise InvalidParameterError("half-disk radii must be positive")
            a = grid.cross_section.widths[0]
            if r > a:
                raise InfeasibleGeometryError(
                    f"half-disk radius {r:.6g} exceeds the cross-section width {a:.6g}"
                )
            check_axial_extent(grid, abs(center) + b)
            x1 = coords[0] if wall == "low" else a - coords[0]
            inside = (x1 / r) ** 2 + ((xn - center) / b) ** 2 < 1.0

        case Disk(center=center, r=r):
            if len(center) != grid.dim:
                raise InvalidParameterError(
                    f"disk center needs {grid.dim} coordinates, got {len(center)}"
                )
            if not r > 0:
                raise InvalidParameterError(f"disk radius must be positive, got {r}")
            for c, w in zip(center[:-1], grid.cross_section.widths):
                if c - r < -1e-12 or c + r > w + 1e-12:
                    raise InfeasibleGeometryError(
                        f"disk of radius {r:.6g} at {center} leaves the cross-section"
                    )
            check_axial_extent(grid, abs(center[-1]) + r)
            dist2 = sum((x - c) ** 2 for x, c in zip(coords, center))
            inside = dist2 < r * r

        case Indicator(predicate=predicate):
            full = np.broadcast_arrays(*coords)
            inside = np.asarray(predicate(*full), dtype=bool)

        case _:
            raise InvalidParameterError(f"unsupported shape {shape!r}")

    return DomainMask(grid, np.broadcast_to(inside, grid.shape))


def volume(mask: DomainMask) -> float:
    """Cell count times cell volume; half-mode masks report the half volume."""
    return mask.volume


def steiner_symmetrize_mask(mask: DomainMask) -> DomainMask:
    """Stack every column's cells symmetrically about x_N = 0.

    A column with m cells ends up at signed indices −⌊m/2⌋ … ⌈m/2⌉−1, so an
    odd count puts its extra cell on the positive side.
    """
    grid = mask.grid
    if grid.half_mode:
        raise InvalidParameterError("Steiner symmetrization needs the full cylinder")
    m = mask.column_counts()[..., np.newaxis]
    k = grid.axial_indices
    inside = (k >= -(m // 2)) & (k <= (m + 1) // 2 - 1)
    return DomainMask(grid, inside)


def scale_axial(mask: DomainMask, t: int) -> DomainMask:
    """Apply F_t(x′, x_N) = (x′, t·x_N): each cell becomes t stacked cells."""
    if isinstance(t, bool) or int(t) != t or t < 1:
        raise InvalidParameterError(f"axial scale factor must be a positive integer, got {t}")
    t = int(t)
    if t == 1:
        return mask

    grid = mask.grid
    idx = np.nonzero(mask.inside)
    k = idx[-1] - grid.axial_offset
    new_k = (t * k)[:, np.newaxis] + np.arange(t)[np.newaxis, :]
    j = new_k + grid.axial_offset
    if j.size and (j.min() < 0 or j.max() >= grid.axial_count):
        raise InfeasibleGeometryError(
            f"stretching by t={t} pushes the mask outside the truncated container"
        )

    inside = np.zeros(grid.shape, dtype=bool)
    transverse = tuple(np.repeat(i, t) for i in idx[:-1])
    inside[transverse + (j.ravel(),)] = True
    return DomainMask(grid, inside)


def axis_slices(dim: int, axis: int, sl: slice) -> tuple[slice, ...]:
    out = [slice(None)] * dim
    out[axis] = sl
    return tuple(out)


def _facet_rows(grid: CylinderGrid, multi_index, axis: int, side: int) -> np.ndarray:
    flat = np.ravel_multi_index(multi_index, grid.shape)
    rows = np.empty((flat.size, 3), dtype=np.int64)
    rows[:, 0] = flat
    rows[:, 1] = axis
    rows[:, 2] = side
    return rows


def _measure(grid: CylinderGrid, facets: np.ndarray) -> float:
    if not len(facets):
        return 0.0
    counts = np.bincount(facets[:, 1], minlength=grid.dim)
    return float(sum(counts[a] * grid.facet_area(a) for a in range(grid.dim)))


def boundary_decompose(mask: DomainMask) -> BoundarySegments:
    """Classify every boundary facet of the mask as free (Γ) or lateral (Γ₁)."""
    grid = mask.grid
    inside = mask.inside
    dim = grid.dim
    free: list[np.ndarray] = []
    lateral: list[np.ndarray] = []
    mirror: list[np.ndarray] = []
    walls: list[np.ndarray] = []

    for axis in range(dim):
        lo = inside[axis_slices(dim, axis, slice(0, -1))]
        hi = inside[axis_slices(dim, axis, slice(1, None))]
        cross = lo ^ hi

        # Interior faces with exactly one inside neighbor are Γ.
        low_cells = np.nonzero(cross & lo)
        free.append(_facet_rows(grid, low_cells, axis, +1))
        high_cells = list(np.nonzero(cross & hi))
        high_cells[axis] = high_cells[axis] + 1
        free.append(_facet_rows(grid, tuple(high_cells), axis, -1))

        # Faces on the array boundary: lateral walls, or the mirror plane in half mode.
        first = np.nonzero(inside[axis_slices(dim, axis, slice(0, 1))])
        last = list(np.nonzero(inside[axis_slices(dim, axis, slice(-1, None))]))
        last[axis] = last[axis] + grid.shape[axis] - 1
        if axis < dim - 1:
            walls.append(_facet_rows(grid, first, axis, -1))
            walls.append(_facet_rows(grid, tuple(last), axis, +1))
        elif grid.half_mode:
            mirror.append(_facet_rows(grid, first, axis, -1))

    empty = np.empty((0, 3), dtype=np.int64)
    free_facets = np.concatenate(free) if free else empty
    wall_facets = np.concatenate(walls) if walls else empty
    mirror_facets = np.concatenate(mirror) if mirror else empty
    lateral.extend([wall_facets, mirror_facets])
    lateral_facets = np.concatenate(lateral)

    return BoundarySegments(
        grid=grid,
        free_facets=free_facets,
        lateral_facets=lateral_facets,
        free_measure=_measure(grid, free_facets),
        lateral_measure=_measure(grid, lateral_facets),
        wall_measure=_measure(grid, wall_facets),
        mirror_measure=_measure(grid, mirror_facets),
    )


def connectedness_check(mask: DomainMask) -> Connectivity:
    """Count face-connected components of the inside cells."""
    structure = ndimage.generate_binary_structure(mask.grid.dim, 1)
    _, components = ndimage.label(mask.inside, structure=structure)
    return Connectivity(connected=components == 1, components=int(components))


def outer_neighbors(mask: DomainMask) -> np.ndarray:
    """Outside cells sharing a face with the mask, excluding the cap layer."""
    structure = ndimage.generate_binary_structure(mask.grid.dim, 1)
    grown = ndimage.binary_dilation(mask.inside, structure=structure)
    return grown & ~mask.inside & ~mask.grid.cap_layer


def free_boundary_cells(mask: DomainMask) -> np.ndarray:
    """Sorted flat indices of inside cells that own at least one Γ facet."""
    facets = boundary_decompose(mask).free_facets
    return np.unique(facets[:, 0])


def seeded_generators(seed: int, count: int) -> list[np.random.Generator]:
    """Independent PCG64 streams derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def random_mask(grid: CylinderGrid, density: float, rng: np.random.Generator) -> DomainMask:
    """Each non-cap cell is inside independently with probability ``density``."""
    inside = (rng.random(grid.shape) < density) & ~grid.cap_layer
    return DomainMask(grid, inside)


def random_cell_mask(grid: CylinderGrid, k: int, rng: np.random.Generator) -> DomainMask:
    """Exactly ``k`` non-cap cells drawn uniformly without replacement."""
    candidates = np.flatnonzero(~grid.cap_layer)
    if not 0 < k <= candidates.size:
        raise InvalidParameterError(f"cannot draw {k} cells from {candidates.size} candidates")
    chosen = rng.choice(candidates, size=k, replace=False)
    return DomainMask.from_indices(grid, np.sort(chosen))
