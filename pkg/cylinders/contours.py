"""Iso-contours, perimeters and signed distances on cylinder grids.

Contours are extracted with marching squares on cell-center values and are
therefore limited to N = 2. Signed distances from masks work in any
dimension.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InvalidParameterError
from .geometry import CylinderGrid, DomainMask


log = logging.getLogger(__name__)

# Edge k of a square joins corners (k, k+1 mod 4); corners run
# (i, j), (i+1, j), (i+1, j+1), (i, j+1).
_EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))

# Saddle resolution: cutting corner 1 and 3 or cutting corner 0 and 2.
_SADDLE_CUT_13 = ((0, 1), (2, 3))
_SADDLE_CUT_02 = ((3, 0), (1, 2))

CONTACT_RADIUS_CELLS = 3.0
CONTACT_ANGLE_WARNING = 10.0


@dataclass(frozen=True)
class ContactAngle:
    wall: float
    xn: float
    degrees: float


def _require_2d(grid: CylinderGrid) -> None:
    if grid.dim != 2:
        raise NotImplementedError("iso-contours are only implemented for N = 2")


def _padded_axes(grid: CylinderGrid) -> tuple[np.ndarray, np.ndarray]:
    xs = []
    for axis in range(2):
        c = grid.centers(axis)
        h = grid.spacing[axis]
        xs.append(np.concatenate(([c[0] - h], c, [c[-1] + h])))
    return xs[0], xs[1]


def _clip(segments: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
    """Liang–Barsky clipping of segments to ``[x0, x1] × [z0, z1]``."""
    x_lo, x_hi, z_lo, z_hi = box
    p0 = segments[:, 0]
    d = segments[:, 1] - p0
    s_in = np.zeros(len(segments))
    s_out = np.ones(len(segments))
    keep = np.ones(len(segments), dtype=bool)

    for axis, lo, hi in ((0, x_lo, x_hi), (1, z_lo, z_hi)):
        for p, q in ((-d[:, axis], p0[:, axis] - lo), (d[:, axis], hi - p0[:, axis])):
            parallel = p == 0
            keep &= ~(parallel & (q < 0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
            s_in = np.where(~parallel & (p < 0), np.maximum(s_in, r), s_in)
            s_out = np.where(~parallel & (p > 0), np.minimum(s_out, r), s_out)

    keep &= s_in <= s_out
    start = p0 + s_in[:, None] * d
    end = p0 + s_out[:, None] * d
    clipped = np.stack([start, end], axis=1)[keep]
    length = np.linalg.norm(clipped[:, 1] - clipped[:, 0], axis=1)
    return clipped[length > 0]


def contour_segments(grid: CylinderGrid, values: np.ndarray, iso: float = 0.0) -> np.ndarray:
    """Line segments of ``{values = iso}`` as an ``(n, 2, 2)`` array of (x₁, x_N) endpoints.

    Values are extended by one reflected layer on every side so contours
    meet the container walls; segments are then clipped to the container.
    """
    _require_2d(grid)
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise InvalidParameterError(f"field shape {values.shape} does not match {grid.shape}")
    if np.ptp(values) == 0:
        raise InvalidParameterError("a constant field has no iso-contour")

    p = np.pad(values, 1, mode="edge")
    xs, zs = _padded_axes(grid)
    corners = (p[:-1, :-1], p[1:, :-1], p[1:, 1:], p[:-1, 1:])
    below = [c < iso for c in corners]

    x0, x1 = xs[:-1, None], xs[1:, None]
    z0, z1 = zs[None, :-1], zs[None, 1:]
    corner_xy = ((x0, z0), (x1, z0), (x1, z1), (x0, z1))

    shape = corners[0].shape
    points = np.zeros(shape + (4, 2))
    crossing = np.zeros(shape + (4,), dtype=bool)
    for e, (a, b) in enumerate(_EDGE_CORNERS):
        va, vb = corners[a], corners[b]
        hit = below[a] != below[b]
        t = np.divide(iso - va, vb - va, out=np.zeros(shape), where=hit)
        for k in range(2):
            pa = np.broadcast_to(corner_xy[a][k], shape)
            pb = np.broadcast_to(corner_xy[b][k], shape)
            points[..., e, k] = pa + t * (pb - pa)
        crossing[..., e] = hit

    count = crossing.sum(axis=-1)
    pieces = []

    simple = count == 2
    if simple.any():
        c = crossing[simple]
        first = np.argmax(c, axis=1)
        second = 3 - np.argmax(c[:, ::-1], axis=1)
        pts = points[simple]
        rows = np.arange(len(pts))
        pieces.append(np.stack([pts[rows, first], pts[rows, second]], axis=1))

    saddle = count == 4
    if saddle.any():
        pts = points[saddle]
        center = sum(c[saddle] for c in corners) / 4.0
        center_below = center < iso
        cut_02 = below[0][saddle] != center_below
        for pairs, select in ((_SADDLE_CUT_02, cut_02), (_SADDLE_CUT_13, ~cut_02)):
            if not select.any():
                continue
            for e_a, e_b in pairs:
                pieces.append(np.stack([pts[select, e_a], pts[select, e_b]], axis=1))

    if not pieces:
        return np.empty((0, 2, 2))
    segments = np.concatenate(pieces)
    a = grid.cross_section.widths[0]
    return _clip(segments, (0.0, a, grid.z_min, grid.L))


def segment_lengths(segments: np.ndarray) -> np.ndarray:
    return np.linalg.norm(segments[:, 1] - segments[:, 0], axis=1)


def contour_length(grid: CylinderGrid, values: np.ndarray, iso: float = 0.0) -> float:
    return float(segment_lengths(contour_segments(grid, values, iso)).sum())


def signed_distance(mask: DomainMask) -> np.ndarray:
    """Signed distance to the mask's free boundary, negative inside.

    Distances are measured between cell centers and shifted by half a cell
    so the zero level sits on the cell faces. Array edges (walls, caps, the
    mirror plane) are not boundaries.
    """
    if mask.is_empty:
        raise InvalidParameterError("signed distance of an empty mask is undefined")
    grid = mask.grid
    inside = mask.inside
    half = 0.5 * grid.h
    if inside.all():
        raise InvalidParameterError("signed distance of a full mask is undefined")
    outside_dist = ndimage.distance_transform_edt(~inside, sampling=grid.spacing)
    inside_dist = ndimage.distance_transform_edt(inside, sampling=grid.spacing)
    return np.where(inside, -(inside_dist - half), outside_dist - half)


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.einsum("...k,...k->...", ab, ab)
    t = np.einsum("...k,...k->...", points - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    nearest = a + t[..., None] * ab
    return np.linalg.norm(points - nearest, axis=-1)


def redistance(grid: CylinderGrid, phi: np.ndarray, candidates: int = 8) -> np.ndarray:
    """Replace φ by the exact signed distance to its zero contour, keeping its sign."""
    segments = contour_segments(grid, phi)
    if not len(segments):
        log.warning("redistance: no zero contour, level set left unchanged")
        return np.array(phi, dtype=float)

    mids = segments.mean(axis=1)
    k = min(candidates, len(segments))
    points = grid.cell_points()
    _, idx = cKDTree(mids).query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    dist = _point_segment_distance(points[:, None, :], segments[idx, 0], segments[idx, 1])
    dist = dist.min(axis=1).reshape(grid.shape)
    return np.where(np.asarray(phi) < 0, -dist, dist)


def contact_angles(grid: CylinderGrid, phi: np.ndarray) -> list[ContactAngle]:
    """Angles between the zero contour and the lateral walls where they meet.

    90° means the contour leaves the wall orthogonally. The local direction
    is taken from the centroid of segment midpoints within a few cells of
    the contact point.
    """
    segments = contour_segments(grid, phi)
    if not len(segments):
        return []
    a = grid.cross_section.widths[0]
    tol = 1e-9 * max(a, 1.0)
    mids = segments.mean(axis=1)
    tree = cKDTree(mids)
    radius = CONTACT_RADIUS_CELLS * grid.h

    endpoints = segments.reshape(-1, 2)
    angles: list[ContactAngle] = []
    seen: set[tuple[float, float]] = set()
    for wall in (0.0, a):
        on_wall = endpoints[np.abs(endpoints[:, 0] - wall) <= tol]
        for point in on_wall:
            key = (wall, round(float(point[1]), 9))
            if key in seen:
                continue
            seen.add(key)
            nearby = tree.query_ball_point(point, radius)
            if not nearby:
                continue
            direction = mids[nearby].mean(axis=0) - point
            norm = np.linalg.norm(direction)
            if norm == 0:
                continue
            degrees = float(np.degrees(np.arccos(min(1.0, abs(direction[1]) / norm))))
            angles.append(ContactAngle(wall=wall, xn=float(point[1]), degrees=degrees))

    for angle in angles:
        if abs(angle.degrees - 90.0) > CONTACT_ANGLE_WARNING:
            log.warning(
                "contact angle %.1f° at wall x1=%g, xN=%.4f is far from orthogonal",
                angle.degrees,
                angle.wall,
                angle.xn,
            )
    return angles
