"""Volume-constrained minimization of the torsional energy.

Three optimizers share the torsion solver:

* a level-set gradient flow (2-D) whose normal speed is |∇u|² minus its band
  mean, so the flow lowers the energy while leaving the volume unchanged to
  first order; a constant shift of φ restores the exact volume every step;
* a cell-swap local search that keeps the cell count fixed;
* brute-force enumeration for tiny grids, used as the reference optimum.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.spatial import cKDTree

from .contours import (
    ContactAngle,
    contact_angles,
    contour_segments,
    redistance,
    segment_lengths,
    signed_distance,
)
from .errors import (
    DegenerateShapeError,
    EnumerationCapError,
    InfeasibleGeometryError,
    InvalidParameterError,
)
from .geometry import (
    CylinderGrid,
    DomainMask,
    Shape,
    boundary_decompose,
    connectedness_check,
    free_boundary_cells,
    mask_from_shape,
    outer_neighbors,
    steiner_symmetrize_mask,
)
from .oracles import c0_relations
from .torsion import BoundaryGradientStats, TorsionSolution, boundary_gradient_stats, solve_torsion


log = logging.getLogger(__name__)

MONOTONICITY_SLACK = 0.005
SPEED_NEIGHBORS = 8


def _setting(key: str):
    return lambda: settings.CYLINDERS[key]


@dataclass(frozen=True)
class OptimizerConfig:
    cfl: float = field(default_factory=_setting("CFL"))
    max_iters: int = field(default_factory=_setting("MAX_ITERS"))
    volume_tol: float = field(default_factory=_setting("VOLUME_TOL"))
    symmetrize_every: int = field(default_factory=_setting("SYMMETRIZE_EVERY"))
    reinit_every: int = field(default_factory=_setting("REINIT_EVERY"))
    window: int = field(default_factory=_setting("CONVERGENCE_WINDOW"))
    energy_tol: float = field(default_factory=_setting("CONVERGENCE_TOL"))
    solver_tol: float = field(default_factory=_setting("OPTIMIZER_SOLVER_TOL"))
    band: tuple[float, float] = field(default_factory=lambda: tuple(settings.CYLINDERS["BAND"]))
    perturbation: float = field(default_factory=_setting("PERTURBATION"))
    noise: float = field(default_factory=_setting("NOISE"))
    min_cells: int = field(default_factory=_setting("MIN_CELLS"))
    extension_cells: float = field(default_factory=_setting("EXTENSION_CELLS"))
    log_every: int = field(default_factory=_setting("LOG_EVERY"))
    seed: int = field(default_factory=_setting("SEED"))

    def __post_init__(self):
        if not 0 < self.cfl <= 0.5:
            raise InvalidParameterError(f"CFL fraction must lie in (0, 0.5], got {self.cfl}")
        for name in ("volume_tol", "energy_tol", "solver_tol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.max_iters < 1 or self.window < 1:
            raise InvalidParameterError("max_iters and window must be at least 1")
        if self.symmetrize_every < 0 or self.reinit_every < 0:
            raise InvalidParameterError("symmetrize_every and reinit_every must be nonnegative")
        if not 0 < self.band[0] < self.band[1]:
            raise InvalidParameterError(f"gradient band must satisfy 0 < lo < hi, got {self.band}")
        if self.perturbation < 0 or self.noise < 0:
            raise InvalidParameterError("perturbation and noise amplitudes must be nonnegative")


@dataclass(frozen=True, eq=False)
class LevelSetState:
    """Ω = {φ < 0} together with the volume it must keep."""

    grid: CylinderGrid
    phi: np.ndarray
    target_volume: float
    mask: DomainMask
    iteration: int = 0
    u_guess: np.ndarray | None = None

    @property
    def volume(self) -> float:
        return self.mask.volume

    @property
    def volume_error(self) -> float:
        return abs(self.mask.volume - self.target_volume) / self.target_volume


@dataclass(frozen=True)
class StepRecord:
    iteration: int
    energy: float
    volume: float
    c0_estimate: float
    gamma_length: float
    dt: float
    mu: float
    reinitialized: bool = False
    symmetrized: bool = False


@dataclass(frozen=True, eq=False)
class OptimizerReport:
    target_volume: float
    records: list[StepRecord]
    energy_history: list[float]
    volume_history: list[float]
    final_state: LevelSetState
    final_solution: TorsionSolution
    gamma_length: float
    gradient_mean: float
    gradient_rel_stddev: float
    c0_estimate: float
    c0_identity: float
    c0_lower: float
    c0_consistent: bool
    connected: bool
    components: int
    wall_contact: bool
    wall_measure: float
    walls_touched: int
    contact_angles: list[ContactAngle]
    converged: bool
    monotonicity_violations: int

    @property
    def final_mask(self) -> DomainMask:
        return self.final_state.mask

    @property
    def final_energy(self) -> float:
        return self.final_solution.energy

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "target_volume": self.target_volume,
            "final_volume": self.final_mask.volume,
            "final_energy": self.final_energy,
            "iterations": self.iterations,
            "converged": self.converged,
            "gamma_length": self.gamma_length,
            "gradient_mean": self.gradient_mean,
            "gradient_rel_stddev": self.gradient_rel_stddev,
            "c0_estimate": self.c0_estimate,
            "c0_identity": self.c0_identity,
            "c0_lower": self.c0_lower,
            "c0_consistent": self.c0_consistent,
            "connected": self.connected,
            "components": self.components,
            "wall_contact": self.wall_contact,
            "wall_measure": self.wall_measure,
            "walls_touched": self.walls_touched,
            "contact_angles": [
                {"wall": a.wall, "xn": a.xn, "degrees": a.degrees} for a in self.contact_angles
            ],
            "monotonicity_violations": self.monotonicity_violations,
        }


@dataclass(frozen=True, eq=False)
class SwapReport:
    moves: list[tuple[int, int, float]]
    energy_history: list[float]
    final_energy: float


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    mask: DomainMask
    energy: float
    count: int
    minimizers: list[DomainMask]


def _require_2d(grid: CylinderGrid) -> None:
    if grid.dim != 2:
        raise NotImplementedError("level-set runs are implemented for N = 2")


def _initial_perturbation(grid: CylinderGrid, config: OptimizerConfig) -> np.ndarray:
    """First Neumann mode of ω across the widest axis, plus optional seeded noise."""
    widths = grid.cross_section.widths
    axis = int(np.argmax(widths))
    x = grid.coordinates()[axis]
    # Sign chosen so the low wall x = 0 gains volume.
    bump = -config.perturbation * grid.h * np.cos(math.pi * x / widths[axis])
    bump = np.broadcast_to(bump, grid.shape).copy()
    if config.noise > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
        bump += config.noise * grid.h * rng.uniform(-1.0, 1.0, size=grid.shape)
    return bump


def _volume_shift(grid: CylinderGrid, phi: np.ndarray, c: float) -> tuple[np.ndarray, DomainMask]:
    """Shift φ by a constant so exactly round(c / cell volume) cells are negative."""
    k = int(round(c / grid.cell_volume))
    if k < 1:
        raise DegenerateShapeError(f"target volume {c:.6g} is below one cell")
    ranked = np.where(grid.cap_layer, np.inf, phi).ravel()
    available = int(np.count_nonzero(~grid.cap_layer))
    if k >= available:
        raise InfeasibleGeometryError(
            f"target volume {c:.6g} does not fit in the truncated container"
        )
    order = np.argsort(ranked, kind="stable")
    inside = np.zeros(grid.size, dtype=bool)
    inside[order[:k]] = True
    inside = inside.reshape(grid.shape)
    shift = 0.5 * (ranked[order[k - 1]] + ranked[order[k]])
    shifted = phi - shift
    if (shifted[grid.cap_layer] < 0).any():
        raise InfeasibleGeometryError("evolving shape reached the cap layer; increase L")
    # Ties at the k-th value are broken by flat index; nudge them off zero.
    eps = 1e-12 * grid.h
    shifted = np.where(inside, np.minimum(shifted, -eps), np.maximum(shifted, eps))
    return shifted, DomainMask(grid, inside)


def init_levelset(
    shape_or_mask: Shape | DomainMask,
    c: float,
    *,
    grid: CylinderGrid | None = None,
    config: OptimizerConfig | None = None,
) -> LevelSetState:
    """Level set of a starting shape, perturbed and shifted to hold volume c."""
    config = config or OptimizerConfig()
    if isinstance(shape_or_mask, DomainMask):
        mask = shape_or_mask
        grid = mask.grid
    else:
        if grid is None:
            raise InvalidParameterError("a grid is required to rasterize a shape")
        mask = mask_from_shape(grid, shape_or_mask)
    _require_2d(grid)
    if not c > 0:
        raise InvalidParameterError(f"target volume must be positive, got {c}")
    if mask.is_empty:
        raise InvalidParameterError("initial mask is empty")

    cells = round(c / grid.cell_volume)
    if cells < 1 or abs(cells * grid.cell_volume - c) > config.volume_tol * c:
        raise InvalidParameterError(
            f"grid cell volume {grid.cell_volume:.3g} cannot hold volume {c:.6g} "
            f"within {config.volume_tol:.0e}; refine the grid"
        )
    ratio = mask.volume / c
    if abs(ratio - 1.0) > 0.25:
        log.info("initial mask volume is %.2f x target; the volume shift rescales it", ratio)

    phi = signed_distance(mask) + _initial_perturbation(grid, config)
    phi, mask = _volume_shift(grid, phi, c)
    return LevelSetState(grid=grid, phi=phi, target_volume=c, mask=mask)


def _normal_speed(
    grid: CylinderGrid,
    stats: BoundaryGradientStats,
    segments: np.ndarray,
    config: OptimizerConfig,
) -> tuple[np.ndarray, float]:
    """v = g² − μ on the interface, extended to cells by closest interface point."""
    g2 = stats.samples**2
    mu = float(g2.mean())
    if not len(segments):
        return np.zeros(grid.shape), mu

    mids = segments.mean(axis=1)
    k = min(SPEED_NEIGHBORS, len(g2))
    _, idx = cKDTree(stats.points).query(mids, k=k)
    if k == 1:
        idx = idx[:, None]
    v_interface = g2[idx].mean(axis=1) - mu

    dist, nearest = cKDTree(mids).query(grid.cell_points())
    speed = v_interface[nearest]
    speed[dist > config.extension_cells * grid.h] = 0.0
    return speed.reshape(grid.shape), mu


def _advect(grid: CylinderGrid, phi: np.ndarray, speed: np.ndarray, dt: float) -> np.ndarray:
    """One first-order Godunov step of φ_t + v|∇φ| = 0.

    Edge padding gives zero normal derivative at the walls and the mirror
    plane, which keeps the interface orthogonal to them.
    """
    hx, hz = grid.spacing
    p = np.pad(phi, 1, mode="edge")
    c = p[1:-1, 1:-1]
    dxm = (c - p[:-2, 1:-1]) / hx
    dxp = (p[2:, 1:-1] - c) / hx
    dzm = (c - p[1:-1, :-2]) / hz
    dzp = (p[1:-1, 2:] - c) / hz

    grad_plus = np.sqrt(
        np.maximum(dxm, 0) ** 2 + np.minimum(dxp, 0) ** 2
        + np.maximum(dzm, 0) ** 2 + np.minimum(dzp, 0) ** 2
    )
    grad_minus = np.sqrt(
        np.minimum(dxm, 0) ** 2 + np.maximum(dxp, 0) ** 2
        + np.minimum(dzm, 0) ** 2 + np.maximum(dzp, 0) ** 2
    )
    return phi - dt * (np.maximum(speed, 0) * grad_plus + np.minimum(speed, 0) * grad_minus)


def evolve_step(
    state: LevelSetState, config: OptimizerConfig | None = None
) -> tuple[LevelSetState, StepRecord]:
    """Advance the level set by one descent step and restore its volume."""
    config = config or OptimizerConfig()
    grid = state.grid
    _require_2d(grid)
    mask = state.mask
    if mask.cell_count < config.min_cells:
        raise DegenerateShapeError(
            f"shape shrank to {mask.cell_count} cells (minimum {config.min_cells}); "
            "the grid is too coarse for this volume"
        )

    solution = solve_torsion(grid, mask, config.solver_tol, x0=state.u_guess)
    stats = boundary_gradient_stats(solution, mask, config.band)
    segments = contour_segments(grid, state.phi)
    gamma_length = float(segment_lengths(segments).sum())

    speed, mu = _normal_speed(grid, stats, segments, config)
    vmax = float(np.abs(speed).max())
    # Never step further than CFL·h relative to the typical speed μ.
    dt = config.cfl * grid.h / max(vmax, mu) if vmax > 0 else 0.0
    phi = _advect(grid, state.phi, speed, dt) if dt > 0 else state.phi.copy()
    phi, new_mask = _volume_shift(grid, phi, state.target_volume)

    iteration = state.iteration + 1
    reinit = config.reinit_every > 0 and iteration % config.reinit_every == 0
    if reinit:
        phi = redistance(grid, phi)
        log.debug("iteration %d: level set redistanced", iteration)

    symmetrize = (
        config.symmetrize_every > 0
        and not grid.half_mode
        and iteration % config.symmetrize_every == 0
    )
    if symmetrize:
        new_mask = steiner_symmetrize_mask(new_mask)
        phi = signed_distance(new_mask)
        log.info("iteration %d: mask Steiner-symmetrized", iteration)

    record = StepRecord(
        iteration=state.iteration,
        energy=solution.energy,
        volume=mask.volume,
        c0_estimate=stats.c0_estimate,
        gamma_length=gamma_length,
        dt=dt,
        mu=mu,
        reinitialized=reinit,
        symmetrized=symmetrize,
    )
    new_state = LevelSetState(
        grid=grid,
        phi=phi,
        target_volume=state.target_volume,
        mask=new_mask,
        iteration=iteration,
        u_guess=solution.u.values,
    )
    return new_state, record


def _has_converged(records: list[StepRecord], config: OptimizerConfig) -> bool:
    if len(records) <= config.window:
        return False
    now = records[-1].energy
    before = records[-1 - config.window].energy
    return abs(now - before) <= config.energy_tol * abs(now)


def _monotonicity_violations(records: list[StepRecord]) -> int:
    violations = 0
    for prev, cur in zip(records, records[1:]):
        if prev.reinitialized or prev.symmetrized:
            continue
        if cur.energy - prev.energy > MONOTONICITY_SLACK * abs(prev.energy):
            violations += 1
    return violations


def run(
    init: LevelSetState,
    config: OptimizerConfig | None = None,
    callback: Callable[[LevelSetState, StepRecord], None] | None = None,
) -> OptimizerReport:
    """Iterate evolve_step until the energy stalls over the window or max_iters."""
    config = config or OptimizerConfig()
    state = init
    records: list[StepRecord] = []
    converged = False

    for _ in range(config.max_iters):
        state, record = evolve_step(state, config)
        records.append(record)
        if callback is not None:
            callback(state, record)
        if config.log_every and record.iteration % config.log_every == 0:
            log.info(
                "optimizer iter=%d energy=%.8e volume=%.6g gamma=%.5f",
                record.iteration,
                record.energy,
                record.volume,
                record.gamma_length,
            )
        if _has_converged(records, config):
            converged = True
            log.info("optimizer converged after %d iterations", len(records))
            break
    else:
        log.info("optimizer stopped at max_iters=%d without converging", config.max_iters)

    return _build_report(state, records, converged, config)


def _build_report(
    state: LevelSetState,
    records: list[StepRecord],
    converged: bool,
    config: OptimizerConfig,
) -> OptimizerReport:
    grid = state.grid
    mask = state.mask
    solution = solve_torsion(grid, mask, config.solver_tol, x0=state.u_guess)
    stats = boundary_gradient_stats(solution, mask, config.band)
    gamma_length = float(segment_lengths(contour_segments(grid, state.phi)).sum())
    relations = c0_relations(mask.volume, solution.energy, gamma_length)
    connectivity = connectedness_check(mask)
    boundary = boundary_decompose(mask)
    touched = _walls_touched(mask)
    angles = contact_angles(grid, state.phi)
    violations = _monotonicity_violations(records)

    if not connectivity.connected:
        log.warning("optimizer output has %d components", connectivity.components)
    if records and violations > 0.05 * len(records):
        log.warning(
            "energy rose by more than %.1f%% in %d of %d iterations",
            100 * MONOTONICITY_SLACK,
            violations,
            len(records),
        )

    return OptimizerReport(
        target_volume=state.target_volume,
        records=records,
        energy_history=[r.energy for r in records] + [solution.energy],
        volume_history=[r.volume for r in records] + [mask.volume],
        final_state=state,
        final_solution=solution,
        gamma_length=gamma_length,
        gradient_mean=stats.mean,
        gradient_rel_stddev=stats.rel_stddev,
        c0_estimate=stats.c0_estimate,
        c0_identity=relations.identity,
        c0_lower=relations.lower,
        c0_consistent=relations.consistent,
        connected=connectivity.connected,
        components=connectivity.components,
        wall_contact=boundary.wall_measure > 0,
        wall_measure=boundary.wall_measure,
        walls_touched=touched,
        contact_angles=angles,
        converged=converged,
        monotonicity_violations=violations,
    )


def _walls_touched(mask: DomainMask) -> int:
    """Number of lateral wall faces (x_i = 0 or x_i = w_i) the mask reaches."""
    inside = mask.inside
    touched = 0
    for axis in range(mask.grid.dim - 1):
        touched += int(np.take(inside, 0, axis=axis).any())
        touched += int(np.take(inside, -1, axis=axis).any())
    return touched


def cell_swap_local_search(
    mask: DomainMask,
    config: OptimizerConfig | None = None,
    *,
    max_moves: int | None = None,
) -> tuple[DomainMask, SwapReport]:
    """Best-improvement search over one-in/one-out cell swaps at fixed cell count.

    A move removes one inside cell on Γ and adds one outside cell sharing a
    face with the mask. Candidates are scanned in increasing (removed, added)
    index order and only a strict improvement is applied.
    """
    config = config or OptimizerConfig()
    if mask.is_empty:
        raise InvalidParameterError("cell swap needs a nonempty starting mask")
    grid = mask.grid
    current = mask
    solution = solve_torsion(grid, current, config.solver_tol)
    history = [solution.energy]
    moves: list[tuple[int, int, float]] = []

    while max_moves is None or len(moves) < max_moves:
        removable = free_boundary_cells(current)
        addable = np.flatnonzero(outer_neighbors(current))
        best: tuple[float, int, int] | None = None
        best_solution = None
        base = current.inside.ravel()

        for removed in removable:
            for added in addable:
                trial_cells = base.copy()
                trial_cells[removed] = False
                trial_cells[added] = True
                trial = DomainMask(grid, trial_cells.reshape(grid.shape))
                trial_solution = solve_torsion(grid, trial, config.solver_tol, x0=solution.u)
                key = (trial_solution.energy, int(removed), int(added))
                if best is None or key < best:
                    best, best_solution = key, trial_solution

        current_energy = history[-1]
        if best is None or best[0] >= current_energy - 1e-12 * abs(current_energy):
            break
        current = best_solution.mask
        solution = best_solution
        history.append(best[0])
        moves.append((best[1], best[2], best[0]))
        log.debug("cell swap: moved %d -> %d, energy %.10g", best[1], best[2], best[0])

    return current, SwapReport(moves=moves, energy_history=history, final_energy=history[-1])


def _tie_threshold(best_energy: float) -> float:
    return best_energy + 1e-10 * abs(best_energy)


def brute_force_min(
    grid: CylinderGrid,
    k: int,
    cap: int | None = None,
    tol: float | None = None,
) -> BruteForceResult:
    """Exhaustive minimum over all k-cell masks outside the cap layer."""
    cap = cap if cap is not None else settings.CYLINDERS["ENUMERATION_CAP"]
    candidates = np.flatnonzero(~grid.cap_layer)
    if not 0 < k <= candidates.size:
        raise InvalidParameterError(f"cannot place {k} cells among {candidates.size} candidates")
    count = math.comb(candidates.size, k)
    if count > cap:
        raise EnumerationCapError(count, cap)

    log.info("enumerating %d masks of %d cells", count, k)
    best_energy, best_combo = math.inf, ()
    # Masks within the tie tolerance of the running best; the threshold only falls.
    ties: list[tuple[float, tuple[int, ...]]] = []
    for combo in itertools.combinations(candidates.tolist(), k):
        energy = solve_torsion(grid, DomainMask.from_indices(grid, combo), tol).energy
        if energy < best_energy:
            best_energy, best_combo = energy, combo
            ties = [(e, c) for e, c in ties if e <= _tie_threshold(best_energy)]
        if energy <= _tie_threshold(best_energy):
            ties.append((energy, combo))

    minimizers = [DomainMask.from_indices(grid, combo) for _, combo in ties]
    return BruteForceResult(
        mask=DomainMask.from_indices(grid, best_combo),
        energy=best_energy,
        count=count,
        minimizers=minimizers,
    )
