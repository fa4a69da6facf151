"""As-rigid-as-possible lattice registration.

A regular lattice is deformed to register a reference frame onto a target
frame by alternating two steps: block matching proposes per-point targets,
then a local/global solve regularizes the lattice.  The local step fits one
best rotation per cell (2x2 covariance, polar/SVD); the global step solves
the sparse linear system minimizing

    E(p) = sum_i conf_i ||p_i - t_i||^2
         + w * sum_cells sum_edges ||(p_i - p_j) - R_cell (r_i - r_j)||^2

Both steps minimize E over their block of variables, so E never increases
within one regularization solve.  Registration is keyframe-to-frame direct
and deterministic; frames register independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConfigError, DimensionMismatchError
from .temporal import (
    DEFAULT_BLOCK_RADIUS,
    DEFAULT_GRID_SPACING,
    DEFAULT_SEARCH_RADIUS,
    block_match,
    lattice_points,
)

DEFAULT_ITERATIONS = 10
DEFAULT_INNER_ITERATIONS = 4

_DEGENERATE_SV = 1e-12


@dataclass
class DeformableGrid:
    """Regular rest lattice plus its deformed positions, both (P, 2) (x, y)."""

    spacing: int
    shape: tuple[int, int]  # (rows, cols)
    rest_points: np.ndarray
    current_points: np.ndarray
    rigidity_weight: float = 1.0

    def __post_init__(self):
        rows, cols = self.shape
        if rows < 2 or cols < 2:
            raise ConfigError(f"grid must be at least 2x2, got {self.shape}")
        if self.rest_points.shape != (rows * cols, 2):
            raise DimensionMismatchError("rest_points do not match grid shape")
        if self.current_points.shape != self.rest_points.shape:
            raise DimensionMismatchError("current_points do not match rest_points")
        if self.rigidity_weight <= 0:
            raise ConfigError("rigidity_weight must be > 0")

    @property
    def point_count(self) -> int:
        return self.rest_points.shape[0]


def make_grid(
    width: int,
    height: int,
    spacing: int = DEFAULT_GRID_SPACING,
    rigidity_weight: float = 1.0,
) -> DeformableGrid:
    """Builds the rest lattice covering the extent, initially undeformed."""
    points, shape = lattice_points(width, height, spacing)
    return DeformableGrid(
        spacing=spacing,
        shape=shape,
        rest_points=points,
        current_points=points.copy(),
        rigidity_weight=rigidity_weight,
    )


def cell_corner_indices(shape: tuple[int, int]) -> np.ndarray:
    """(cells, 4) point indices per cell: [top-left, top-right, bottom-left, bottom-right]."""
    rows, cols = shape
    r, c = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    i00 = (r * cols + c).ravel()
    return np.stack([i00, i00 + 1, i00 + cols, i00 + cols + 1], axis=1)


def cell_edges(shape: tuple[int, int]) -> np.ndarray:
    """(cells, 4, 2) index pairs for the four sides of each cell."""
    corners = cell_corner_indices(shape)
    i00, i01, i10, i11 = corners.T
    return np.stack(
        [
            np.stack([i00, i01], axis=1),
            np.stack([i00, i10], axis=1),
            np.stack([i11, i01], axis=1),
            np.stack([i11, i10], axis=1),
        ],
        axis=1,
    )


def fit_cell_rotations(grid: DeformableGrid, points: np.ndarray | None = None) -> np.ndarray:
    """Best-fit rotation per cell mapping rest edges onto deformed edges.

    Degenerate cells (vanishing covariance) fall back to the identity.
    """
    p = grid.current_points if points is None else points
    edges = cell_edges(grid.shape)
    d_rest = grid.rest_points[edges[:, :, 0]] - grid.rest_points[edges[:, :, 1]]
    d_curr = p[edges[:, :, 0]] - p[edges[:, :, 1]]
    covariances = np.einsum("ceu,cev->cuv", d_rest, d_curr)

    rotations = np.empty((len(covariances), 2, 2))
    for idx, cov in enumerate(covariances):
        u, s, vt = np.linalg.svd(cov)
        if s[0] <= _DEGENERATE_SV:
            rotations[idx] = np.eye(2)
            continue
        v = vt.T
        d = np.sign(np.linalg.det(v @ u.T)) or 1.0
        rotations[idx] = v @ np.diag([1.0, d]) @ u.T
    return rotations


def rotation_angles(rotations: np.ndarray) -> np.ndarray:
    """Signed rotation angles in degrees."""
    return np.degrees(np.arctan2(rotations[:, 1, 0], rotations[:, 0, 0]))


def arap_energy(
    grid: DeformableGrid,
    points: np.ndarray,
    targets: np.ndarray,
    confidence: np.ndarray,
    rotations: np.ndarray,
) -> float:
    """Evaluates E(p, R) for the given positions and per-cell rotations."""
    fit = (confidence[:, None] * (points - targets) ** 2).sum()
    edges = cell_edges(grid.shape)
    d_rest = grid.rest_points[edges[:, :, 0]] - grid.rest_points[edges[:, :, 1]]
    d_curr = points[edges[:, :, 0]] - points[edges[:, :, 1]]
    rotated = np.einsum("cuv,cev->ceu", rotations, d_rest)
    rigidity = ((d_curr - rotated) ** 2).sum()
    return float(fit + grid.rigidity_weight * rigidity)


def regularize_grid(
    grid: DeformableGrid,
    targets: np.ndarray,
    confidence: np.ndarray,
    inner_iterations: int = DEFAULT_INNER_ITERATIONS,
) -> tuple[DeformableGrid, list[float]]:
    """One regularization solve: alternate rotation fits and global solves.

    Returns the updated grid and the energy trace recorded after every
    half-step (rotation fit, then position solve); the trace is monotone
    non-increasing.  With no confident targets the grid is returned as is.
    """
    if inner_iterations < 1:
        raise ConfigError("inner_iterations must be >= 1")
    targets = np.asarray(targets, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    if targets.shape != grid.rest_points.shape or len(confidence) != grid.point_count:
        raise DimensionMismatchError("targets/confidence do not match the grid")
    if not confidence.any():
        return grid, []

    n = grid.point_count
    w = grid.rigidity_weight
    edges = cell_edges(grid.shape).reshape(-1, 2)
    d_rest = grid.rest_points[edges[:, 0]] - grid.rest_points[edges[:, 1]]

    # The quadratic form is identical for x and y; build and factor it once.
    diag = scipy.sparse.coo_matrix(
        (confidence, (np.arange(n), np.arange(n))), shape=(n, n)
    )
    ones = np.full(len(edges), w)
    lap = scipy.sparse.coo_matrix(
        (
            np.concatenate([ones, ones, -ones, -ones]),
            (
                np.concatenate([edges[:, 0], edges[:, 1], edges[:, 0], edges[:, 1]]),
                np.concatenate([edges[:, 0], edges[:, 1], edges[:, 1], edges[:, 0]]),
            ),
        ),
        shape=(n, n),
    )
    solve = scipy.sparse.linalg.factorized((diag + lap).tocsc())

    points = grid.current_points.astype(np.float64).copy()
    energies = []
    cells = len(cell_corner_indices(grid.shape))
    for _ in range(inner_iterations):
        rotations = fit_cell_rotations(grid, points)
        energies.append(arap_energy(grid, points, targets, confidence, rotations))

        per_edge_rot = np.repeat(rotations, 4, axis=0)[: cells * 4]
        rotated = np.einsum("euv,ev->eu", per_edge_rot, d_rest)
        rhs = confidence[:, None] * targets
        np.add.at(rhs, edges[:, 0], w * rotated)
        np.add.at(rhs, edges[:, 1], -w * rotated)
        points = np.stack([solve(rhs[:, 0]), solve(rhs[:, 1])], axis=1)
        energies.append(arap_energy(grid, points, targets, confidence, rotations))

    return replace(grid, current_points=points), energies


def arap_register(
    grid: DeformableGrid,
    reference,
    target,
    iterations: int = DEFAULT_ITERATIONS,
    block_radius: int = DEFAULT_BLOCK_RADIUS,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    inner_iterations: int = DEFAULT_INNER_ITERATIONS,
    subpixel: bool = True,
) -> DeformableGrid:
    """Registers reference onto target by deforming the grid.

    Each iteration block-matches rest-point neighborhoods of the reference
    around the current point estimates in the target, then regularizes the
    proposed targets with the ARAP solve.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    current = grid.current_points.astype(np.float64).copy()
    for _ in range(iterations):
        field = block_match(
            reference,
            target,
            grid.rest_points,
            block_radius=block_radius,
            search_radius=search_radius,
            subpixel=subpixel,
            search_points=current,
        )
        proposed = current + field.vectors
        working = replace(grid, current_points=current)
        solved, _ = regularize_grid(working, proposed, field.confidence, inner_iterations)
        current = solved.current_points
    return replace(grid, current_points=current)


def grid_edge_lengths(grid: DeformableGrid, points: np.ndarray | None = None) -> np.ndarray:
    """Lengths of all cell edges at the given positions (default: current)."""
    p = grid.current_points if points is None else points
    edges = cell_edges(grid.shape).reshape(-1, 2)
    deltas = p[edges[:, 0]] - p[edges[:, 1]]
    return np.linalg.norm(deltas, axis=1)
