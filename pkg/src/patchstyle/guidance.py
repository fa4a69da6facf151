"""Randomly colored Gaussian guidance layers advected by the lattice.

Gaussians are generated once on the keyframe (rest) extent and carried by
the deformable grid: each center is attached to its enclosing cell with
bilinear cell coordinates, so the deformed grid moves Gaussian positions
while footprints stay isotropic.  Rasterization accumulates in float64 over
windows of +/- 6 sigma per Gaussian, then clamps to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arap import DeformableGrid, arap_register, make_grid
from .data import GuidanceLayer, Sequence
from .errors import ConfigError, DimensionMismatchError, EmptyInputError
from .temporal import DEFAULT_BLOCK_RADIUS, DEFAULT_GRID_SPACING, DEFAULT_SEARCH_RADIUS

DEFAULT_SIGMA_RANGE = (6.0, 12.0)
DEFAULT_AREA_PER_GAUSSIAN = 2000.0
_WINDOW_SIGMAS = 6.0


@dataclass
class GaussianSet:
    """Colored isotropic Gaussians at rest (keyframe) positions."""

    positions: np.ndarray  # (G, 2) float (x, y) on the rest extent
    colors: np.ndarray  # (G, 3) in [0, 1]
    sigmas: np.ndarray  # (G,) pixels, > 0
    amplitudes: np.ndarray  # (G,) in (0, 1]

    def __post_init__(self):
        count = len(self.positions)
        if self.positions.shape != (count, 2) or self.colors.shape != (count, 3):
            raise DimensionMismatchError("positions/colors shapes disagree")
        if self.sigmas.shape != (count,) or self.amplitudes.shape != (count,):
            raise DimensionMismatchError("sigmas/amplitudes shapes disagree")
        if count and (self.sigmas <= 0).any():
            raise ConfigError("sigmas must be > 0")
        if count and ((self.amplitudes <= 0) | (self.amplitudes > 1)).any():
            raise ConfigError("amplitudes must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.positions)


def default_count(extent: tuple[int, int]) -> int:
    width, height = extent
    return max(1, int(round(width * height / DEFAULT_AREA_PER_GAUSSIAN)))


def generate_gaussians(
    extent: tuple[int, int],
    count: int | None = None,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE,
    seed: int = 0,
    amplitude: float = 1.0,
) -> GaussianSet:
    """Uniform random centers/colors/sigmas over the (width, height) extent."""
    width, height = extent
    if width < 1 or height < 1:
        raise ConfigError(f"extent must be positive, got {extent}")
    if count is None:
        count = default_count(extent)
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    lo, hi = sigma_range
    if lo <= 0 or hi < lo:
        raise ConfigError(f"invalid sigma_range {sigma_range}")
    rng = np.random.default_rng(seed)
    positions = rng.uniform((0.0, 0.0), (width, height), size=(count, 2))
    colors = rng.uniform(0.0, 1.0, size=(count, 3))
    sigmas = rng.uniform(lo, hi, size=count)
    return GaussianSet(
        positions=positions,
        colors=colors.astype(np.float64),
        sigmas=sigmas,
        amplitudes=np.full(count, float(amplitude)),
    )


def _deformed_positions(gaussians: GaussianSet, grid: DeformableGrid) -> np.ndarray:
    """Maps rest positions through the grid via bilinear cell coordinates."""
    rows, cols = grid.shape
    spacing = grid.spacing
    pos = gaussians.positions
    cx = np.clip((pos[:, 0] // spacing).astype(int), 0, cols - 2)
    cy = np.clip((pos[:, 1] // spacing).astype(int), 0, rows - 2)
    u = pos[:, 0] / spacing - cx
    v = pos[:, 1] / spacing - cy
    p = grid.current_points
    i00 = cy * cols + cx
    p00, p01 = p[i00], p[i00 + 1]
    p10, p11 = p[i00 + cols], p[i00 + cols + 1]
    top = (1 - u)[:, None] * p00 + u[:, None] * p01
    bottom = (1 - u)[:, None] * p10 + u[:, None] * p11
    return (1 - v)[:, None] * top + v[:, None] * bottom


def rasterize_guidance(
    gaussians: GaussianSet,
    grid: DeformableGrid | None,
    extent: tuple[int, int],
) -> GuidanceLayer:
    """Renders clamp(sum_g amp_g * color_g * exp(-d^2 / 2 sigma_g^2), 0, 1).

    With a grid, centers move to their deformed positions; without one they
    stay at rest.  Footprints remain isotropic either way.
    """
    width, height = extent
    if width < 1 or height < 1:
        raise ConfigError(f"extent must be positive, got {extent}")
    canvas = np.zeros((height, width, 3), dtype=np.float64)
    if len(gaussians):
        centers = (
            gaussians.positions if grid is None else _deformed_positions(gaussians, grid)
        )
        for (px, py), color, sigma, amp in zip(
            centers, gaussians.colors, gaussians.sigmas, gaussians.amplitudes
        ):
            margin = _WINDOW_SIGMAS * sigma
            x0 = max(0, int(np.floor(px - margin)))
            x1 = min(width, int(np.ceil(px + margin)) + 1)
            y0 = max(0, int(np.floor(py - margin)))
            y1 = min(height, int(np.ceil(py + margin)) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            xs = np.arange(x0, x1, dtype=np.float64) - px
            ys = np.arange(y0, y1, dtype=np.float64) - py
            d2 = ys[:, None] ** 2 + xs[None, :] ** 2
            kernel = amp * np.exp(-d2 / (2.0 * sigma * sigma))
            canvas[y0:y1, x0:x1] += kernel[:, :, None] * color[None, None, :]
    return GuidanceLayer(np.clip(canvas, 0.0, 1.0).astype(np.float32))


def propagate_guidance(
    sequence: Sequence,
    keyframe_index: int,
    gaussians: GaussianSet,
    spacing: int = DEFAULT_GRID_SPACING,
    rigidity_weight: float = 1.0,
    iterations: int = 10,
    block_radius: int = DEFAULT_BLOCK_RADIUS,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    frame_indices: list[int] | None = None,
) -> list[GuidanceLayer]:
    """Advects the keyframe's Gaussians to each requested frame.

    Every frame registers independently against the keyframe (starting from
    the rest grid), so computation order is irrelevant and results for a
    frame never depend on which other frames were computed.
    """
    if not 0 <= keyframe_index < len(sequence):
        raise EmptyInputError(f"keyframe index {keyframe_index} outside sequence")
    indices = list(range(len(sequence))) if frame_indices is None else list(frame_indices)
    reference = sequence.frames[keyframe_index].pixels
    extent = (sequence.width, sequence.height)
    rest = make_grid(*extent, spacing=spacing, rigidity_weight=rigidity_weight)
    layers = []
    for index in indices:
        if not 0 <= index < len(sequence):
            raise EmptyInputError(f"frame index {index} outside sequence")
        if index == keyframe_index:
            layers.append(rasterize_guidance(gaussians, rest, extent))
            continue
        registered = arap_register(
            rest,
            reference,
            sequence.frames[index].pixels,
            iterations=iterations,
            block_radius=block_radius,
            search_radius=search_radius,
        )
        layers.append(rasterize_guidance(gaussians, registered, extent))
    return layers


def nearest_keyframe(index: int, keyframe_indices: list[int]) -> int:
    """Selection rule for multi-keyframe guidance: nearest, ties to lower."""
    if not keyframe_indices:
        raise EmptyInputError("no keyframe indices")
    return min(keyframe_indices, key=lambda k: (abs(k - index), k))
