"""Motion-compensated temporal bilateral pre-filter and block matching.

All geometry uses (x, y) pixel coordinates; arrays are indexed [y, x].
Operations are pure: each output frame of the filter depends only on its
+/- radius neighborhood, so per-frame work parallelizes freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import map_coordinates

from .data import Frame, Sequence
from .errors import ConfigError, DimensionMismatchError, EmptyInputError

DEFAULT_RADIUS = 3
DEFAULT_SIGMA_T = 1.5
DEFAULT_SIGMA_R = 0.1
DEFAULT_BLOCK_RADIUS = 7
DEFAULT_SEARCH_RADIUS = 11
DEFAULT_GRID_SPACING = 16

_DEGENERATE_EPS = 1e-6


@dataclass
class DisplacementField:
    """Per-point displacements, with a low-confidence flag for flat blocks."""

    points: np.ndarray  # (P, 2) float (x, y)
    vectors: np.ndarray  # (P, 2) float (dx, dy)
    confidence: np.ndarray  # (P,) bool
    grid_shape: tuple[int, int] | None = None  # (rows, cols) for lattice fields

    def __post_init__(self):
        if self.points.shape != self.vectors.shape or self.points.shape[0] != len(self.confidence):
            raise DimensionMismatchError("points/vectors/confidence lengths disagree")
        if not np.isfinite(self.vectors).all():
            raise ConfigError("displacement vectors must be finite")

    def to_dense(self, height: int, width: int) -> np.ndarray:
        """Bilinearly interpolates lattice vectors to an (H, W, 2) field.

        Low-confidence points contribute zero motion.
        """
        if self.grid_shape is None:
            raise ConfigError("dense interpolation needs a lattice field")
        rows, cols = self.grid_shape
        vectors = np.where(self.confidence[:, None], self.vectors, 0.0)
        grid = vectors.reshape(rows, cols, 2)
        xs = self.points[:, 0].reshape(rows, cols)[0]
        ys = self.points[:, 1].reshape(rows, cols)[:, 0]
        out = np.empty((height, width, 2), dtype=np.float64)
        yy = np.clip(np.interp(np.arange(height), ys, np.arange(rows)), 0, rows - 1)
        xx = np.clip(np.interp(np.arange(width), xs, np.arange(cols)), 0, cols - 1)
        coords = np.meshgrid(yy, xx, indexing="ij")
        for c in range(2):
            out[..., c] = map_coordinates(grid[..., c], coords, order=1, mode="nearest")
        return out


def lattice_points(width: int, height: int, spacing: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Regular lattice covering [0, width) x [0, height), row-major points."""
    if spacing < 1:
        raise ConfigError(f"spacing must be >= 1, got {spacing}")
    cols = max(2, int(np.ceil((width - 1) / spacing)) + 1)
    rows = max(2, int(np.ceil((height - 1) / spacing)) + 1)
    xs = np.arange(cols) * spacing
    ys = np.arange(rows) * spacing
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx.ravel(), gy.ravel()], axis=1).astype(np.float64)
    return points, (rows, cols)


def _pixels(frame) -> np.ndarray:
    return frame.pixels if isinstance(frame, Frame) else np.asarray(frame)


def block_match(
    reference,
    target,
    points: np.ndarray,
    block_radius: int = DEFAULT_BLOCK_RADIUS,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    subpixel: bool = False,
    search_points: np.ndarray | None = None,
    grid_shape: tuple[int, int] | None = None,
) -> DisplacementField:
    """Finds, per point, the displacement minimizing block SSD.

    Blocks are read from ``reference`` around ``points``; the search window
    scans ``target`` around ``search_points`` (default: the same points).
    Integer SSD ties break by smaller displacement magnitude, then row-major
    window order.  Points without a complete evidence block -- all-constant
    blocks, or blocks extending past the image border -- are flagged
    low-confidence with zero displacement.  ``subpixel`` adds a parabolic
    fit of the SSD surface around the integer minimum.
    """
    ref = np.asarray(_pixels(reference), dtype=np.float64)
    tgt = np.asarray(_pixels(target), dtype=np.float64)
    if ref.shape != tgt.shape:
        raise DimensionMismatchError(f"reference {ref.shape} != target {tgt.shape}")
    if block_radius < 1 or search_radius < 1:
        raise ConfigError("block_radius and search_radius must be >= 1")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise EmptyInputError("no points to match")
    search_points = points if search_points is None else np.atleast_2d(search_points)
    if search_points.shape != points.shape:
        raise DimensionMismatchError("search_points must match points")

    b, s = block_radius, search_radius
    side = 2 * b + 1
    tgt_pad = np.pad(tgt, ((b + s, b + s), (b + s, b + s), (0, 0)), mode="reflect")
    h, w = ref.shape[:2]

    vectors = np.zeros_like(points)
    confidence = np.zeros(len(points), dtype=bool)

    for i, ((px, py), (qx, qy)) in enumerate(zip(points, search_points)):
        ix = int(np.clip(round(px), 0, w - 1))
        iy = int(np.clip(round(py), 0, h - 1))
        if ix < b or ix + b >= w or iy < b or iy + b >= h:
            continue
        block = ref[iy - b : iy + b + 1, ix - b : ix + b + 1]
        if block.max() - block.min() <= _DEGENERATE_EPS:
            continue
        jx = int(np.clip(round(qx), 0, w - 1))
        jy = int(np.clip(round(qy), 0, h - 1))
        region = tgt_pad[jy : jy + side + 2 * s, jx : jx + side + 2 * s]
        windows = sliding_window_view(region, (side, side), axis=(0, 1))
        ssd = ((windows - block.transpose(2, 0, 1)[None, None]) ** 2).sum(axis=(2, 3, 4))

        best = ssd.min()
        ties = np.argwhere(ssd == best)
        mags = (ties[:, 0] - s) ** 2 + (ties[:, 1] - s) ** 2
        row, col = ties[np.lexsort((ties[:, 1], ties[:, 0], mags))[0]]
        dy, dx = float(row - s), float(col - s)

        # A zero-SSD minimum is a perfect match; the parabola vertex through
        # its (asymmetric) neighbours would only add estimator bias.
        if subpixel and best > 0.0:
            if 0 < col < 2 * s:
                dx += _parabolic_offset(ssd[row, col - 1], ssd[row, col], ssd[row, col + 1])
            if 0 < row < 2 * s:
                dy += _parabolic_offset(ssd[row - 1, col], ssd[row, col], ssd[row + 1, col])

        vectors[i] = (dx, dy)
        confidence[i] = True

    return DisplacementField(
        points=points.copy(), vectors=vectors, confidence=confidence, grid_shape=grid_shape
    )


def _parabolic_offset(left: float, center: float, right: float) -> float:
    denom = left - 2.0 * center + right
    if denom <= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def estimate_motion(
    sequence: Sequence,
    spacing: int = DEFAULT_GRID_SPACING,
    block_radius: int = DEFAULT_BLOCK_RADIUS,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
) -> list[DisplacementField]:
    """Lattice block-match chain between consecutive frames (i -> i+1)."""
    points, shape = lattice_points(sequence.width, sequence.height, spacing)
    return [
        block_match(
            sequence.frames[i],
            sequence.frames[i + 1],
            points,
            block_radius=block_radius,
            search_radius=search_radius,
            subpixel=True,
            grid_shape=shape,
        )
        for i in range(len(sequence) - 1)
    ]


def _sample(pixels: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Bilinear sample of (H, W, C) pixels at (H, W, 2) positions (x, y)."""
    coords = [pos[..., 1], pos[..., 0]]
    out = np.empty_like(pixels, dtype=np.float64)
    for c in range(pixels.shape[2]):
        out[..., c] = map_coordinates(pixels[..., c], coords, order=1, mode="nearest")
    return out


def _aligned_positions(
    dense_fields: list[np.ndarray], t: int, j: int, base: np.ndarray
) -> np.ndarray:
    """Tracks pixel positions of frame t into frame j through the chain.

    Forward steps add the displacement sampled at the tracked position;
    backward steps subtract it (first-order inverse approximation).
    """
    pos = base.copy()
    if j > t:
        for k in range(t, j):
            pos = pos + _sample(dense_fields[k], pos)
    else:
        for k in range(t - 1, j - 1, -1):
            pos = pos - _sample(dense_fields[k], pos)
    return pos


def bilateral_temporal_filter(
    sequence: Sequence,
    radius: int = DEFAULT_RADIUS,
    sigma_t: float = DEFAULT_SIGMA_T,
    sigma_r: float = DEFAULT_SIGMA_R,
    motion: list[DisplacementField] | None = None,
) -> Sequence:
    """Per-pixel normalized average over temporally neighboring frames.

    Weights are exp(-dt^2 / 2 sigma_t^2) * exp(-||dI||^2 / 2 sigma_r^2)
    with ||dI||^2 summed over channels; the window t-radius..t+radius is
    clipped at the ends.  ``motion``, when given, is the consecutive-frame
    displacement chain from ``estimate_motion`` used to align neighbors.
    """
    if radius < 0:
        raise ConfigError(f"radius must be >= 0, got {radius}")
    if sigma_t <= 0 or sigma_r <= 0:
        raise ConfigError("sigma_t and sigma_r must be > 0")
    frames = np.stack([f.pixels for f in sequence.frames]).astype(np.float64)
    n, h, w, _ = frames.shape
    if motion is not None:
        if len(motion) != n - 1:
            raise DimensionMismatchError(f"motion chain length {len(motion)} != {n - 1}")
        dense = [field.to_dense(h, w) for field in motion]
        gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
        base = np.stack([gx, gy], axis=-1)

    out = np.empty_like(frames)
    for t in range(n):
        acc = np.zeros((h, w, 3))
        norm = np.zeros((h, w, 1))
        for j in range(max(0, t - radius), min(n - 1, t + radius) + 1):
            if j == t or motion is None:
                aligned = frames[j]
            else:
                aligned = _sample(frames[j], _aligned_positions(dense, t, j, base))
            dt = j - t
            w_t = np.exp(-(dt * dt) / (2.0 * sigma_t * sigma_t))
            diff = ((aligned - frames[t]) ** 2).sum(axis=2, keepdims=True)
            weight = w_t * np.exp(-diff / (2.0 * sigma_r * sigma_r))
            acc += weight * aligned
            norm += weight
        out[t] = acc / norm

    return Sequence(
        frames=[
            Frame(index=f.index, pixels=out[i].astype(np.float32))
            for i, f in enumerate(sequence.frames)
        ],
        masks=sequence.masks,
        guidance=sequence.guidance,
    )
