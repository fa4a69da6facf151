"""Shared synthetic fixtures.

The core fixture is an analytically generated sequence: a textured disc
translating and rotating over a smooth static background.  Because the
texture is sampled from a closed-form function of continuous coordinates,
every frame's motion is known exactly, which gives the registration and
guidance tests a ground truth that does not depend on any resampling code
in the package under test.

The procedural "style" (posterize plus edge ink) plays the role of a
hand-painted exemplar: it is a deterministic, content-dependent recoloring
that a translation network can actually learn.
"""

from __future__ import annotations

import numpy as np
import pytest

from patchstyle import Frame, Keyframe, Mask, Sequence


def texture_rgb(x, y):
    """Analytic RGB texture over continuous coordinates, values in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = 0.5 + 0.25 * np.sin(0.55 * x) * np.cos(0.35 * y) + 0.25 * np.sin(0.13 * (x + y))
    g = 0.5 + 0.25 * np.cos(0.45 * x + 1.7) * np.sin(0.5 * y) + 0.25 * np.cos(0.11 * (x - y))
    b = 0.5 + 0.25 * np.sin(0.4 * x + 0.9) * np.sin(0.3 * y + 2.1) + 0.25 * np.sin(0.17 * y)
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def background_rgb(width, height):
    """Smooth static background pattern."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r = 0.35 + 0.1 * np.sin(2 * np.pi * xx / width)
    g = 0.4 + 0.1 * np.cos(2 * np.pi * yy / height)
    b = 0.45 + 0.08 * np.sin(2 * np.pi * (xx + yy) / (width + height))
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def disc_frame(width, height, center, angle, radius=None):
    """One frame: the analytic texture inside a rotated disc, background outside."""
    if radius is None:
        radius = min(width, height) / 3.5
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xx - center[0]
    dy = yy - center[1]
    cos_a, sin_a = np.cos(-angle), np.sin(-angle)
    tx = cos_a * dx - sin_a * dy
    ty = sin_a * dx + cos_a * dy
    inside = dx * dx + dy * dy <= radius * radius
    pixels = background_rgb(width, height)
    tex = texture_rgb(tx, ty)
    pixels[inside] = tex[inside]
    return pixels.astype(np.float32)


def make_frames(count, size=(64, 64), velocity=(1.0, 0.5), omega=0.02, radius=None):
    """Analytic sequence of a translating, rotating textured disc.

    Returns (N, H, W, 3) float32. Frame i has disc center start + i*velocity
    and disc rotation i*omega radians.
    """
    width, height = size
    start = (width / 2.0 - velocity[0] * (count - 1) / 2.0,
             height / 2.0 - velocity[1] * (count - 1) / 2.0)
    frames = np.empty((count, height, width, 3), dtype=np.float32)
    for i in range(count):
        center = (start[0] + i * velocity[0], start[1] + i * velocity[1])
        frames[i] = disc_frame(width, height, center, i * omega, radius=radius)
    return frames


def procedural_style(pixels, levels=4, edge_threshold=0.5):
    """Posterize plus edge ink: a deterministic stand-in for a painted exemplar."""
    pixels = np.asarray(pixels, dtype=np.float64)
    poster = (np.floor(pixels * levels) + 0.5) / levels
    gray = pixels.mean(axis=-1)
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    gx[:, 1:-1] = gray[:, 2:] - gray[:, :-2]
    gy[1:-1, :] = gray[2:, :] - gray[:-2, :]
    edges = np.hypot(gx, gy)
    ink = edges > edge_threshold * edges.max() if edges.max() > 0 else np.zeros_like(edges, bool)
    styled = poster.copy()
    styled[ink] = 0.05
    return np.clip(styled, 0.0, 1.0).astype(np.float32)


def sequence_from_frames(frames):
    return Sequence(frames=[Frame(i, f) for i, f in enumerate(frames)])


def keyframe_from_frames(frames, index=0, mask_bits=None, guidance=None):
    frame = Frame(index, frames[index])
    style = Frame(index, procedural_style(frames[index]))
    if mask_bits is None:
        mask = Mask.full(frames[index].shape[0], frames[index].shape[1])
    else:
        mask = Mask(np.asarray(mask_bits, dtype=bool))
    return Keyframe(index=index, input=frame, style=style, mask=mask, guidance=guidance)


@pytest.fixture
def small_frames():
    return make_frames(6, size=(48, 48), velocity=(1.5, 1.0), omega=0.03)


@pytest.fixture
def small_sequence(small_frames):
    return sequence_from_frames(small_frames)


@pytest.fixture
def small_keyframe(small_frames):
    return keyframe_from_frames(small_frames, index=0)


def write_png(path, pixels):
    from patchstyle.data import array_to_image

    array_to_image(pixels).save(path)


def write_frame_dir(directory, frames):
    directory.mkdir(parents=True, exist_ok=True)
    for i, pixels in enumerate(frames):
        write_png(directory / f"{i:05d}.png", pixels)
    return directory
