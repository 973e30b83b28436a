"""Deterministic synthetic frames and gaze traces for corpus-free runs."""

from __future__ import annotations

from itertools import cycle
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .geometry import GazeAngles

FRAME_KINDS = ("gradient", "checkerboard", "noise")


def textured_noise(seed: int, size: Tuple[int, int], blur: float = 0.7,
                   contrast: float = 70.0) -> np.ndarray:
    """Smoothed Gaussian noise, wrap-around periodic, mean 128."""
    width, height = size
    rng = np.random.default_rng(seed)
    field = gaussian_filter(rng.standard_normal((height, width)), blur, mode="wrap")
    field *= contrast / field.std()
    return np.clip(np.floor(field + 128.5), 0, 255).astype(np.uint8)


def synthetic_frame_source(kind: str, seed: int, size: Tuple[int, int],
                           velocity: Tuple[int, int] = (3, 1), **texture) -> Iterator[np.ndarray]:
    """Endless stream of ``(H, W)`` luma frames.

    ``gradient`` and ``checkerboard`` are static; ``noise`` is a textured
    field translating by ``velocity`` pixels per frame (wrapping around).
    """
    width, height = size
    if kind == "gradient":
        ramp = np.floor(np.linspace(0, 255, width) + 0.5).astype(np.uint8)
        frame = np.tile(ramp, (height, 1))
        while True:
            yield frame.copy()
    elif kind == "checkerboard":
        yy, xx = np.mgrid[0:height, 0:width]
        frame = np.where(((xx // 16) + (yy // 16)) % 2, 224, 32).astype(np.uint8)
        while True:
            yield frame.copy()
    elif kind == "noise":
        base = textured_noise(seed, size, **texture)
        vx, vy = velocity
        k = 0
        while True:
            yield np.roll(base, (k * vy, k * vx), axis=(0, 1))
            k += 1
    else:
        raise ValueError(f"unknown frame source {kind!r}; choose from {FRAME_KINDS}")


def image_frame_source(paths: Sequence) -> Iterator[np.ndarray]:
    """Cycle through image files (PPM/PGM or anything Pillow reads)."""
    frames = [read_image(p) for p in paths]
    if not frames:
        raise ValueError("no input images")
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ValueError(f"input images differ in size: {sorted(shapes)}")
    for f in cycle(frames):
        yield f.copy()


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.array(im, dtype=np.uint8)


def write_image(path, frame: np.ndarray) -> None:
    """Binary PGM (luma) or PPM (RGB)."""
    Image.fromarray(np.ascontiguousarray(frame)).save(path, format="PPM")


def synthetic_gaze_trace(seed: int, duration_ms: float, rate_hz: float = 200.0,
                         yaw_range: float = 20.0, pitch_range: float = 15.0,
                         fixation_ms: Tuple[float, float] = (200.0, 600.0)) -> List[GazeAngles]:
    """Fixations at random targets joined by instantaneous saccades, with small jitter."""
    rng = np.random.default_rng(seed)
    dt = 1000.0 / rate_hz
    out = []
    t = 0.0
    yaw = pitch = 0.0
    next_saccade = 0.0
    while t <= duration_ms:
        if t >= next_saccade:
            yaw = rng.uniform(-yaw_range, yaw_range)
            pitch = rng.uniform(-pitch_range, pitch_range)
            next_saccade = t + rng.uniform(*fixation_ms)
        out.append(GazeAngles(yaw + rng.normal(0, 0.2), pitch + rng.normal(0, 0.2), t))
        t += dt
    return out
