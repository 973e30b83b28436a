"""Foveated spatial compression (FSC) and decompression (FSD).

Each axis is remapped by a three-piece linear function: the periphery on
either side of the gaze point is sampled every ``comp`` source pixels, the
fovea span around the gaze is copied 1:1. The y axis is handled exactly like
the x axis with its own size/compression ratio.

Coordinates are pixel indices (pixel ``i`` sits at coordinate ``i``).
Frames are plain ``numpy`` arrays, ``(H, W)`` for luma or ``(H, W, 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import sparse

ALIGNMENT = 32


@dataclass(frozen=True)
class FscParams:
    x_size: float = 0.45
    y_size: float = 0.4
    x_comp: float = 4.0
    y_comp: float = 5.0

    def __post_init__(self):
        for name in ("x_size", "y_size"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        for name in ("x_comp", "y_comp"):
            v = getattr(self, name)
            if v < 1.0:
                raise ValueError(f"{name} must be >= 1, got {v}")


def check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype != np.uint8:
        raise TypeError(f"frames are 8-bit, got dtype {frame.dtype}")
    if frame.ndim not in (2, 3) or (frame.ndim == 3 and frame.shape[2] not in (1, 3)):
        raise ValueError(f"expected (H, W) or (H, W, 3) frame, got shape {frame.shape}")
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise ValueError("frame has zero size")
    return frame


def align_to(value: float, multiple: int = ALIGNMENT) -> int:
    """Round to the nearest multiple (halves round up)."""
    return int(math.floor(value / multiple + 0.5)) * multiple


def fsc_extent_raw(full: float, size: float, comp: float) -> float:
    return full * (size + (1.0 - size) / comp)


def fsc_dimensions_raw(width: int, height: int, params: FscParams) -> Tuple[float, float]:
    return (
        fsc_extent_raw(width, params.x_size, params.x_comp),
        fsc_extent_raw(height, params.y_size, params.y_comp),
    )


def fsc_dimensions(width: int, height: int, params: FscParams,
                   alignment: int = ALIGNMENT) -> Tuple[int, int]:
    """FSC frame size for a ``width x height`` game frame.

    The raw sizes are rounded to the nearest multiple of ``alignment`` so
    that the result tiles cleanly into codec macroblocks; 3712x2016 with the
    default parameters gives 2176x1056.
    """
    raw_w, raw_h = fsc_dimensions_raw(width, height, params)
    out_w, out_h = align_to(raw_w, alignment), align_to(raw_h, alignment)
    if out_w < alignment or out_h < alignment:
        raise ValueError(
            f"FSC frame for {width}x{height} would be {raw_w:.1f}x{raw_h:.1f}, "
            f"below the {alignment}-pixel minimum")
    return out_w, out_h


def fsc_axis_bounds(full: float, fsc: float, gaze: float, size: float,
                    comp: float) -> Tuple[float, float]:
    """Fovea bounds in FSC pixels, derived from continuity of the three pieces.

    ``fsc`` is accepted for symmetry with the map inputs; the closed form
    only depends on the game-frame extent.
    """
    left = (1.0 - size) * gaze / comp
    return left, left + size * full


@dataclass(frozen=True)
class AxisMapSpec:
    """One axis of the FSC/FSD remap.

    ``fsc_extent`` is the real-valued FSC extent the right periphery ends
    at; ``comp`` the peripheral sampling step.
    """

    full_extent: float
    fsc_extent: float
    gaze: float
    size: float
    comp: float

    @classmethod
    def nominal(cls, full: float, gaze: float, size: float, comp: float) -> "AxisMapSpec":
        """Unaligned map with the raw FSC extent and the gaze used as given."""
        gaze = min(max(float(gaze), 0.0), float(full))
        return cls(float(full), fsc_extent_raw(full, size, comp), gaze, size, comp)

    @classmethod
    def for_frame(cls, full: int, fsc: int, gaze: float, size: float,
                  comp: float) -> "AxisMapSpec":
        """Map onto an integer (aligned) FSC extent.

        The peripheral ratio is re-derived so the periphery exactly fills the
        aligned extent, and the gaze is nudged so the fovea shift is a whole
        number of pixels; this keeps fovea pixels bit-exact through a
        compress/decompress round trip. The nudge is deterministic, so both
        ends derive the same map from the same integer gaze.
        """
        full_f = float(full)
        fsc = min(int(fsc), int(full))
        if size >= 1.0 or fsc >= full or comp == 1.0:
            return cls(full_f, full_f, min(max(float(gaze), 0.0), full_f), 1.0, 1.0)
        if fsc <= size * full_f:
            raise ValueError(
                f"FSC extent {fsc} leaves no room for a periphery around a "
                f"{size * full_f:.1f}-pixel fovea")
        comp_eff = (1.0 - size) * full_f / (fsc - size * full_f)
        k = (comp_eff - 1.0) / comp_eff * (1.0 - size)
        gaze = min(max(float(gaze), 0.0), full_f)
        shift = math.floor(k * gaze + 0.5)
        return cls(full_f, float(fsc), shift / k, size, comp_eff)

    @property
    def shift(self) -> float:
        """Offset ``c_f * W_o`` between FSC and game coordinates in the fovea."""
        return (self.comp - 1.0) / self.comp * (1.0 - self.size) * self.gaze

    @property
    def bounds(self) -> Tuple[float, float]:
        return fsc_axis_bounds(self.full_extent, self.fsc_extent, self.gaze,
                               self.size, self.comp)

    @property
    def game_bounds(self) -> Tuple[float, float]:
        left = (1.0 - self.size) * self.gaze
        return left, left + self.size * self.full_extent


def fsc_map_axis(i, spec: AxisMapSpec):
    """Game-frame source coordinate for FSC coordinate(s) ``i``."""
    i = np.asarray(i, dtype=np.float64)
    left, right = spec.bounds
    out = np.where(
        i < left,
        spec.comp * i,
        np.where(i > right,
                 spec.comp * i + spec.full_extent * (1.0 - spec.comp) * spec.size,
                 i + spec.shift))
    return out if out.ndim else float(out)


def fsd_map_axis(i, spec: AxisMapSpec):
    """FSC source coordinate for game-frame coordinate(s) ``i``; inverse of fsc_map_axis."""
    i = np.asarray(i, dtype=np.float64)
    left, right = spec.game_bounds
    out = np.where(
        i < left,
        i / spec.comp,
        np.where(i > right,
                 (i - spec.full_extent) / spec.comp + spec.fsc_extent,
                 i - spec.shift))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FscLayout:
    """Both axis maps for one game frame, FSC frame size and gaze."""

    x: AxisMapSpec
    y: AxisMapSpec
    game_size: Tuple[int, int]
    fsc_size: Tuple[int, int]

    @classmethod
    def build(cls, game_size: Tuple[int, int], params: FscParams, gaze,
              fsc_size: Tuple[int, int] | None = None) -> "FscLayout":
        width, height = game_size
        if fsc_size is None:
            fsc_size = fsc_dimensions(width, height, params)
        fw, fh = fsc_size
        gx, gy = _gaze_xy(gaze)
        x = AxisMapSpec.for_frame(width, fw, gx, params.x_size, params.x_comp)
        y = AxisMapSpec.for_frame(height, fh, gy, params.y_size, params.y_comp)
        return cls(x, y, (int(width), int(height)), (int(fw), int(fh)))

    def fovea_rect(self) -> Tuple[int, int, int, int]:
        """Integer game-frame pixel rectangle ``(x0, y0, x1, y1)`` (exclusive end) copied 1:1."""
        x0, x1 = self.x.game_bounds
        y0, y1 = self.y.game_bounds
        return (math.ceil(x0), math.ceil(y0),
                min(math.floor(x1), self.game_size[0] - 1) + 1,
                min(math.floor(y1), self.game_size[1] - 1) + 1)


def _gaze_xy(gaze) -> Tuple[float, float]:
    if hasattr(gaze, "x"):
        return float(gaze.x), float(gaze.y)
    gx, gy = gaze
    return float(gx), float(gy)


def _bilinear_matrix(coords: np.ndarray, n_in: int) -> sparse.csr_matrix:
    coords = np.clip(coords, 0.0, n_in - 1)
    i0 = np.floor(coords).astype(np.int64)
    frac = coords - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    rows = np.arange(len(coords))
    keep = frac > 0.0
    data = np.concatenate([1.0 - frac, frac[keep]])
    r = np.concatenate([rows, rows[keep]])
    c = np.concatenate([i0, i1[keep]])
    return sparse.csr_matrix((data, (r, c)), shape=(len(coords), n_in))


def _box_matrix(lo: np.ndarray, hi: np.ndarray, n_in: int) -> sparse.csr_matrix:
    """Area-average source cells ``[k-0.5, k+0.5]`` over each ``[lo, hi]`` footprint."""
    lo = np.clip(lo, -0.5, n_in - 0.5)
    hi = np.clip(hi, -0.5, n_in - 0.5)
    k0 = np.floor(lo + 0.5).astype(np.int64)
    span = int(np.max(np.ceil(hi - lo))) + 2
    ks = k0[:, None] + np.arange(span)[None, :]
    w = np.minimum(hi[:, None], ks + 0.5) - np.maximum(lo[:, None], ks - 0.5)
    w = np.where((ks < n_in) & (w > 0), w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    rows = np.broadcast_to(np.arange(len(lo))[:, None], ks.shape)
    keep = w > 0
    return sparse.csr_matrix((w[keep], (rows[keep], ks[keep])), shape=(len(lo), n_in))


def compress_matrix(spec: AxisMapSpec, n_out: int, n_in: int,
                    prefilter: bool = False) -> sparse.csr_matrix:
    idx = np.arange(n_out, dtype=np.float64)
    if not prefilter:
        return _bilinear_matrix(fsc_map_axis(idx, spec), n_in)
    # footprint of FSC pixel i is the image of [i-0.5, i+0.5]; in the fovea
    # that is exactly one source cell, so fovea pixels are still copied
    lo = fsc_map_axis(idx - 0.5, spec)
    hi = fsc_map_axis(idx + 0.5, spec)
    return _box_matrix(lo, hi, n_in)


def decompress_matrix(spec: AxisMapSpec, n_out: int, n_in: int) -> sparse.csr_matrix:
    return _bilinear_matrix(fsd_map_axis(np.arange(n_out, dtype=np.float64), spec), n_in)


def _apply(frame: np.ndarray, rows: sparse.csr_matrix, cols: sparse.csr_matrix) -> np.ndarray:
    planes = frame[..., None] if frame.ndim == 2 else frame
    out = []
    for p in range(planes.shape[2]):
        plane = planes[..., p].astype(np.float64)
        tmp = rows @ plane
        res = (cols @ tmp.T).T
        out.append(np.clip(np.floor(res + 0.5), 0, 255).astype(np.uint8))
    stacked = np.stack(out, axis=2)
    return stacked[..., 0] if frame.ndim == 2 else stacked


def compress_frame(frame: np.ndarray, params: FscParams, gaze,
                   prefilter: bool = False, layout: FscLayout | None = None) -> np.ndarray:
    """Warp a game frame into its (smaller) FSC frame around ``gaze``.

    ``prefilter=True`` area-averages each peripheral sample over its source
    footprint instead of bilinear point sampling.
    """
    frame = check_frame(frame)
    height, width = frame.shape[:2]
    if layout is None:
        layout = FscLayout.build((width, height), params, gaze)
    elif layout.game_size != (width, height):
        raise ValueError(f"layout is for {layout.game_size}, frame is {(width, height)}")
    fw, fh = layout.fsc_size
    cols = compress_matrix(layout.x, fw, width, prefilter)
    rows = compress_matrix(layout.y, fh, height, prefilter)
    return _apply(frame, rows, cols)


def decompress_frame(fsc_frame: np.ndarray, params: FscParams, gaze,
                     game_size: Tuple[int, int], layout: FscLayout | None = None) -> np.ndarray:
    """Expand an FSC frame back to ``game_size = (width, height)``."""
    fsc_frame = check_frame(fsc_frame)
    fh, fw = fsc_frame.shape[:2]
    if layout is None:
        layout = FscLayout.build(game_size, params, gaze)
    if layout.fsc_size != (fw, fh):
        raise ValueError(
            f"FSC frame is {fw}x{fh} but a {game_size[0]}x{game_size[1]} game frame "
            f"maps to {layout.fsc_size[0]}x{layout.fsc_size[1]}")
    width, height = layout.game_size
    cols = decompress_matrix(layout.x, width, fw)
    rows = decompress_matrix(layout.y, height, fh)
    return _apply(fsc_frame, rows, cols)


def compress_stereo(frame: np.ndarray, params: FscParams, gaze_left, gaze_right,
                    prefilter: bool = False) -> np.ndarray:
    """Side-by-side stereo: each half is warped around its own eye's gaze.

    Gaze points are given in per-eye (half-frame) coordinates.
    """
    frame = check_frame(frame)
    half = frame.shape[1] // 2
    if frame.shape[1] != 2 * half:
        raise ValueError("stereo frame width must be even")
    left = compress_frame(frame[:, :half], params, gaze_left, prefilter)
    right = compress_frame(frame[:, half:], params, gaze_right, prefilter)
    return np.concatenate([left, right], axis=1)


def decompress_stereo(fsc_frame: np.ndarray, params: FscParams, gaze_left, gaze_right,
                      game_size: Tuple[int, int]) -> np.ndarray:
    fsc_frame = check_frame(fsc_frame)
    half = fsc_frame.shape[1] // 2
    eye = (game_size[0] // 2, game_size[1])
    left = decompress_frame(fsc_frame[:, :half], params, gaze_left, eye)
    right = decompress_frame(fsc_frame[:, half:], params, gaze_right, eye)
    return np.concatenate([left, right], axis=1)
