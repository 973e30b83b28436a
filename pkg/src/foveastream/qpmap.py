"""Per-macroblock QP maps from a Gaussian foveation model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import MACROBLOCK, FovSpec, MacroblockCoord


@dataclass(frozen=True)
class FoveationConfig:
    qp_const: int = 11
    qp_max: int = 51

    def __post_init__(self):
        if not 1 <= self.qp_const < self.qp_max <= 51:
            raise ValueError(f"need 1 <= qp_const < qp_max <= 51, got {self.qp_const}, {self.qp_max}")

    @property
    def qo_max(self) -> int:
        return self.qp_max - self.qp_const


@dataclass(frozen=True)
class QpMap:
    qp: np.ndarray  # (height_mb, width_mb) int
    gaze_mb: MacroblockCoord | None = None

    @property
    def width_mb(self) -> int:
        return self.qp.shape[1]

    @property
    def height_mb(self) -> int:
        return self.qp.shape[0]


def macroblock_grid(width: int, height: int) -> Tuple[int, int]:
    return -(-width // MACROBLOCK), -(-height // MACROBLOCK)


def quantization_offset(distance, c: float, cfg: FoveationConfig = FoveationConfig()):
    """QO for a macroblock ``distance`` blocks away from the gaze block."""
    if c <= 0:
        raise ValueError(f"foveation controller must be positive, got {c}")
    d = np.asarray(distance, dtype=np.float64)
    qo = cfg.qo_max * (1.0 - np.exp(-(d * d) / (2.0 * c * c)))
    return qo if qo.ndim else float(qo)


def build_qp_map(width: int, height: int, gaze_mb: MacroblockCoord, c: float,
                 cfg: FoveationConfig = FoveationConfig()) -> QpMap:
    """QP map for a ``width x height`` frame with the gaze in block ``gaze_mb``."""
    wmb, hmb = macroblock_grid(width, height)
    if not (0 <= gaze_mb.mx < wmb and 0 <= gaze_mb.my < hmb):
        raise ValueError(f"gaze macroblock {gaze_mb} outside {wmb}x{hmb} grid")
    jj, ii = np.mgrid[0:hmb, 0:wmb]
    dist = np.hypot(ii - gaze_mb.mx, jj - gaze_mb.my)
    qo = quantization_offset(dist, c, cfg)
    qp = cfg.qp_const + np.floor(qo + 0.5).astype(np.int32)
    return QpMap(qp, gaze_mb)


def uniform_qp_map(width: int, height: int, qp: int) -> QpMap:
    wmb, hmb = macroblock_grid(width, height)
    return QpMap(np.full((hmb, wmb), int(qp), dtype=np.int32))


def qp_map_to_image(qmap: QpMap, qp_max: int = 51) -> np.ndarray:
    """Grayscale rendering, QP 0..qp_max -> 0..255 on a fixed scale."""
    scaled = np.floor(qmap.qp.astype(np.float64) * 255.0 / qp_max + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_qp_csv(path, qmap: QpMap) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(qmap.qp.tolist())


def read_qp_csv(path) -> QpMap:
    with open(path, newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    return QpMap(np.array(rows, dtype=np.int32))


def degrees_to_macroblocks(degrees: float, fov: FovSpec, game_width: int) -> float:
    """Macroblocks spanned by ``degrees`` of visual angle around the view axis.

    The FSC fovea is copied 1:1, so game-frame pixel density carries over.
    """
    return degrees * fov.pixels_per_degree(game_width) / MACROBLOCK


def fovea_radius_macroblocks(c: float, qp_limit: int,
                             cfg: FoveationConfig = FoveationConfig()) -> float:
    """Largest distance (in blocks) whose unrounded QP stays at or below ``qp_limit``."""
    qo = qp_limit - cfg.qp_const
    if qo >= cfg.qo_max:
        return math.inf
    return c * math.sqrt(2.0 * math.log(cfg.qo_max / (cfg.qo_max - qo)))
