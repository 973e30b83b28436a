"""Gaze projection: headset angles -> game-frame pixels -> FSC pixels -> macroblocks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from .fovea_warp import AxisMapSpec, FscParams, fsd_map_axis

MACROBLOCK = 16


@dataclass(frozen=True)
class GazeAngles:
    yaw: float
    pitch: float
    timestamp: float = 0.0


@dataclass(frozen=True)
class FovSpec:
    """Field-of-view half angles in degrees, stored as magnitudes."""

    left: float = 45.0
    right: float = 45.0
    up: float = 45.0
    down: float = 45.0

    def __post_init__(self):
        for name in ("left", "right", "up", "down"):
            v = abs(float(getattr(self, name)))
            if not 0.0 < v < 90.0:
                raise ValueError(f"FoV angle {name}={v} must lie in (0, 90) degrees")
            object.__setattr__(self, name, v)

    def pixels_per_degree(self, width: int) -> float:
        """Horizontal pixel density at the view axis (derivative of the projection at yaw 0)."""
        span = math.tan(math.radians(self.left)) + math.tan(math.radians(self.right))
        return width * math.radians(1.0) / span


@dataclass(frozen=True)
class ScreenPoint:
    x: float
    y: float


@dataclass(frozen=True)
class FscPoint:
    x: float
    y: float


@dataclass(frozen=True)
class MacroblockCoord:
    mx: int
    my: int


def _project_axis(angle: float, near: float, far: float, extent: float) -> float:
    t_near = math.tan(math.radians(near))
    t_far = math.tan(math.radians(far))
    t = math.tan(math.radians(max(-far, min(near, angle))))
    pos = (t_near - t) * extent / (t_near + t_far)
    return min(max(pos, 0.0), float(extent))


def project_gaze_to_screen(gaze: GazeAngles, fov: FovSpec, width: int, height: int) -> ScreenPoint:
    """Screen position of a gaze direction.

    Positive yaw moves the point left and positive pitch moves it up
    (smaller x / y). Angles beyond the FoV are clamped to the frame edge.
    """
    if width <= 0 or height <= 0:
        raise ValueError("frame dimensions must be positive")
    return ScreenPoint(
        _project_axis(gaze.yaw, fov.left, fov.right, width),
        _project_axis(gaze.pitch, fov.up, fov.down, height),
    )


def screen_to_fsc_point(p: ScreenPoint, params: FscParams, game_size: Tuple[int, int],
                        fsc_size: Optional[Tuple[int, int]] = None) -> FscPoint:
    """Locate a game-frame point in the FSC frame warped around that same point.

    Without ``fsc_size`` the unaligned maps are used; with it, the maps of the
    actual (aligned) FSC frame, matching what compress_frame produces.
    """
    width, height = game_size
    if not (0.0 <= p.x <= width and 0.0 <= p.y <= height):
        raise ValueError(f"point {p} lies outside the {width}x{height} frame")
    if fsc_size is None:
        sx = AxisMapSpec.nominal(width, p.x, params.x_size, params.x_comp)
        sy = AxisMapSpec.nominal(height, p.y, params.y_size, params.y_comp)
    else:
        sx = AxisMapSpec.for_frame(width, fsc_size[0], p.x, params.x_size, params.x_comp)
        sy = AxisMapSpec.for_frame(height, fsc_size[1], p.y, params.y_size, params.y_comp)
    return FscPoint(fsd_map_axis(p.x, sx), fsd_map_axis(p.y, sy))


def point_to_macroblock(p, grid: Optional[Tuple[int, int]] = None) -> MacroblockCoord:
    """0-based index of the 16x16 block holding ``p``.

    Uses ``floor(x / 16)``; the 1-based ``ceil(x / 16)`` convention labels
    the same block one higher except on exact block boundaries. A point on
    the far frame edge is folded into the last block when ``grid``
    (``(width_mb, height_mb)``) is given.
    """
    mx = int(math.floor(p.x / MACROBLOCK))
    my = int(math.floor(p.y / MACROBLOCK))
    if mx < 0 or my < 0:
        raise ValueError(f"point {p} has negative coordinates")
    if grid is not None:
        mx, my = min(mx, grid[0] - 1), min(my, grid[1] - 1)
    return MacroblockCoord(mx, my)


def read_gaze_trace(path) -> List[GazeAngles]:
    """Read ``timestamp_ms,yaw_deg,pitch_deg`` rows (header required)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp_ms", "yaw_deg", "pitch_deg"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing gaze trace columns {sorted(missing)}")
        rows = [GazeAngles(float(r["yaw_deg"]), float(r["pitch_deg"]), float(r["timestamp_ms"]))
                for r in reader]
    for a, b in zip(rows, rows[1:]):
        if b.timestamp < a.timestamp:
            raise ValueError(f"{path}: gaze timestamps go backwards at {b.timestamp}")
    return rows


def write_gaze_trace(path, samples: Iterable[GazeAngles]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_ms", "yaw_deg", "pitch_deg"])
        for s in samples:
            w.writerow([f"{s.timestamp:.3f}", f"{s.yaw:.6f}", f"{s.pitch:.6f}"])
