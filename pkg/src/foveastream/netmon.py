"""Queuing-delay gradient estimation, network state classification, feedback timeouts."""

from __future__ import annotations

import copy
import enum
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np

WINDOW_SIZE = 8


class NetState(enum.Enum):
    OVERUSE = "overuse"
    NORMAL = "normal"
    UNDERUSE = "underuse"
    TIMEOUT = "timeout"


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class FrameTiming:
    frame_id: int
    t_send: float
    t_arr: float
    bytes: int = 0

    def __post_init__(self):
        if self.t_arr < self.t_send:
            raise ValueError(f"frame {self.frame_id} arrives before it is sent")


def queuing_delay(prev: FrameTiming, cur: FrameTiming) -> float:
    """Inter-arrival minus inter-send spacing (ms) of two consecutive frames."""
    if cur.frame_id != prev.frame_id + 1:
        raise ValueError(f"frames {prev.frame_id} and {cur.frame_id} are not consecutive")
    return (cur.t_arr - prev.t_arr) - (cur.t_send - prev.t_send)


class DelayWindow:
    """FIFO of the last ``capacity`` ``(t_ms, delay_ms)`` points."""

    def __init__(self, capacity: int = WINDOW_SIZE):
        self._points: Deque[Tuple[float, float]] = deque(maxlen=capacity)

    def push(self, t: float, d: float) -> None:
        if self._points and t <= self._points[-1][0]:
            raise ValueError(f"window times must increase ({t} after {self._points[-1][0]})")
        self._points.append((float(t), float(d)))

    def points(self) -> List[Tuple[float, float]]:
        return list(self._points)

    def __len__(self) -> int:
        return len(self._points)

    def clear(self) -> None:
        self._points.clear()


def delay_gradient(window) -> float:
    """Least-squares slope of delay (ms) against arrival time, in ms per second."""
    pts = window.points() if isinstance(window, DelayWindow) else list(window)
    if len(pts) < 2:
        raise InsufficientData("need at least two points for a gradient")
    t = np.array([p[0] for p in pts]) / 1000.0
    d = np.array([p[1] for p in pts], dtype=np.float64)
    t = t - t.mean()
    denom = float(np.dot(t, t))
    if denom == 0.0:
        raise InsufficientData("all points share one timestamp")
    return float(np.dot(t, d - d.mean()) / denom)


def classify(slope: float, gamma_delay: float) -> NetState:
    if gamma_delay <= 0:
        raise ValueError("gamma_delay must be positive")
    if slope > gamma_delay:
        return NetState.OVERUSE
    if slope < -gamma_delay:
        return NetState.UNDERUSE
    return NetState.NORMAL


def feedback_timed_out(t_now: float, t_last_feedback: float, gamma_fd: float) -> bool:
    return (t_now - t_last_feedback) > gamma_fd


@dataclass(frozen=True)
class NetmonConfig:
    gamma_delay: float = 100.0  # ms/s, i.e. 0.1 ms of queue growth per ms
    gamma_fd: float = 300.0  # ms
    window: int = WINDOW_SIZE
    # regress the running queuing-delay estimate (sum of per-frame delay
    # variations) rather than the per-frame variations themselves
    accumulate: bool = True


@dataclass
class MonitorRow:
    frame_id: int
    t_send: float
    t_arr: float
    delay: float
    slope: Optional[float]
    state: NetState


class NetworkMonitor:
    """Server-side consumer of client feedback. Single writer."""

    def __init__(self, cfg: NetmonConfig = NetmonConfig(), t_start: float = 0.0):
        self.cfg = cfg
        self.window = DelayWindow(cfg.window)
        self.last_feedback = t_start
        self.prev: Optional[FrameTiming] = None
        self.acc_delay = 0.0
        self.slope: Optional[float] = None
        self.state = NetState.NORMAL
        self.rows: List[MonitorRow] = []

    def on_feedback(self, timing: FrameTiming, t_now: float) -> Optional[NetState]:
        """Digest feedback for one frame received at ``t_now``.

        Returns the event for the rate controller, or None while the window
        holds fewer than two points.
        """
        timed_out = feedback_timed_out(t_now, self.last_feedback, self.cfg.gamma_fd)
        self.last_feedback = t_now
        if self.prev is not None and timing.frame_id <= self.prev.frame_id:
            return None
        if self.prev is None:
            d = 0.0
        elif timing.frame_id == self.prev.frame_id + 1:
            d = queuing_delay(self.prev, timing)
        else:
            # lost feedback in between: the spacing difference telescopes
            d = (timing.t_arr - self.prev.t_arr) - (timing.t_send - self.prev.t_send)
        self.prev = timing
        self.acc_delay += d
        sample = self.acc_delay if self.cfg.accumulate else d
        if self.window and timing.t_arr <= self.window.points()[-1][0]:
            self.window.clear()
        self.window.push(timing.t_arr, sample)

        event: Optional[NetState]
        if timed_out:
            event = NetState.TIMEOUT
        elif len(self.window) >= 2:
            try:
                self.slope = delay_gradient(self.window)
                event = classify(self.slope, self.cfg.gamma_delay)
            except InsufficientData:
                event = None
        else:
            event = None
        if event is not None:
            self.state = event
        self.rows.append(MonitorRow(timing.frame_id, timing.t_send, timing.t_arr, d,
                                    self.slope, event or self.state))
        return event

    def poll_timeout(self, t_now: float) -> bool:
        """True (once per silence period) if no feedback arrived for longer than gamma_fd."""
        if feedback_timed_out(t_now, self.last_feedback, self.cfg.gamma_fd):
            self.last_feedback = t_now
            self.state = NetState.TIMEOUT
            return True
        return False

    def snapshot(self) -> "NetworkMonitor":
        return copy.deepcopy(self)

    def debug_rows(self) -> List[list]:
        return [[r.frame_id, _fmt(r.t_send), _fmt(r.t_arr), _fmt(r.delay),
                 "" if r.slope is None else _fmt(r.slope), r.state.value] for r in self.rows]


DEBUG_HEADER = ["frame_id", "t_send", "t_arr", "D", "slope", "state"]


def _fmt(v: float) -> str:
    return f"{v:.6f}"
