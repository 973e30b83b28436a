"""AIMD state machine for the foveation controller C."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, List

from .netmon import NetState


@dataclass(frozen=True)
class ControllerState:
    c: float = 120.0
    c_min: float = 6.0
    c_max: float = 120.0
    alpha: float = 0.2
    beta: float = 0.9
    beta_timeout: float = 0.85

    def __post_init__(self):
        if not 0 < self.c_min <= self.c_max:
            raise ValueError(f"need 0 < c_min <= c_max, got {self.c_min}, {self.c_max}")
        if not self.c_min <= self.c <= self.c_max:
            raise ValueError(f"c={self.c} outside [{self.c_min}, {self.c_max}]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.beta_timeout <= self.beta < 1:
            raise ValueError("need 0 < beta_timeout <= beta < 1")


def step(state: ControllerState, event: NetState) -> ControllerState:
    """Underuse adds alpha, overuse scales by beta, timeout by beta_timeout, normal holds."""
    if event is NetState.UNDERUSE:
        c = min(state.c_max, state.c + state.alpha)
    elif event is NetState.OVERUSE:
        c = max(state.c_min, state.beta * state.c)
    elif event is NetState.TIMEOUT:
        c = max(state.c_min, state.beta_timeout * state.c)
    elif event is NetState.NORMAL:
        return state
    else:
        raise TypeError(f"unknown event {event!r}")
    return dataclasses.replace(state, c=c)


def run_schedule(initial: ControllerState, events: Iterable[NetState]) -> List[float]:
    """C after each event."""
    out = []
    state = initial
    for ev in events:
        state = step(state, ev)
        out.append(state.c)
    return out


class FoveationController:
    """Owns the controller state and logs every transition."""

    HEADER = ["event_idx", "event", "c_before", "c_after"]

    def __init__(self, state: ControllerState = ControllerState(), frozen: bool = False):
        self.state = state
        self.frozen = frozen
        self.log: List[list] = []

    @property
    def c(self) -> float:
        return self.state.c

    def on_event(self, event: NetState) -> float:
        before = self.state.c
        if not self.frozen:
            self.state = step(self.state, event)
        self.log.append([len(self.log), event.value, f"{before:.6f}", f"{self.state.c:.6f}"])
        return self.state.c
