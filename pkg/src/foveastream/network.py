"""Bandwidth traces and a fluid single-queue link model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, List, Sequence

import numpy as np


class TraceExhausted(Exception):
    """The trace ends before the requested transfer completes."""


@dataclass(frozen=True)
class TraceRecord:
    timestamp: float  # ms
    throughput: float  # kbit/s, i.e. bits per ms


class BandwidthTrace:
    """Piecewise-constant link capacity.

    Row ``k`` holds from its timestamp until the next row. The last row lasts
    as long as the spacing before it (a single-row trace never ends) unless
    ``end_ms`` is given.
    """

    def __init__(self, records: Sequence[TraceRecord], end_ms: float | None = None):
        if not records:
            raise ValueError("empty bandwidth trace")
        t = np.array([r.timestamp for r in records], dtype=np.float64)
        rate = np.array([r.throughput for r in records], dtype=np.float64)
        if np.any(np.diff(t) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        if np.any(rate <= 0):
            raise ValueError("trace throughput must be positive")
        if end_ms is None:
            end_ms = math.inf if len(t) == 1 else t[-1] + (t[-1] - t[-2])
        if end_ms <= t[-1]:
            raise ValueError("trace end must follow its last row")
        self.t = t
        self.rate = rate
        self.end = float(end_ms)
        seg = np.diff(np.append(t, self.end if math.isfinite(self.end) else t[-1]))
        self.cum = np.concatenate([[0.0], np.cumsum(rate * seg)])[:len(t)]

    @property
    def records(self) -> List[TraceRecord]:
        return [TraceRecord(float(a), float(b)) for a, b in zip(self.t, self.rate)]

    @classmethod
    def constant(cls, kbps: float, duration_ms: float | None = None) -> "BandwidthTrace":
        return cls([TraceRecord(0.0, kbps)], end_ms=duration_ms)

    @classmethod
    def step(cls, before_kbps: float, after_kbps: float, t_step_ms: float,
             duration_ms: float | None = None) -> "BandwidthTrace":
        return cls([TraceRecord(0.0, before_kbps), TraceRecord(t_step_ms, after_kbps)],
                   end_ms=duration_ms if duration_ms is not None else math.inf)

    @classmethod
    def from_csv(cls, path) -> "BandwidthTrace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"timestamp_ms", "throughput_kbps"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing trace columns {sorted(missing)}")
            rows = [TraceRecord(float(r["timestamp_ms"]), float(r["throughput_kbps"]))
                    for r in reader]
        return cls(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_ms", "throughput_kbps"])
            for r in self.records:
                w.writerow([f"{r.timestamp:.3f}", f"{r.throughput:.3f}"])

    def capacity_at(self, t: float) -> float:
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        return float(self.rate[max(i, 0)])

    def bits_until(self, t: float) -> float:
        """Capacity integrated from the trace start to ``t`` (bits)."""
        t = min(max(t, self.t[0]), self.end)
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        return float(self.cum[i] + self.rate[i] * (t - self.t[i]))

    def time_for(self, start: float, bits: float) -> float:
        """Time at which ``bits`` sent from ``start`` have fully left the link."""
        start = max(start, float(self.t[0]))
        if start >= self.end:
            raise TraceExhausted(f"trace ends at {self.end} ms")
        target = self.bits_until(start) + bits
        i = int(np.searchsorted(self.cum, target, side="right")) - 1
        finish = self.t[i] + (target - self.cum[i]) / self.rate[i]
        if finish > self.end:
            raise TraceExhausted(f"trace ends at {self.end} ms")
        return float(finish)


class FluidQueue:
    """FIFO link: a frame leaves once the capacity after the queue head covers it."""

    def __init__(self, trace: BandwidthTrace, propagation_ms: float = 5.0):
        self.trace = trace
        self.propagation = propagation_ms
        self.busy_until = -math.inf

    def enqueue(self, nbytes: int, t_send: float) -> float:
        start = max(t_send, self.busy_until)
        finish = self.trace.time_for(start, 8.0 * nbytes) if nbytes else start
        self.busy_until = finish
        return finish + self.propagation


def network_enqueue(queue: FluidQueue, nbytes: int, t_send: float) -> float:
    return queue.enqueue(nbytes, t_send)


def fluctuating_trace(seed: int, duration_ms: float = 30000.0, step_ms: float = 1000.0,
                      mean_kbps: float = 25000.0, floor_kbps: float = 10000.0,
                      ceil_kbps: float = 60000.0) -> BandwidthTrace:
    """Seeded log-space random walk, one row per ``step_ms``, clipped to [floor, ceil]."""
    n = max(1, int(math.ceil(duration_ms / step_ms)))
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(0.0, 0.25, n))
    walk -= 0.5 * walk.mean()  # keep the walk from drifting far from the mean
    rate = np.clip(mean_kbps * np.exp(walk), floor_kbps, ceil_kbps)
    return BandwidthTrace([TraceRecord(k * step_ms, float(r)) for k, r in enumerate(rate)],
                          end_ms=n * step_ms)


def bundled_traces() -> Dict[str, BandwidthTrace]:
    """Named traces used by the CLI (``--trace builtin:NAME``) and the closed-loop tests."""
    return {
        "constant50": BandwidthTrace.constant(50000.0),
        "constant20": BandwidthTrace.constant(20000.0),
        "step50to20": BandwidthTrace.step(50000.0, 20000.0, 10000.0),
        "fluctuating": fluctuating_trace(7, duration_ms=60000.0),
    }


def _parse_timestamp(value: str) -> float:
    """Seconds from a corpus timestamp (``2019.12.14_11.23.49``) or a plain number."""
    value = value.strip()
    try:
        return float(value)
    except ValueError:
        return datetime.strptime(value, "%Y.%m.%d_%H.%M.%S").timestamp()


def convert_5g_trace(src, dst, min_kbps: float = 10000.0, column: str = "DL_bitrate",
                     time_column: str = "Timestamp", step_ms: float | None = None) -> BandwidthTrace:
    """Convert a 5G measurement log into a ``timestamp_ms,throughput_kbps`` trace.

    Rows at or below ``min_kbps`` are dropped and the survivors are replayed
    back to back, each lasting ``step_ms`` (default: the median row spacing of
    the source log, or 1 s when it cannot be inferred).
    """
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        fieldnames = [f.strip() for f in reader.fieldnames or ()]
        reader.fieldnames = fieldnames
        missing = {column, time_column} - set(fieldnames)
        if missing:
            raise ValueError(f"{src}: missing columns {sorted(missing)}")
        times, rates = [], []
        for row in reader:
            raw = (row.get(column) or "").strip()
            if not raw or raw == "-":
                continue
            times.append(_parse_timestamp(row[time_column]))
            rates.append(float(raw))
    if step_ms is None:
        gaps = np.diff(times)
        gaps = gaps[gaps > 0]
        step_ms = float(np.median(gaps)) * 1000.0 if gaps.size else 1000.0
    kept = [r for r in rates if r > min_kbps]
    if not kept:
        raise ValueError(f"{src}: no rows above {min_kbps} kbps")
    trace = BandwidthTrace([TraceRecord(k * step_ms, r) for k, r in enumerate(kept)],
                           end_ms=len(kept) * step_ms)
    trace.to_csv(dst)
    return trace
