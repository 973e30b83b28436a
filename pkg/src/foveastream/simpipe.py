"""Trace-driven end-to-end streaming simulation.

Per frame, at a fixed ``1/fps`` cadence, the server samples gaze, warps the
frame (FSC), builds the QP map from the current foveation controller value,
encodes, and pushes the bitstream through a fluid queue fed by a bandwidth
trace. Feedback for every received frame returns after a fixed delay and
drives the delay-gradient monitor and the AIMD controller.

On the client, each frame period ends with a display deadline
(``t_send + playout_delay_ms``). The newest frame that has arrived by then
is decoded, expanded back (FSD) and shown; quality is scored against the
pristine frame for that display slot, around the current gaze. A late
frame therefore costs quality through staleness, as it does on a headset.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence

import numpy as np

from . import metrics
from .codec import Bitstream, decode_frame, encode_frame
from .fovea_warp import FscLayout, FscParams, compress_frame, decompress_frame, fsd_map_axis
from .geometry import (FovSpec, GazeAngles, ScreenPoint, point_to_macroblock,
                       project_gaze_to_screen)
from .netmon import DEBUG_HEADER, FrameTiming, NetmonConfig, NetState, NetworkMonitor
from .network import BandwidthTrace, FluidQueue, TraceExhausted
from .qpmap import FoveationConfig, build_qp_map, macroblock_grid, uniform_qp_map
from .ratectl import ControllerState, FoveationController
from .sources import synthetic_frame_source


class Mode(str, enum.Enum):
    FULL = "full"
    FVE_ONLY = "fve_only"
    FSC_ONLY = "fsc_only"


@dataclass(frozen=True)
class SimConfig:
    mode: Mode = Mode.FULL
    fps: float = 72.0
    frames: int = 720
    width: int = 256
    height: int = 256
    source: str = "noise"
    seed: int = 0
    fsc: FscParams = FscParams()
    fov: FovSpec = FovSpec()
    foveation: FoveationConfig = FoveationConfig()
    controller: ControllerState = ControllerState()
    freeze_controller: bool = False
    netmon: NetmonConfig = NetmonConfig()
    propagation_ms: float = 5.0
    feedback_delay_ms: float = 5.0
    playout_delay_ms: float = 50.0
    feedback_drops: FrozenSet[int] = frozenset()
    prefilter: bool = True
    sigma_px: Optional[float] = None
    # C is tuned for a game frame this wide; QP maps for other widths use
    # C scaled by width / c_reference_width (None disables the scaling)
    c_reference_width: Optional[float] = 3712.0
    texture_blur: float = 0.7
    texture_contrast: float = 70.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "feedback_drops", frozenset(self.feedback_drops))

    def validate(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.frames <= 0:
            raise ValueError("frames must be positive")
        if self.width < 16 or self.height < 16:
            raise ValueError("frames must be at least 16x16")
        if self.propagation_ms < 0 or self.feedback_delay_ms < 0 or self.playout_delay_ms < 0:
            raise ValueError("delays must be non-negative")
        if self.sigma_px is not None and self.sigma_px <= 0:
            raise ValueError("sigma_px must be positive")
        if self.mode is not Mode.FVE_ONLY:
            FscLayout.build((self.width, self.height), self.fsc,
                            (self.width / 2, self.height / 2))

    @property
    def c_scale(self) -> float:
        return 1.0 if self.c_reference_width is None else self.width / self.c_reference_width

    @property
    def sigma(self) -> float:
        return self.sigma_px if self.sigma_px is not None else metrics.default_sigma(self.fov, self.width)


@dataclass
class SimRecord:
    frame_id: int
    t_send: float
    t_arr: float
    bytes: int
    send_kbps: float
    recv_kbps: float
    queue_delay_ms: float
    delay_variation_ms: float
    gradient: Optional[float]
    state: str
    c: float
    qp_min: int
    qp_max: int
    qp_mean: float
    gaze_x: int
    gaze_y: int
    shown_id: int
    ewpsnr: float
    ewssim: float
    psnr: float
    ssim: float


@dataclass
class SimResult:
    records: List[SimRecord]
    summary: Dict[str, object]
    netmon_rows: List[list] = field(default_factory=list)
    controller_rows: List[list] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def write_csv(self, out_dir) -> List[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        names = [f.name for f in fields(SimRecord)]
        paths = []

        def dump(name, header, rows):
            p = out / name
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
            paths.append(p)

        dump("frames.csv", names, ([_fmt(getattr(r, n)) for n in names] for r in self.records))
        dump("metrics.csv", ["frame_id", "ewpsnr_db", "ewssim", "psnr_db", "ssim"],
             ([r.frame_id, _fmt(r.ewpsnr), _fmt(r.ewssim), _fmt(r.psnr), _fmt(r.ssim)]
              for r in self.records))
        dump("netmon.csv", DEBUG_HEADER, self.netmon_rows)
        dump("controller.csv", FoveationController.HEADER, self.controller_rows)
        dump("summary.csv", ["key", "value"], ([k, _fmt(v)] for k, v in self.summary.items()))
        return paths


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def gaze_at(trace: Sequence[GazeAngles], t: float, start: int = 0) -> int:
    """Index of the latest sample with timestamp <= t (the first sample if none)."""
    i = start
    while i + 1 < len(trace) and trace[i + 1].timestamp <= t:
        i += 1
    return i


class _Client:
    """Tracks which decoded frame is on screen at each display deadline."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.arrivals: List[float] = []
        self.pending: Dict[int, tuple] = {}
        self.shown = -1
        self.image = np.zeros((cfg.height, cfg.width), dtype=np.uint8)

    def add(self, frame_id: int, t_arr: float, bs: Bitstream, layout: Optional[FscLayout]):
        self.arrivals.append(t_arr)
        self.pending[frame_id] = (bs, layout)

    def show(self, deadline: float) -> int:
        newest = self.shown
        while newest + 1 < len(self.arrivals) and self.arrivals[newest + 1] <= deadline:
            newest += 1
        if newest != self.shown:
            bs, layout = self.pending[newest]
            img = decode_frame(bs)
            if layout is not None:
                img = decompress_frame(img, self.cfg.fsc, None, layout.game_size, layout=layout)
            self.image = img
            for k in [k for k in self.pending if k <= newest]:
                del self.pending[k]
            self.shown = newest
        return self.shown


def run_simulation(cfg: SimConfig, bw_trace: BandwidthTrace, gaze_trace: Sequence[GazeAngles],
                   frames: Iterable[np.ndarray]) -> SimResult:
    cfg.validate()
    if not gaze_trace:
        raise ValueError("empty gaze trace")
    frame_iter: Iterator[np.ndarray] = iter(frames)
    period = 1000.0 / cfg.fps
    size = (cfg.width, cfg.height)
    sigma = cfg.sigma

    queue = FluidQueue(bw_trace, cfg.propagation_ms)
    monitor = NetworkMonitor(cfg.netmon)
    controller = FoveationController(cfg.controller, frozen=cfg.freeze_controller)
    client = _Client(cfg)
    feedback: deque = deque()
    records: List[SimRecord] = []
    truncated = False
    prev_arr = cfg.propagation_ms - period
    prev_timing: Optional[FrameTiming] = None
    gi = 0

    for k in range(cfg.frames):
        t_send = k * period
        while feedback and feedback[0][0] <= t_send:
            t_fb, timing = feedback.popleft()
            event = monitor.on_feedback(timing, t_fb)
            if event is not None:
                controller.on_event(event)
        if monitor.poll_timeout(t_send):
            controller.on_event(NetState.TIMEOUT)

        try:
            frame = next(frame_iter)
        except StopIteration:
            truncated = True
            break
        if frame.shape[:2] != (cfg.height, cfg.width):
            raise ValueError(f"frame {k} is {frame.shape[1]}x{frame.shape[0]}, "
                             f"expected {cfg.width}x{cfg.height}")

        gi = gaze_at(gaze_trace, t_send, gi)
        screen = project_gaze_to_screen(gaze_trace[gi], cfg.fov, cfg.width, cfg.height)
        gx = int(min(max(math.floor(screen.x + 0.5), 0), cfg.width))
        gy = int(min(max(math.floor(screen.y + 0.5), 0), cfg.height))

        if cfg.mode is Mode.FVE_ONLY:
            layout = None
            enc_in = frame
            point = ScreenPoint(gx, gy)
        else:
            layout = FscLayout.build(size, cfg.fsc, (gx, gy))
            enc_in = compress_frame(frame, cfg.fsc, None, prefilter=cfg.prefilter, layout=layout)
            point = ScreenPoint(fsd_map_axis(gx, layout.x), fsd_map_axis(gy, layout.y))
        eh, ew = enc_in.shape[:2]
        grid = macroblock_grid(ew, eh)
        if cfg.mode is Mode.FSC_ONLY:
            qmap = uniform_qp_map(ew, eh, cfg.foveation.qp_const)
        else:
            qmap = build_qp_map(ew, eh, point_to_macroblock(point, grid),
                                controller.c * cfg.c_scale, cfg.foveation)
        bs = encode_frame(enc_in, qmap, gaze=(gx, gy), frame_id=k)

        try:
            t_arr = queue.enqueue(len(bs), t_send)
        except TraceExhausted:
            truncated = True
            break
        timing = FrameTiming(k, t_send, t_arr, len(bs))
        if k not in cfg.feedback_drops:
            feedback.append((t_arr + cfg.feedback_delay_ms, timing))
        client.add(k, t_arr, bs, layout)

        shown = client.show(t_send + cfg.playout_delay_ms)
        w = metrics.foveation_weights((cfg.height, cfg.width), (gx, gy), sigma)
        q = metrics.frame_quality(frame, client.image, w)

        bits = 8.0 * len(bs)
        d_var = 0.0 if prev_timing is None else (
            (t_arr - prev_timing.t_arr) - (t_send - prev_timing.t_send))
        records.append(SimRecord(
            frame_id=k, t_send=t_send, t_arr=t_arr, bytes=len(bs),
            send_kbps=bits / period, recv_kbps=bits / (t_arr - prev_arr),
            queue_delay_ms=t_arr - t_send - cfg.propagation_ms,
            delay_variation_ms=d_var, gradient=monitor.slope, state=monitor.state.value,
            c=controller.c, qp_min=int(qmap.qp.min()), qp_max=int(qmap.qp.max()),
            qp_mean=float(qmap.qp.mean()), gaze_x=gx, gaze_y=gy, shown_id=shown,
            ewpsnr=q["ewpsnr"], ewssim=q["ewssim"], psnr=q["psnr"], ssim=q["ssim"]))
        prev_arr = t_arr
        prev_timing = timing

    return SimResult(records, _summary(cfg, records, truncated),
                     monitor.debug_rows(), controller.log)


def config_frames(cfg: SimConfig) -> Iterator[np.ndarray]:
    """Synthetic frame stream described by ``cfg``."""
    return synthetic_frame_source(cfg.source, cfg.seed, (cfg.width, cfg.height),
                                  blur=cfg.texture_blur, contrast=cfg.texture_contrast)


def _summary(cfg: SimConfig, records: List[SimRecord], truncated: bool) -> Dict[str, object]:
    n = len(records)
    out: Dict[str, object] = {"mode": cfg.mode.value, "frames": n, "truncated": truncated}
    if not n:
        return out

    def col(name):
        return np.array([getattr(r, name) for r in records], dtype=float)

    end = records[-1].t_send + 1000.0 / cfg.fps
    send, recv = col("send_kbps"), col("recv_kbps")
    states = [r.state for r in records]
    out.update(
        sent_bytes=int(col("bytes").sum()),
        received_bytes=int(sum(r.bytes for r in records if r.t_arr <= end)),
        mean_frame_bytes=float(col("bytes").mean()),
        mean_send_mbps=float(send.mean() / 1000.0),
        mean_recv_mbps=float(recv.mean() / 1000.0),
        bitrate_imbalance_mbps=float((send - recv).mean() / 1000.0),
        mean_queue_delay_ms=float(col("queue_delay_ms").mean()),
        max_queue_delay_ms=float(col("queue_delay_ms").max()),
        mean_c=float(col("c").mean()),
        final_c=float(records[-1].c),
        mean_ewpsnr=float(col("ewpsnr").mean()),
        mean_ewssim=float(col("ewssim").mean()),
        mean_psnr=float(col("psnr").mean()),
        mean_ssim=float(col("ssim").mean()),
    )
    for s in NetState:
        out[f"frac_{s.value}"] = states.count(s.value) / n
    return out
