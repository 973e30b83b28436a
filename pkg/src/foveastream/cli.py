"""``foveastream`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import VERSION_STRING
from .config import ConfigError, apply_overrides, dump_config, load_config
from .fovea_warp import FscLayout, FscParams, compress_frame, decompress_frame, fsc_dimensions
from .geometry import FovSpec, ScreenPoint, point_to_macroblock, read_gaze_trace, write_gaze_trace
from .metrics import default_sigma, foveation_weights, frame_quality
from .network import BandwidthTrace, bundled_traces, convert_5g_trace
from .qpmap import (FoveationConfig, build_qp_map, macroblock_grid, qp_map_to_image,
                    write_qp_csv)
from .simpipe import Mode, SimConfig, config_frames, run_simulation
from .sources import (FRAME_KINDS, image_frame_source, read_image, synthetic_gaze_trace,
                      write_image)

log = logging.getLogger("foveastream")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png", ".bmp", ".tif", ".tiff")


class UsageError(Exception):
    """Bad arguments or unusable input files (exit code 2)."""


# -- argument helpers ---------------------------------------------------------

def _pair(kind, sep: str = ","):
    def parse(text: str):
        parts = text.lower().split(sep)
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected two values separated by {sep!r}: {text!r}")
        try:
            return kind(parts[0]), kind(parts[1])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _add_fsc_args(p: argparse.ArgumentParser) -> None:
    d = FscParams()
    g = p.add_argument_group("warp parameters")
    g.add_argument("--x-size", type=float, default=d.x_size,
                   help=f"fovea width as a fraction of the frame width (default {d.x_size})")
    g.add_argument("--y-size", type=float, default=d.y_size,
                   help=f"fovea height as a fraction of the frame height (default {d.y_size})")
    g.add_argument("--x-comp", type=float, default=d.x_comp,
                   help=f"horizontal peripheral sampling step (default {d.x_comp})")
    g.add_argument("--y-comp", type=float, default=d.y_comp,
                   help=f"vertical peripheral sampling step (default {d.y_comp})")


def _fsc_params(args) -> FscParams:
    try:
        return FscParams(args.x_size, args.y_size, args.x_comp, args.y_comp)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _read(path) -> np.ndarray:
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return read_image(path)
    except OSError as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc


def _check_gaze(gaze, width: int, height: int) -> None:
    gx, gy = gaze
    if not (0 <= gx <= width and 0 <= gy <= height):
        raise UsageError(f"gaze {gx},{gy} lies outside the {width}x{height} frame")


def _dims(frame: np.ndarray) -> str:
    return f"{frame.shape[1]}x{frame.shape[0]}"


# -- commands -----------------------------------------------------------------

def cmd_warp(args) -> int:
    frame = _read(args.input)
    height, width = frame.shape[:2]
    _check_gaze(args.gaze, width, height)
    params = _fsc_params(args)
    try:
        layout = FscLayout.build((width, height), params, args.gaze)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = compress_frame(frame, params, None, prefilter=args.prefilter, layout=layout)
    write_image(args.output, out)
    print(f"{_dims(frame)} -> {_dims(out)}")
    return EXIT_OK


def cmd_unwarp(args) -> int:
    frame = _read(args.input)
    width, height = args.size
    _check_gaze(args.gaze, width, height)
    params = _fsc_params(args)
    try:
        expected = fsc_dimensions(width, height, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if (frame.shape[1], frame.shape[0]) != expected:
        raise UsageError(f"{args.input} is {_dims(frame)}, but a {width}x{height} frame "
                         f"warps to {expected[0]}x{expected[1]}")
    out = decompress_frame(frame, params, args.gaze, (width, height))
    write_image(args.output, out)
    print(f"{_dims(frame)} -> {_dims(out)}")
    return EXIT_OK


def cmd_qpmap(args) -> int:
    width, height = args.size
    if width <= 0 or height <= 0:
        raise UsageError("frame size must be positive")
    gx, gy = args.gaze
    if not (0 <= gx < width and 0 <= gy < height):
        raise UsageError(f"gaze {gx},{gy} lies outside the {width}x{height} frame")
    if args.c <= 0:
        raise UsageError("--c must be positive")
    try:
        cfg = FoveationConfig(args.qp_const, args.qp_max)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid = macroblock_grid(width, height)
    gaze_mb = point_to_macroblock(ScreenPoint(gx, gy), grid)
    qmap = build_qp_map(width, height, gaze_mb, args.c, cfg)
    write_image(args.image, qp_map_to_image(qmap, cfg.qp_max))
    write_qp_csv(args.csv, qmap)
    print(f"{grid[0]}x{grid[1]} macroblocks, gaze block ({gaze_mb.mx}, {gaze_mb.my}), "
          f"QP {int(qmap.qp.min())}..{int(qmap.qp.max())}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref, test = _read(args.reference), _read(args.test)
    if ref.shape != test.shape:
        raise UsageError(f"frame sizes differ: {_dims(ref)} vs {_dims(test)}")
    height, width = ref.shape[:2]
    if args.uniform:
        weights = np.ones((height, width))
    else:
        if args.gaze is None:
            raise UsageError("--gaze is required unless --uniform is given")
        _check_gaze(args.gaze, width, height)
        sigma = args.sigma
        if sigma is None:
            sigma = default_sigma(FovSpec(), width)
        if sigma <= 0:
            raise UsageError("--sigma must be positive")
        weights = foveation_weights((height, width), args.gaze, sigma)
    try:
        q = frame_quality(ref, test, weights)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"EWPSNR {q['ewpsnr']:.4f} dB")
    print(f"EWSSIM {q['ewssim']:.6f}")
    print(f"PSNR {q['psnr']:.4f} dB")
    print(f"SSIM {q['ssim']:.6f}")
    return EXIT_OK


def _bandwidth_trace(spec: Optional[str]) -> BandwidthTrace:
    if spec is None:
        spec = "builtin:step50to20"
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        traces = bundled_traces()
        if name not in traces:
            raise UsageError(f"unknown built-in trace {name!r}; choose from {sorted(traces)}")
        return traces[name]
    if not Path(spec).is_file():
        raise UsageError(f"no such trace file: {spec}")
    try:
        return BandwidthTrace.from_csv(spec)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad bandwidth trace {spec}: {exc}") from exc


def _sim_config(args) -> SimConfig:
    cfg = SimConfig()
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise UsageError(f"no such config file: {args.config}")
            cfg = load_config(args.config, cfg)
        sim: Dict[str, str] = {}
        for key in ("frames", "fps", "width", "height", "source", "seed"):
            v = getattr(args, key)
            if v is not None:
                sim[key] = str(v)
        if args.freeze_controller:
            sim["freeze_controller"] = "true"
        sections: Dict[str, Dict[str, str]] = {"sim": sim}
        for item in args.set or ():
            key, sep, value = item.partition("=")
            section, dot, name = key.strip().partition(".")
            if not sep or not dot:
                raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
            sections.setdefault(section, {})[name] = value
        cfg = apply_overrides(cfg, sections)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _frames_for(cfg: SimConfig, frames_dir: Optional[str]):
    if frames_dir is None:
        return cfg, config_frames(cfg)
    d = Path(frames_dir)
    if not d.is_dir():
        raise UsageError(f"no such directory: {frames_dir}")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise UsageError(f"no images in {frames_dir}")
    try:
        first = read_image(paths[0])
        frames = image_frame_source(paths)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    cfg = dataclasses.replace(cfg, width=first.shape[1], height=first.shape[0], source="images")
    return cfg, frames


def _run_one(cfg: SimConfig, args, bw: BandwidthTrace, out_dir: Path):
    cfg, frames = _frames_for(cfg, args.frames_dir)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.gaze_trace:
        if not Path(args.gaze_trace).is_file():
            raise UsageError(f"no such gaze trace: {args.gaze_trace}")
        try:
            gaze = read_gaze_trace(args.gaze_trace)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad gaze trace {args.gaze_trace}: {exc}") from exc
        if not gaze:
            raise UsageError(f"gaze trace {args.gaze_trace} is empty")
    else:
        gaze = synthetic_gaze_trace(cfg.seed, cfg.frames * 1000.0 / cfg.fps + 100.0)
    log.info("simulating %d %dx%d frames in %s mode", cfg.frames, cfg.width, cfg.height,
             cfg.mode.value)
    result = run_simulation(cfg, bw, gaze, frames)
    result.write_csv(out_dir)
    (out_dir / "config.ini").write_text(dump_config(cfg))
    s = result.summary
    line = f"[{cfg.mode.value}] {s['frames']} frames"
    if s["frames"]:
        line += (f", {s['mean_send_mbps']:.2f} Mb/s, queue delay {s['mean_queue_delay_ms']:.1f} ms, "
                 f"EWPSNR {s['mean_ewpsnr']:.2f} dB, EWSSIM {s['mean_ewssim']:.4f}, "
                 f"final C {s['final_c']:.2f}")
    print(line)
    if s["truncated"]:
        print(f"[{cfg.mode.value}] trace or frame source ended early; wrote partial results")
    return result


ABLATION_KEYS = ("mean_ewssim", "mean_ewpsnr", "mean_send_mbps", "mean_queue_delay_ms")


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    bw = _bandwidth_trace(args.trace)
    out = Path(args.out)
    if args.mode != "all":
        if args.mode is not None:
            cfg = dataclasses.replace(cfg, mode=Mode(args.mode))
        _run_one(cfg, args, bw, out)
        return EXIT_OK

    summaries = {}
    for mode in Mode:
        res = _run_one(dataclasses.replace(cfg, mode=mode), args, bw, out / mode.value)
        summaries[mode] = res.summary
    base = summaries[Mode.FULL]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode"] + [k for key in ABLATION_KEYS for k in (key, key + "_vs_full")])
        for mode, s in summaries.items():
            row: List[str] = [mode.value]
            for key in ABLATION_KEYS:
                v, ref = s.get(key), base.get(key)
                ratio = v / ref if v is not None and ref else math.nan
                row += [f"{v:.6f}" if v is not None else "", f"{ratio:.6f}"]
            w.writerow(row)
    print(f"ablation report: {out / 'ablation.csv'}")
    return EXIT_OK


def cmd_convert_trace(args) -> int:
    if not Path(args.input).is_file():
        raise UsageError(f"no such file: {args.input}")
    try:
        trace = convert_5g_trace(args.input, args.output, min_kbps=args.min_kbps,
                                 column=args.column, time_column=args.time_column,
                                 step_ms=args.step_ms)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot convert {args.input}: {exc}") from exc
    print(f"{len(trace.t)} rows, {trace.end / 1000.0:.1f} s, "
          f"mean {trace.rate.mean() / 1000.0:.2f} Mb/s")
    return EXIT_OK


def cmd_make_trace(args) -> int:
    if args.kind == "gaze":
        samples = synthetic_gaze_trace(args.seed, args.duration_ms)
        write_gaze_trace(args.output, samples)
        print(f"{len(samples)} gaze samples")
        return EXIT_OK
    trace = _bandwidth_trace(f"builtin:{args.kind}")
    if not math.isfinite(trace.end):
        trace = BandwidthTrace(trace.records, end_ms=args.duration_ms)
    trace.to_csv(args.output)
    print(f"{len(trace.t)} rows")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foveastream",
        description="Foveated frame warping, QP maps, quality metrics and streaming simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION_STRING}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("warp", help="compress a game frame around a gaze point")
    p.add_argument("input", help="input PPM/PGM image")
    p.add_argument("output", help="output PPM/PGM image")
    p.add_argument("--gaze", type=_pair(float), required=True, metavar="X,Y",
                   help="gaze point in game-frame pixels")
    p.add_argument("--prefilter", action="store_true",
                   help="area-average peripheral samples instead of bilinear point sampling")
    _add_fsc_args(p)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("unwarp", help="expand a warped frame back to game-frame size")
    p.add_argument("input", help="warped PPM/PGM image")
    p.add_argument("output", help="output PPM/PGM image")
    p.add_argument("--gaze", type=_pair(float), required=True, metavar="X,Y",
                   help="gaze point the frame was warped around, in game-frame pixels")
    p.add_argument("--size", type=_pair(int, "x"), required=True, metavar="WxH",
                   help="game-frame size to restore")
    _add_fsc_args(p)
    p.set_defaults(func=cmd_unwarp)

    p = sub.add_parser("qpmap", help="write the per-macroblock QP map for a gaze point")
    p.add_argument("--size", type=_pair(int, "x"), required=True, metavar="WxH",
                   help="frame size in pixels")
    p.add_argument("--gaze", type=_pair(float), required=True, metavar="X,Y",
                   help="gaze point in pixels")
    p.add_argument("--c", type=float, default=120.0,
                   help="spread of the high-quality region in macroblocks (default 120)")
    p.add_argument("--qp-const", type=int, default=11, help="QP at the gaze (default 11)")
    p.add_argument("--qp-max", type=int, default=51, help="QP far from the gaze (default 51)")
    p.add_argument("--image", required=True, help="output PGM visualization (QP*255/qp-max)")
    p.add_argument("--csv", required=True, help="output CSV, one row per macroblock row")
    p.set_defaults(func=cmd_qpmap)

    p = sub.add_parser("metrics", help="gaze-weighted PSNR/SSIM between two images")
    p.add_argument("reference", help="reference image")
    p.add_argument("test", help="test image")
    p.add_argument("--gaze", type=_pair(float), metavar="X,Y", help="gaze point in pixels")
    p.add_argument("--sigma", type=float,
                   help="weight fall-off in pixels (default: 5 degrees at a 90-degree FoV)")
    p.add_argument("--uniform", action="store_true",
                   help="weight all pixels equally (reduces EWPSNR to PSNR)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("simulate", help="run the closed-loop streaming simulation")
    p.add_argument("--config", help="INI config file (sections sim, fsc, fov, foveation, "
                                    "controller, netmon)")
    p.add_argument("--mode", choices=[m.value for m in Mode] + ["all"],
                   help="pipeline variant; 'all' runs every mode and writes an ablation report")
    p.add_argument("--trace", metavar="CSV|builtin:NAME",
                   help="bandwidth trace (timestamp_ms,throughput_kbps) or built-in name "
                        f"({', '.join(sorted(bundled_traces()))}); default builtin:step50to20")
    p.add_argument("--gaze-trace", metavar="CSV",
                   help="gaze trace (timestamp_ms,yaw_deg,pitch_deg); default: synthetic from --seed")
    p.add_argument("--frames-dir", help="directory of input images, cycled in name order "
                                        "(default: synthetic frames)")
    p.add_argument("--out", required=True, help="output directory for the CSV files")
    p.add_argument("--seed", type=int, help="seed for synthetic frames and gaze")
    p.add_argument("--frames", type=int, help="number of frames to send")
    p.add_argument("--fps", type=float, help="frame rate")
    p.add_argument("--width", type=int, help="synthetic frame width")
    p.add_argument("--height", type=int, help="synthetic frame height")
    p.add_argument("--source", choices=FRAME_KINDS, help="synthetic frame kind")
    p.add_argument("--freeze-controller", action="store_true",
                   help="hold C at its initial value")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convert-trace", help="convert a 5G measurement log to a bandwidth trace")
    p.add_argument("input", help="measurement CSV")
    p.add_argument("output", help="output trace CSV")
    p.add_argument("--min-kbps", type=float, default=10000.0,
                   help="drop rows at or below this throughput (default 10000)")
    p.add_argument("--column", default="DL_bitrate", help="throughput column, kbit/s")
    p.add_argument("--time-column", default="Timestamp", help="timestamp column")
    p.add_argument("--step-ms", type=float,
                   help="duration of each kept row (default: median source spacing)")
    p.set_defaults(func=cmd_convert_trace)

    p = sub.add_parser("make-trace", help="write a built-in bandwidth trace or a synthetic gaze trace")
    p.add_argument("kind", choices=sorted(bundled_traces()) + ["gaze"])
    p.add_argument("output", help="output CSV")
    p.add_argument("--seed", type=int, default=0, help="seed for the gaze trace")
    p.add_argument("--duration-ms", type=float, default=60000.0,
                   help="length of gaze traces and of open-ended bandwidth traces")
    p.set_defaults(func=cmd_make_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"foveastream {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"foveastream {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
