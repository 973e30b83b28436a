"""Small intra-only macroblock codec driven by a per-block QP map.

Container layout (all little-endian)::

    header   magic "FVSC" | u8 format version | u8 planes | u32 width |
             u32 height | u16 gaze_x | u16 gaze_y | u32 frame_id | u8 base_qp
    rows     for each macroblock row: u32 payload length | payload

A row payload is a sequence of unsigned LEB128 varints. Per macroblock::

    mb token     zz(qp - previous qp) << nblocks | coded-block pattern
    per coded 8x8 block (bit set in the pattern, order: plane, TL TR BL BR):
      head       zz(dc - previous dc of that plane) * 64 + number of nonzero AC
      AC pairs   zero-run, zz(level)        (zigzag scan order)

``zz`` is the signed-to-unsigned zigzag map. The previous QP starts at
``base_qp`` and the previous DC at 0 at the start of every row, so rows
decode independently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.fft import dctn, idctn

from .fovea_warp import check_frame
from .qpmap import QpMap, macroblock_grid

FORMAT_VERSION = 1
MAGIC = b"FVSC"
HEADER = struct.Struct("<4sBBIIHHIB")
ROW_LEN = struct.Struct("<I")
MB = 16
QP_RANGE = (0, 51)


class DecodeError(ValueError):
    pass


def qstep(qp):
    """Quantizer step for a QP; doubles every 6 QP."""
    return 2.0 ** ((np.asarray(qp, dtype=np.float64) - 4.0) / 6.0)


def _zigzag_order(n: int = 8) -> np.ndarray:
    order = sorted(((i, j) for i in range(n) for j in range(n)),
                   key=lambda p: (p[0] + p[1], p[0] if (p[0] + p[1]) % 2 else p[1]))
    return np.array([i * n + j for i, j in order])


ZIGZAG = _zigzag_order()


@dataclass(frozen=True)
class Bitstream:
    data: bytes

    def __len__(self) -> int:
        return len(self.data)

    @property
    def header(self) -> dict:
        return parse_header(self.data)

    @property
    def payload_bytes(self) -> int:
        """Bytes after the fixed header and row-length prefixes."""
        h = self.header
        rows = macroblock_grid(h["width"], h["height"])[1]
        return len(self.data) - HEADER.size - rows * ROW_LEN.size


def parse_header(data: bytes) -> dict:
    if len(data) < HEADER.size:
        raise DecodeError("truncated header")
    magic, version, planes, width, height, gx, gy, frame_id, base_qp = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DecodeError(f"unsupported format version {version}")
    if planes not in (1, 3) or width == 0 or height == 0:
        raise DecodeError(f"bad frame geometry {width}x{height}x{planes}")
    return dict(planes=planes, width=width, height=height, gaze=(gx, gy),
                frame_id=frame_id, base_qp=base_qp)


# -- transform / quantization -------------------------------------------------

def _to_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (H/8, W/8, 8, 8)."""
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def _from_blocks(blocks: np.ndarray) -> np.ndarray:
    hb, wb = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(hb * 8, wb * 8)


def quantize_plane(plane: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Integer levels ``(H/8, W/8, 8, 8)`` for a padded plane; ``steps`` is per 8x8 block."""
    coef = dctn(_to_blocks(plane.astype(np.float64) - 128.0), axes=(2, 3), norm="ortho")
    scaled = np.abs(coef) / steps[:, :, None, None]
    return (np.sign(coef) * np.floor(scaled + 0.5)).astype(np.int64)


def reconstruct_plane(levels: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Float reconstruction (before rounding/clipping) of quantized blocks."""
    coef = levels * steps[:, :, None, None]
    return _from_blocks(idctn(coef, axes=(2, 3), norm="ortho")) + 128.0


def _pad(frame: np.ndarray, wmb: int, hmb: int) -> np.ndarray:
    h, w = frame.shape[:2]
    pad = [(0, hmb * MB - h), (0, wmb * MB - w)] + [(0, 0)] * (frame.ndim - 2)
    return np.pad(frame, pad, mode="edge")


# -- varints ------------------------------------------------------------------

def _zz(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.int64)
    return np.where(v >= 0, 2 * v, -2 * v - 1).astype(np.uint64)


def _unzz(u: np.ndarray) -> np.ndarray:
    u = u.astype(np.int64)
    return np.where(u & 1, -((u + 1) >> 1), u >> 1)


def varint_encode(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=np.uint64)
    if values.size == 0:
        return b""
    lengths = np.ones(values.shape, dtype=np.int64)
    for k in range(1, 10):
        lengths += values >= np.uint64(1 << (7 * k))
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    out = np.zeros(int(lengths.sum()), dtype=np.uint8)
    for k in range(int(lengths.max())):
        sel = lengths > k
        byte = (values[sel] >> np.uint64(7 * k)) & np.uint64(0x7F)
        more = (lengths[sel] > k + 1).astype(np.uint64) << np.uint64(7)
        out[starts[sel] + k] = (byte | more).astype(np.uint8)
    return out.tobytes()


def varint_decode(data: bytes) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size == 0:
        return np.zeros(0, dtype=np.int64)
    ends = buf < 0x80
    if not ends[-1]:
        raise DecodeError("truncated varint")
    token = np.concatenate([[0], np.cumsum(ends)[:-1]])
    first = np.concatenate([[0], np.flatnonzero(ends)[:-1] + 1])
    pos = np.arange(buf.size) - first[token]
    if pos.max() > 8:
        raise DecodeError("varint too long")
    part = (buf & 0x7F).astype(np.int64) << (7 * pos)
    return np.add.reduceat(part, first)


# -- encoder ------------------------------------------------------------------

def _row_tokens(levels: np.ndarray, qps: np.ndarray, base_qp: int) -> np.ndarray:
    """Tokens for one macroblock row.

    ``levels``: (n_mb, planes, 4, 64) zigzag-ordered; ``qps``: (n_mb,).
    """
    n_mb, planes = levels.shape[:2]
    nblk = planes * 4
    lv = levels.reshape(n_mb, nblk, 64)

    dc = levels[..., 0].transpose(1, 0, 2).reshape(planes, n_mb * 4)
    dc_delta = np.diff(dc, axis=1, prepend=0).reshape(planes, n_mb, 4).transpose(1, 0, 2)
    dc_delta = dc_delta.reshape(n_mb, nblk)

    ac = lv[:, :, 1:]
    nnz = np.count_nonzero(ac, axis=2)
    coded = (dc_delta != 0) | (nnz > 0)
    cbp = (coded.astype(np.uint64) << np.arange(nblk, dtype=np.uint64)).sum(axis=1)
    dqp = np.diff(qps.astype(np.int64), prepend=base_qp)
    mb_tok = (_zz(dqp) << np.uint64(nblk)) | cbp

    # token counts: 1 per MB, 1 + 2*nnz per coded block
    blk_len = np.where(coded, 1 + 2 * nnz, 0)
    mb_len = 1 + blk_len.sum(axis=1)
    mb_start = np.concatenate([[0], np.cumsum(mb_len)[:-1]])
    blk_start = mb_start[:, None] + 1 + np.concatenate(
        [np.zeros((n_mb, 1), dtype=np.int64), np.cumsum(blk_len, axis=1)[:, :-1]], axis=1)

    tokens = np.zeros(int(mb_len.sum()), dtype=np.uint64)
    tokens[mb_start] = mb_tok
    heads = _zz(dc_delta) * np.uint64(64) + nnz.astype(np.uint64)
    tokens[blk_start[coded]] = heads[coded]

    flat_ac = ac.reshape(n_mb * nblk, 63)
    bi, pos = np.nonzero(flat_ac)
    if bi.size:
        first_in_block = np.concatenate([[True], bi[1:] != bi[:-1]])
        prev = np.where(first_in_block, -1, np.concatenate([[0], pos[:-1]]))
        run = pos - prev - 1
        idx_in_block = np.arange(bi.size) - np.maximum.accumulate(
            np.where(first_in_block, np.arange(bi.size), 0))
        at = blk_start.reshape(-1)[bi] + 1 + 2 * idx_in_block
        tokens[at] = run.astype(np.uint64)
        tokens[at + 1] = _zz(flat_ac[bi, pos])
    return tokens


def encode_frame(frame: np.ndarray, qmap: QpMap, gaze: Tuple[int, int] = (0, 0),
                 frame_id: int = 0) -> Bitstream:
    """Encode an 8-bit frame; ``qmap`` must match its macroblock grid."""
    frame = check_frame(frame)
    h, w = frame.shape[:2]
    wmb, hmb = macroblock_grid(w, h)
    if (qmap.width_mb, qmap.height_mb) != (wmb, hmb):
        raise ValueError(f"QP map is {qmap.width_mb}x{qmap.height_mb} blocks, "
                         f"{w}x{h} frame needs {wmb}x{hmb}")
    qp = np.asarray(qmap.qp, dtype=np.int64)
    if qp.min() < QP_RANGE[0] or qp.max() > QP_RANGE[1]:
        raise ValueError("QP values must lie in [0, 51]")
    planes = frame[..., None] if frame.ndim == 2 else frame
    padded = _pad(planes, wmb, hmb)
    steps = qstep(np.repeat(np.repeat(qp, 2, axis=0), 2, axis=1))

    # (planes, hmb*2, wmb*2, 8, 8) -> (hmb, wmb, planes, 4, 64) in zigzag order
    lv = np.stack([quantize_plane(padded[..., p], steps) for p in range(planes.shape[2])])
    lv = lv.reshape(planes.shape[2], hmb, 2, wmb, 2, 64)[..., ZIGZAG]
    lv = lv.transpose(1, 3, 0, 2, 4, 5).reshape(hmb, wmb, planes.shape[2], 4, 64)

    base_qp = int(qp[0, 0])
    gx, gy = (int(round(v)) for v in gaze)
    out = [HEADER.pack(MAGIC, FORMAT_VERSION, planes.shape[2], w, h,
                       max(0, min(gx, 0xFFFF)), max(0, min(gy, 0xFFFF)),
                       int(frame_id) & 0xFFFFFFFF, base_qp)]
    for r in range(hmb):
        payload = varint_encode(_row_tokens(lv[r], qp[r], base_qp))
        out.append(ROW_LEN.pack(len(payload)))
        out.append(payload)
    return Bitstream(b"".join(out))


# -- decoder ------------------------------------------------------------------

def _decode_row(tokens: np.ndarray, n_mb: int, planes: int, base_qp: int):
    nblk = planes * 4
    mask_all = (1 << nblk) - 1
    levels = np.zeros((n_mb * nblk, 64), dtype=np.int64)
    qps = np.zeros(n_mb, dtype=np.int64)
    heads_at, blocks, nnzs = [], [], []
    toks = tokens.tolist()
    n = len(toks)
    p = 0
    qp = base_qp
    for m in range(n_mb):
        if p >= n:
            raise DecodeError("row ended early")
        t = toks[p]
        p += 1
        cbp = t & mask_all
        d = t >> nblk
        qp += -((d + 1) >> 1) if d & 1 else d >> 1
        if not QP_RANGE[0] <= qp <= QP_RANGE[1]:
            raise DecodeError(f"QP {qp} out of range")
        qps[m] = qp
        for b in range(nblk):
            if not (cbp >> b) & 1:
                continue
            if p >= n:
                raise DecodeError("row ended early")
            k = toks[p] & 63
            heads_at.append(p)
            blocks.append(m * nblk + b)
            nnzs.append(k)
            p += 1 + 2 * k
    if p != n:
        raise DecodeError(f"row has {n - p} trailing tokens" if p < n else "row ended early")

    if blocks:
        heads_at = np.array(heads_at)
        blocks = np.array(blocks)
        nnzs = np.array(nnzs)
        heads = tokens[heads_at]
        dcd = np.zeros(n_mb * nblk, dtype=np.int64)
        dcd[blocks] = _unzz(heads >> 6)
        total = int(nnzs.sum())
        if total:
            owner = np.repeat(np.arange(len(blocks)), nnzs)
            rank = np.arange(total) - np.repeat(np.cumsum(nnzs) - nnzs, nnzs)
            at = heads_at[owner] + 1 + 2 * rank
            runs = tokens[at]
            vals = _unzz(tokens[at + 1])
            steps = runs + 1
            csum = np.cumsum(steps)
            first = np.repeat(np.cumsum(nnzs) - nnzs, nnzs)
            pos = csum - (csum[first] - steps[first])  # zigzag index, 1-based over AC
            if pos.max() > 63:
                raise DecodeError("coefficient run past end of block")
            levels[blocks[owner], pos] = vals
        # undo DC prediction per plane
        dcd = dcd.reshape(n_mb, planes, 4).transpose(1, 0, 2).reshape(planes, n_mb * 4)
        dc = np.cumsum(dcd, axis=1).reshape(planes, n_mb, 4).transpose(1, 0, 2)
        levels[:, 0] = dc.reshape(-1)
    return levels.reshape(n_mb, planes, 4, 64), qps


def decode_levels(bs: Bitstream | bytes):
    """Header, zigzag levels ``(hmb, wmb, planes, 4, 64)`` and QP grid from a stream."""
    data = bs.data if isinstance(bs, Bitstream) else bytes(bs)
    h = parse_header(data)
    wmb, hmb = macroblock_grid(h["width"], h["height"])
    planes = h["planes"]
    off = HEADER.size
    lv = np.zeros((hmb, wmb, planes, 4, 64), dtype=np.int64)
    qp = np.zeros((hmb, wmb), dtype=np.int64)
    for r in range(hmb):
        if off + ROW_LEN.size > len(data):
            raise DecodeError(f"truncated stream at row {r}")
        (length,) = ROW_LEN.unpack_from(data, off)
        off += ROW_LEN.size
        if off + length > len(data):
            raise DecodeError(f"truncated payload in row {r}")
        tokens = varint_decode(data[off:off + length])
        off += length
        lv[r], qp[r] = _decode_row(tokens, wmb, planes, h["base_qp"])
    if off != len(data):
        raise DecodeError(f"{len(data) - off} trailing bytes after last row")
    return h, lv, qp


def decode_frame(bs: Bitstream | bytes) -> np.ndarray:
    """Decode to an 8-bit frame; needs nothing beyond the stream itself."""
    h, lv, qp = decode_levels(bs)
    hmb, wmb, planes = lv.shape[:3]
    inv = np.empty(64, dtype=np.int64)
    inv[ZIGZAG] = np.arange(64)
    # back to (planes, hmb*2, wmb*2, 8, 8)
    nat = lv[..., inv].reshape(hmb, wmb, planes, 2, 2, 64)
    nat = nat.transpose(2, 0, 3, 1, 4, 5).reshape(planes, hmb * 2, wmb * 2, 8, 8)
    steps = qstep(np.repeat(np.repeat(qp, 2, axis=0), 2, axis=1))
    out = []
    for p in range(planes):
        rec = reconstruct_plane(nat[p], steps)
        out.append(np.clip(np.floor(rec + 0.5), 0, 255).astype(np.uint8))
    frame = np.stack(out, axis=2)[: h["height"], : h["width"]]
    return frame[..., 0] if planes == 1 else frame


def frame_bitrate(bs: Bitstream | int, fps: float) -> float:
    """Bits per second if every frame were this size."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    return 8.0 * len(bs) * fps if isinstance(bs, Bitstream) else 8.0 * int(bs) * fps
