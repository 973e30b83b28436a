"""Independent oracles shared by the unit and acceptance tests."""

import math

import numpy as np

from foveastream.fovea_warp import fsc_map_axis, fsd_map_axis


def literal_left_bound_px(full, gaze, size, comp):
    """Left fovea bound exactly as printed in the compression pseudocode, scaled to pixels."""
    w_r = full * (size + (1 - size) / comp)
    return 2 * (1 - size) / ((comp - 1) * size + 1) * gaze / full * w_r


def literal_right_bound_px(full, gaze, size, comp):
    w_r = full * (size + (1 - size) / comp)
    return ((1 - size) / (size * (comp - 1) + 1) * (gaze - full) / full + 1) * w_r


def three_piece_map(i, left, right, full, gaze, size, comp):
    """Compression map built from explicit bounds; used to probe seams."""
    c_f = (comp - 1) / comp * (1 - size) * gaze / full
    if i < left:
        return comp * i
    if i > right:
        return comp * i + full * (1 - comp) * size
    return i + c_f * full


def axis_source_windows(spec, n_game, n_fsc, n_src):
    """Per game pixel, the inclusive source range spanned by the samples that rebuild it."""
    idx = np.arange(n_game, dtype=np.float64)
    u = np.clip(fsd_map_axis(idx, spec), 0, n_fsc - 1)
    u0 = np.floor(u).astype(int)
    u1 = np.minimum(u0 + 1, n_fsc - 1)
    lo = np.floor(np.clip(fsc_map_axis(u0.astype(float), spec), 0, n_src - 1)).astype(int)
    hi = np.minimum(np.floor(np.clip(fsc_map_axis(u1.astype(float), spec), 0, n_src - 1)) + 1,
                    n_src - 1).astype(int)
    # the pixel being reconstructed belongs to its own span (matters at the
    # frame edge, where the last sample sits short of the last pixel)
    pix = np.arange(n_game)
    return np.minimum(lo, pix), np.maximum(hi, pix)


def local_oscillation(frame, layout):
    """max - min of the source over each pixel's reachable window."""
    h, w = frame.shape
    fw, fh = layout.fsc_size
    xlo, xhi = axis_source_windows(layout.x, w, fw, w)
    ylo, yhi = axis_source_windows(layout.y, h, fh, h)
    f = frame.astype(np.int64)
    colmax = np.empty_like(f)
    colmin = np.empty_like(f)
    for x in range(w):
        colmax[:, x] = f[:, xlo[x]:xhi[x] + 1].max(axis=1)
        colmin[:, x] = f[:, xlo[x]:xhi[x] + 1].min(axis=1)
    out = np.empty_like(f)
    for y in range(h):
        out[y] = colmax[ylo[y]:yhi[y] + 1].max(axis=0) - colmin[ylo[y]:yhi[y] + 1].min(axis=0)
    return out


def psnr_oracle(a, b):
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    return math.inf if mse == 0 else 10 * math.log10(255.0 ** 2 / mse)
