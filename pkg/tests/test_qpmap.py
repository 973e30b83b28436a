import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foveastream.geometry import FovSpec, MacroblockCoord
from foveastream.qpmap import (FoveationConfig, build_qp_map, degrees_to_macroblocks,
                               fovea_radius_macroblocks, macroblock_grid, qp_map_to_image,
                               quantization_offset, read_qp_csv, uniform_qp_map, write_qp_csv)

# 40 * (1 - exp(-30^2 / (2 * 6^2))), 40-digit mpmath
QO_C6_D30 = 39.999850933873116853
# 40 * (1 - exp(-48^2 / (2 * 120^2)))
QO_C120_D48 = 3.0753461445345686836
# 6 * sqrt(2 ln(40 / 28)): distance where QP reaches 23 with C = 6
RADIUS_C6_QP23 = 5.0676025854035487183


def test_config_defaults_and_validation():
    cfg = FoveationConfig()
    assert (cfg.qp_const, cfg.qp_max, cfg.qo_max) == (11, 51, 40)
    for bad in [(0, 51), (11, 11), (11, 52), (30, 20)]:
        with pytest.raises(ValueError):
            FoveationConfig(*bad)


def test_offset_is_zero_at_gaze():
    assert quantization_offset(0.0, 50.0) == 0.0


@pytest.mark.parametrize("c", [6.0, 17.5, 120.0])
def test_offset_half_maximum(c):
    d = c * math.sqrt(2 * math.log(2))
    assert quantization_offset(d, c) == pytest.approx(20.0, abs=1e-9)


def test_offset_saturation_oracle():
    assert quantization_offset(30.0, 6.0) == pytest.approx(QO_C6_D30, abs=1e-9)
    assert quantization_offset(48.0, 120.0) == pytest.approx(QO_C120_D48, abs=1e-9)


def test_offset_rejects_nonpositive_controller():
    with pytest.raises(ValueError):
        quantization_offset(1.0, 0.0)


def test_offset_vectorized_matches_scalar():
    d = np.linspace(0, 60, 31)
    v = quantization_offset(d, 12.0)
    assert v.shape == d.shape
    for di, vi in zip(d, v):
        assert vi == quantization_offset(float(di), 12.0)


def test_gaze_block_keeps_qp_const():
    m = build_qp_map(2176, 1056, MacroblockCoord(68, 33), 6.0)
    assert m.qp[33, 68] == 11
    assert m.qp.min() == 11
    assert (m.width_mb, m.height_mb) == (136, 66)


def test_wide_controller_keeps_near_blocks_sharp():
    m = build_qp_map(2176, 1056, MacroblockCoord(68, 33), 120.0)
    jj, ii = np.mgrid[0:66, 0:136]
    near = np.hypot(ii - 68, jj - 33) <= 48
    assert m.qp[near].max() <= 15


def test_narrow_controller_fovea_radius():
    assert fovea_radius_macroblocks(6.0, 23) == pytest.approx(RADIUS_C6_QP23, abs=1e-9)
    m = build_qp_map(2176, 1056, MacroblockCoord(68, 33), 6.0)
    jj, ii = np.mgrid[0:66, 0:136]
    assert m.qp[np.hypot(ii - 68, jj - 33) <= 5].max() <= 23


def test_fovea_radius_is_unbounded_at_qp_max():
    assert fovea_radius_macroblocks(6.0, 51) == math.inf


def test_grid_rounds_partial_blocks_up():
    assert macroblock_grid(2176, 1056) == (136, 66)
    assert macroblock_grid(100, 17) == (7, 2)


def test_gaze_outside_grid_rejected():
    with pytest.raises(ValueError):
        build_qp_map(160, 128, MacroblockCoord(10, 0), 6.0)


@given(st.floats(1.0, 150.0), st.integers(0, 15), st.integers(0, 7))
def test_qp_radially_monotone(c, gx, gy):
    m = build_qp_map(256, 128, MacroblockCoord(gx, gy), c)
    jj, ii = np.mgrid[0:8, 0:16]
    d = np.hypot(ii - gx, jj - gy).ravel()
    q = m.qp.ravel()[np.argsort(d, kind="stable")]
    ds = np.sort(d)
    # equal distances give equal QP; otherwise QP never decreases outward
    assert np.all(np.diff(q)[np.diff(ds) > 0] >= 0)
    assert np.all(np.diff(q)[np.diff(ds) == 0] == 0)


@given(st.floats(1.0, 119.0), st.floats(0.01, 60.0), st.integers(0, 15), st.integers(0, 7))
def test_qp_non_increasing_in_controller(c, dc, gx, gy):
    lo = build_qp_map(256, 128, MacroblockCoord(gx, gy), c).qp
    hi = build_qp_map(256, 128, MacroblockCoord(gx, gy), c + dc).qp
    assert np.all(hi <= lo)


@given(st.floats(0.5, 200.0), st.integers(2, 40))
def test_qp_bounded_by_qp_max(c, qp_const):
    cfg = FoveationConfig(qp_const=qp_const, qp_max=51)
    m = build_qp_map(640, 640, MacroblockCoord(0, 0), c, cfg)
    assert m.qp.min() == qp_const
    assert m.qp.max() <= 51
    assert np.all(quantization_offset(np.arange(200.0), c, cfg) < cfg.qo_max + 0.5)


def test_uniform_map_renders_uniform_image():
    img = qp_map_to_image(uniform_qp_map(64, 48, 30))
    assert img.shape == (3, 4)
    assert np.unique(img).tolist() == [150]


def test_image_darkest_at_gaze():
    img = qp_map_to_image(build_qp_map(320, 320, MacroblockCoord(4, 13), 3.0))
    assert img[13, 4] == img.min()
    assert np.count_nonzero(img == img.min()) < img.size


def test_image_ordering_follows_controller():
    a = qp_map_to_image(build_qp_map(320, 320, MacroblockCoord(10, 10), 6.0))
    b = qp_map_to_image(build_qp_map(320, 320, MacroblockCoord(10, 10), 120.0))
    assert np.all(a >= b)
    assert np.any(a > b)


def test_csv_round_trip(tmp_path):
    m = build_qp_map(300, 200, MacroblockCoord(3, 4), 7.5)
    path = tmp_path / "qp.csv"
    write_qp_csv(path, m)
    assert np.array_equal(read_qp_csv(path).qp, m.qp)


def test_degrees_to_macroblocks_uses_view_axis_density():
    fov = FovSpec(45, 45, 45, 45)
    # 90 deg FoV on 1600 px: the projection has slope 800 px per radian at the axis
    expected = 5 * 800 * math.pi / 180 / 16
    assert degrees_to_macroblocks(5.0, fov, 1600) == pytest.approx(expected, rel=1e-12)
