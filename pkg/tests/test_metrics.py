import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from foveastream.geometry import FovSpec, ScreenPoint
from foveastream.metrics import (PSNR_CAP, default_sigma, ewpsnr, ewssim, foveation_weights,
                                 frame_quality, psnr, ssim, ssim_map, to_luma,
                                 window_center_weights)
from foveastream.sources import textured_noise

skimage_data = pytest.importorskip("skimage.data")
# large flat areas (moon, clock) keep SSIM's stabilizing constant in charge, so
# inversion barely moves their score; the corpus below is textured throughout
TEXTURED = ["camera", "astronaut", "coffee", "chelsea", "rocket", "brick", "grass",
            "gravel", "coins", "page"]
# 5 deg on a 256 px, 90 deg view: 5 * 128 * pi / 180
SIGMA_256_90 = 11.170107212763709


def _oracle_ssim_map(a, b, window=8):
    """Brute-force per-window SSIM with population statistics."""
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    h, w = a.shape
    out = np.empty((h - window + 1, w - window + 1))
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            pa = a[y:y + window, x:x + window].astype(float)
            pb = b[y:y + window, x:x + window].astype(float)
            ma, mb = pa.mean(), pb.mean()
            cov = ((pa - ma) * (pb - mb)).mean()
            out[y, x] = ((2 * ma * mb + c1) * (2 * cov + c2)) / (
                (ma ** 2 + mb ** 2 + c1) * (pa.var() + pb.var() + c2))
    return out


def test_default_sigma_oracle():
    assert default_sigma(FovSpec(45, 45, 45, 45), 256) == pytest.approx(SIGMA_256_90, abs=1e-9)


def test_weights_peak_at_gaze_and_halve_at_closed_form_radius():
    sigma = 10.0
    w = foveation_weights((101, 101), ScreenPoint(50, 50), sigma)
    assert w[50, 50] == 1.0
    r = sigma * math.sqrt(2 * math.log(2))
    assert foveation_weights((1, 200), (0.0, 0.0), sigma)[0, 0] == 1.0
    assert float(np.exp(-r * r / (2 * sigma * sigma))) == pytest.approx(0.5, abs=1e-12)
    off = foveation_weights((1, 1), (r, 0.0), sigma)[0, 0]
    assert off == pytest.approx(0.5, abs=1e-12)


@given(st.integers(0, 40), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20))
def test_weights_shift_rigidly_with_gaze(gx, gy, dx, dy):
    a = foveation_weights((60, 80), (gx, gy), 7.0)
    b = foveation_weights((60, 80), (gx + dx, gy + dy), 7.0)
    np.testing.assert_allclose(b[dy:, dx:], a[:-dy, :-dx], rtol=1e-12)


# below sigma ~2 the far corner of a 60 px grid underflows float64 to zero
@given(st.floats(3.0, 50.0))
def test_weights_positive_and_radially_non_increasing(sigma):
    w = foveation_weights((40, 60), (25.0, 10.0), sigma)
    assert np.all(w > 0) and np.all(w <= 1)
    yy, xx = np.mgrid[0:40, 0:60]
    d = np.hypot(xx - 25, yy - 10).ravel()
    order = np.argsort(d)
    assert np.all(np.diff(w.ravel()[order]) <= 1e-15)


def test_weights_reject_nonpositive_sigma():
    with pytest.raises(ValueError):
        foveation_weights((4, 4), (0, 0), 0.0)


def test_identical_frames_hit_the_caps(rng):
    f = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    w = foveation_weights(f.shape, (32, 32), 8.0)
    assert ewpsnr(f, f, w) == psnr(f, f) == PSNR_CAP == 99.0
    assert ewssim(f, f, w) == pytest.approx(1.0, abs=1e-12)
    assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)


def test_uniform_weights_reduce_to_plain_psnr(rng):
    a = rng.integers(0, 256, (48, 72), dtype=np.uint8)
    b = np.clip(a + rng.normal(0, 9, a.shape), 0, 255).astype(np.uint8)
    ones = np.ones(a.shape)
    assert ewpsnr(a, b, ones) == pytest.approx(psnr(a, b), abs=1e-9)
    assert ewssim(a, b, ones) == pytest.approx(ssim(a, b), abs=1e-12)
    mse = np.mean((a.astype(float) - b) ** 2)
    assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / mse), abs=1e-9)


def test_ssim_map_matches_brute_force_windows(rng):
    a = textured_noise(1, (40, 30))
    b = np.clip(a + rng.normal(0, 12, a.shape), 0, 255).astype(np.uint8)
    np.testing.assert_allclose(ssim_map(a, b), _oracle_ssim_map(a, b), atol=1e-9)


def test_ssim_close_to_reference_implementation(rng):
    from skimage.metrics import structural_similarity
    a = textured_noise(2, (96, 96), blur=1.5)
    b = np.clip(a + rng.normal(0, 10, a.shape), 0, 255).astype(np.uint8)
    ref = structural_similarity(a, b, win_size=7, data_range=255, use_sample_covariance=False)
    # different window size and border handling: agreement to a couple of percent
    assert ssim(a, b) == pytest.approx(ref, abs=0.03)


def test_window_centers_for_even_window():
    w = np.arange(100, dtype=float).reshape(10, 10)
    wc = window_center_weights(w)
    assert wc.shape == (3, 3)
    # center of window [0, 8) is 3.5: mean of rows/cols 3 and 4
    assert wc[0, 0] == pytest.approx(np.mean([33, 34, 43, 44]))


def _noise_patch_pair(at):
    rng = np.random.default_rng(9)
    ref = textured_noise(4, (256, 256), blur=1.5)
    test = ref.copy()
    x, y = at
    patch = rng.normal(0, 40, (32, 32))
    test[y:y + 32, x:x + 32] = np.clip(ref[y:y + 32, x:x + 32] + patch, 0, 255)
    return ref, test


def test_noise_at_gaze_scores_worse_than_noise_in_periphery():
    gaze = (128, 128)
    w = foveation_weights((256, 256), gaze, default_sigma(FovSpec(45, 45, 45, 45), 256))
    fovea = _noise_patch_pair((112, 112))
    periphery = _noise_patch_pair((0, 0))
    assert ewpsnr(*fovea, w) < ewpsnr(*periphery, w)
    assert ewssim(*fovea, w) < ewssim(*periphery, w)
    # unweighted scores cannot tell the two apart as clearly
    assert abs(psnr(*fovea) - psnr(*periphery)) < 0.5


@pytest.mark.parametrize("name", TEXTURED)
def test_inverted_natural_frame_scores_near_zero(name):
    img = getattr(skimage_data, name)()
    h, w = img.shape[:2]
    wts = foveation_weights((h, w), (w / 2, h / 2), default_sigma(FovSpec(), w))
    assert ewssim(img, 255 - img, wts) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_inverted_synthetic_frame_scores_near_zero(seed):
    f = textured_noise(seed, (128, 128))
    wts = foveation_weights(f.shape, (64, 64), 12.0)
    assert ewssim(f, 255 - f, wts) < 0.05


@given(arrays(np.uint8, (16, 16)), arrays(np.uint8, (16, 16)), st.floats(1.0, 20.0))
def test_metrics_symmetric(a, b, sigma):
    w = foveation_weights(a.shape, (8, 8), sigma)
    assert ewpsnr(a, b, w) == ewpsnr(b, a, w)
    assert ewssim(a, b, w) == pytest.approx(ewssim(b, a, w), abs=1e-12)


@given(arrays(np.float64, (24, 24), elements=st.floats(0, 1)),
       st.integers(0, 16), st.integers(0, 16), st.floats(1.01, 50.0))
def test_boosting_weight_on_the_differing_region_never_raises_ewpsnr(w0, x, y, boost):
    rng = np.random.default_rng(x * 31 + y)
    ref = rng.integers(0, 256, (24, 24)).astype(np.uint8)
    test = ref.copy()
    test[y:y + 8, x:x + 8] ^= 0x40
    w0 = w0 + 0.01
    w1 = w0.copy()
    w1[y:y + 8, x:x + 8] *= boost
    assert ewpsnr(ref, test, w1) <= ewpsnr(ref, test, w0) + 1e-12


def test_boosting_weight_on_a_degraded_patch_lowers_ewssim():
    ref, test = _noise_patch_pair((100, 60))
    w0 = foveation_weights((256, 256), (40, 200), 30.0)
    w1 = w0.copy()
    w1[60:92, 100:132] *= 20
    assert ewssim(ref, test, w1) < ewssim(ref, test, w0)


def test_color_frames_compared_on_luma(rng):
    rgb = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    luma = to_luma(rgb)
    assert luma.shape == (32, 32)
    assert luma[0, 0] == pytest.approx(0.299 * rgb[0, 0, 0] + 0.587 * rgb[0, 0, 1] + 0.114 * rgb[0, 0, 2])


def test_frame_quality_agrees_with_individual_metrics(rng):
    a = textured_noise(6, (64, 48))
    b = np.clip(a + rng.normal(0, 5, a.shape), 0, 255).astype(np.uint8)
    w = foveation_weights(a.shape, (20, 30), 9.0)
    q = frame_quality(a, b, w)
    assert q["ewpsnr"] == pytest.approx(ewpsnr(a, b, w), abs=1e-12)
    assert q["ewssim"] == pytest.approx(ewssim(a, b, w), abs=1e-12)
    assert q["psnr"] == pytest.approx(psnr(a, b), abs=1e-12)
    assert q["ssim"] == pytest.approx(ssim(a, b), abs=1e-12)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        ewpsnr(np.zeros((4, 4)), np.zeros((4, 4)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)))
