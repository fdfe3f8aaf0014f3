import numpy as np
import pytest

from leukoseg.colorspace import cmyk_plane_to_gray, rgb_to_cmyk, rgb_to_gray, rgb_to_lab
from leukoseg.errors import ChannelCountError
from leukoseg.raster import RasterImage


def px(*rgb):
    return RasterImage(np.array([[rgb]], np.uint8))


def values(planes):
    return tuple(float(p[0, 0]) for p in planes)


def test_cmyk_white_black_and_mixed():
    assert values(rgb_to_cmyk(px(255, 255, 255))) == (0.0, 0.0, 0.0, 0.0)
    assert values(rgb_to_cmyk(px(0, 0, 0))) == (0.0, 0.0, 0.0, 1.0)
    c, m, y, k = values(rgb_to_cmyk(px(128, 64, 32)))
    # hand derivation: K = 1 - 128/255, C = 0, M = 1 - 64/128, Y = 1 - 32/128
    assert abs(k - 127 / 255) < 1e-6 and abs(k - 0.49804) < 1e-5
    assert abs(c) < 1e-6 and abs(m - 0.5) < 1e-6 and abs(y - 0.75) < 1e-6


def test_cmyk_pure_primaries():
    assert values(rgb_to_cmyk(px(255, 0, 0))) == pytest.approx((0, 1, 1, 0))
    assert values(rgb_to_cmyk(px(0, 255, 255))) == pytest.approx((1, 0, 0, 0))


def test_cmyk_inverse_on_random_pixels(rng):
    data = rng.integers(0, 256, (500, 500, 3), dtype=np.uint8)
    c, m, y, k = rgb_to_cmyk(RasterImage(data))
    for p in (c, m, y, k):
        assert p.min() >= 0.0 and p.max() <= 1.0
    live = k < 1
    rgb = data.astype(np.float64) / 255.0
    for plane, ch in ((c, 0), (m, 1), (y, 2)):
        back = (1 - plane) * (1 - k)
        assert np.max(np.abs(back[live] - rgb[..., ch][live])) < 1e-9


def test_cmyk_needs_rgb():
    with pytest.raises(ChannelCountError):
        rgb_to_cmyk(RasterImage(np.zeros((2, 2), np.uint8)))


def test_plane_to_gray_rounding_and_range():
    g = cmyk_plane_to_gray(np.array([[0.0, 0.5, 1.0, 0.2]]))
    assert g.data.tolist() == [[0, 128, 255, 51]]
    with pytest.raises(ValueError):
        cmyk_plane_to_gray(np.array([[1.5]]))


def test_lab_against_reference_library(rng):
    skcolor = pytest.importorskip("skimage.color")
    data = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    lab = rgb_to_lab(RasterImage(data))
    ref = skcolor.rgb2lab(data)
    # the reference uses a 4-digit sRGB matrix, hence the loose tolerance
    for i, plane in enumerate(lab):
        assert np.max(np.abs(plane - ref[..., i])) < 0.02


def test_lab_white_and_grays_are_neutral():
    white = rgb_to_lab(px(255, 255, 255))
    assert values(white) == pytest.approx((100.0, 0.0, 0.0), abs=1e-6)
    grays = np.repeat(np.arange(256, dtype=np.uint8)[None, :, None], 3, axis=2)
    lab = rgb_to_lab(RasterImage(grays))
    assert np.max(np.abs(lab.a)) < 1e-6 and np.max(np.abs(lab.b)) < 1e-6
    assert np.all(np.diff(lab.l[0]) > 0)


def test_gray_luma():
    assert int(rgb_to_gray(px(100, 150, 200)).data[0, 0]) == 141
    assert int(rgb_to_gray(px(255, 255, 255)).data[0, 0]) == 255
    assert int(rgb_to_gray(px(0, 0, 0)).data[0, 0]) == 0


def test_lab_black_and_red():
    assert values(rgb_to_lab(px(0, 0, 0))) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)
    assert values(rgb_to_lab(px(255, 0, 0))) == pytest.approx((53.24, 80.09, 67.20), abs=0.1)
