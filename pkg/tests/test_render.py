import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iatprint.errors import ConfigError, NonPositiveValue
from iatprint.iat import DeviceKey, IatWindow
from iatprint.render import (FingerprintImage, PlotStyle, _draw_polyline_nb, _draw_polyline_py, decode_ppm,
                             encode_ppm, line_mask, rasterize, read_ppm, render_curve, scale_window, write_ppm)

LOG = PlotStyle(y_scale="log_fixed")
positive_windows = st.lists(st.floats(1e-7, 20.0, allow_nan=False), min_size=2, max_size=120)


def test_constant_window_on_midline():
    pts = scale_window(np.full(100, 0.01))
    assert set(pts[:, 1]) == {74}  # rows 4..145, centre 74.5 rounds down in row space
    assert pts[0, 0] == 4 and pts[-1, 0] == 145


def test_alternating_min_max_hits_margins():
    pts = scale_window([1.0, 3.0] * 50, PlotStyle(autoscale_pad=0.0))
    assert pts[::2, 1].tolist() == [145] * 50 and pts[1::2, 1].tolist() == [4] * 50


def test_x_columns_fixed_by_index():
    xs = scale_window(np.linspace(1, 2, 100))[:, 0]
    assert np.array_equal(xs, scale_window(np.random.default_rng(1).random(100) + 0.1)[:, 0])
    assert np.all(np.diff(xs) >= 1)


def test_log_fixed_bounds():
    pts = scale_window([1e-9, 1e-6, 10.0, 100.0], LOG)
    assert pts[:, 1].tolist() == [145, 145, 4, 4]
    assert scale_window([1e-3, 1e-3], LOG)[0, 1] == 145 - round(141 * 3 / 7)


def test_log_fixed_rejects_non_positive():
    with pytest.raises(NonPositiveValue):
        scale_window([0.1, 0.0], LOG)


def test_window_too_short():
    with pytest.raises(ValueError):
        scale_window([1.0])


@pytest.mark.parametrize("mode", ["linear_autoscale", "log_fixed"])
def test_reference_coordinates_golden(reference_window, goldens, mode):
    pts = scale_window(reference_window, PlotStyle(y_scale=mode))
    assert pts.tolist() == goldens[mode]["coordinates"]


@pytest.mark.parametrize("mode", ["linear_autoscale", "log_fixed"])
def test_reference_raster_golden(reference_window, goldens, mode):
    img = rasterize(reference_window, PlotStyle(y_scale=mode))
    data = encode_ppm(img)
    assert data == encode_ppm(rasterize(reference_window, PlotStyle(y_scale=mode)))
    assert hashlib.sha256(data).hexdigest() == goldens[mode]["ppm_sha256"]
    assert int((img.pixels == 0).all(axis=2).sum()) == goldens[mode]["black_pixels"]


def test_constant_window_single_run():
    px = rasterize(np.full(100, 0.01)).pixels
    black = (px == 0).all(axis=2)
    rows = np.flatnonzero(black.any(axis=1))
    assert rows.tolist() == [74]
    cols = np.flatnonzero(black[74])
    assert cols.tolist() == list(range(4, 146))  # width - 2*margin pixels, no gaps
    assert ((px == 0).all(axis=2) | (px == 255).all(axis=2)).all()


def test_rasterize_accepts_window_object(reference_window):
    win = IatWindow(DeviceKey(b"\x02" * 6), reference_window, 0)
    assert np.array_equal(rasterize(win).pixels, rasterize(reference_window).pixels)


@settings(max_examples=40, deadline=None)
@given(positive_windows, st.sampled_from(["linear_autoscale", "log_fixed"]))
def test_line_pixels_inside_plot_rectangle(values, mode):
    style = PlotStyle(width=40, height=30, margin=3, y_scale=mode)
    mask = line_mask(values, style)
    inner = np.zeros_like(mask)
    inner[3:27, 3:37] = True
    assert mask.any() and not (mask & ~inner).any()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=100, unique=True))
def test_monotone_window_rows_non_increasing(values):
    rows = scale_window(sorted(values))[:, 1]
    assert np.all(np.diff(rows) <= 0)


@settings(max_examples=40, deadline=None)
@given(positive_windows)
def test_backends_agree(values):
    pts = np.ascontiguousarray(scale_window(values, PlotStyle(width=64, height=48, margin=2)), dtype=np.int64)
    a = _draw_polyline_nb(np.zeros((48, 64), np.uint8), pts)
    b = _draw_polyline_py(np.zeros((48, 64), np.uint8), pts)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("a, b", [((0, 0), (19, 3)), ((19, 3), (2, 19)), ((2, 19), (2, 5)),
                                  ((2, 5), (15, 18)), ((15, 18), (15, 0)), ((7, 7), (7, 7))])
def test_segment_one_pixel_per_major_step(a, b):
    mask = _draw_polyline_py(np.zeros((20, 20), np.uint8), np.array([a, b], dtype=np.int64))
    dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
    assert mask[a[1], a[0]] and mask[b[1], b[0]]
    assert mask.sum() == max(dx, dy) + 1
    per_step = mask.sum(axis=0) if dx >= dy else mask.sum(axis=1)
    assert set(per_step[per_step > 0]) == {1}


def test_ppm_examples():
    white = FingerprintImage(np.full((1, 1, 3), 255, np.uint8))
    assert encode_ppm(white) == b"P6\n1 1\n255\n\xff\xff\xff"
    bw = FingerprintImage(np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8))
    assert encode_ppm(bw) == b"P6\n2 1\n255\n" + bytes([0, 0, 0, 255, 255, 255])


def test_ppm_round_trip(tmp_path):
    px = np.random.default_rng(0).integers(0, 256, (7, 5, 3), dtype=np.uint8)
    img = FingerprintImage(px)
    assert np.array_equal(decode_ppm(encode_ppm(img)).pixels, px)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm").pixels, px)


def test_ppm_with_comment():
    data = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03"
    assert decode_ppm(data).pixels.tolist() == [[[1, 2, 3]]]


def test_style_validation():
    with pytest.raises(ConfigError):
        PlotStyle(width=8, height=8, margin=4)
    with pytest.raises(ConfigError):
        PlotStyle(log_bounds=(1.0, 0.5))


def test_render_curve_default_size():
    img = render_curve([0.5, 0.7, 0.9])
    assert (img.width, img.height) == (300, 150)
