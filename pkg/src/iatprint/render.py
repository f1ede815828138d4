"""Deterministic rasterization of IAT windows into fingerprint images."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._accel import njit, pick
from .errors import ConfigError, NonPositiveValue

LINEAR_AUTOSCALE = "linear_autoscale"
LOG_FIXED = "log_fixed"


@dataclass(frozen=True)
class PlotStyle:
    width: int = 150
    height: int = 150
    margin: int = 4
    background: tuple = (255, 255, 255)
    line_color: tuple = (0, 0, 0)
    y_scale: str = LINEAR_AUTOSCALE
    log_bounds: tuple = (1e-6, 10.0)
    autoscale_pad: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(int(c) for c in self.background))
        object.__setattr__(self, "line_color", tuple(int(c) for c in self.line_color))
        object.__setattr__(self, "log_bounds", tuple(float(b) for b in self.log_bounds))
        if 2 * self.margin >= min(self.width, self.height):
            raise ConfigError("margin too large for canvas")
        if self.y_scale not in (LINEAR_AUTOSCALE, LOG_FIXED):
            raise ConfigError(f"unknown y_scale {self.y_scale!r}")
        lo, hi = self.log_bounds
        if not 0 < lo < hi:
            raise ConfigError("log_bounds must satisfy 0 < min < max")
        if self.background == self.line_color:
            raise ConfigError("background and line colour must differ")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background"] = list(self.background)
        d["line_color"] = list(self.line_color)
        d["log_bounds"] = list(self.log_bounds)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FingerprintImage:
    pixels: np.ndarray  # (height, width, 3) uint8

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _rhu(x: float) -> int:
    return int(math.floor(x + 0.5))


def scale_window(values, style: PlotStyle = PlotStyle()) -> np.ndarray:
    """Map window values to integer ``(x, y)`` pixel coordinates, shape ``(W, 2)``."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n < 2:
        raise ValueError("window needs at least 2 values")
    m = style.margin
    inner_x = style.width - 1 - 2 * m
    inner_y = style.height - 1 - 2 * m
    k = np.arange(n, dtype=np.int64)
    # exact integer round-half-up of k * inner_x / (n - 1)
    xs = m + (2 * k * inner_x + (n - 1)) // (2 * (n - 1))

    if style.y_scale == LOG_FIXED:
        if np.any(v <= 0):
            raise NonPositiveValue("log_fixed scale requires strictly positive values")
        lo, hi = style.log_bounds
        llo, lhi = math.log10(lo), math.log10(hi)
        frac = (np.log10(np.clip(v, lo, hi)) - llo) / (lhi - llo)
    else:
        vmin, vmax = float(v.min()), float(v.max())
        span = vmax - vmin
        if span == 0:
            lo, hi = vmin - 0.5, vmin + 0.5
        else:
            pad = style.autoscale_pad * span
            lo, hi = vmin - pad, vmax + pad
        frac = (v - lo) / (hi - lo)
    ys = (style.height - 1 - m) - np.floor(frac * inner_y + 0.5).astype(np.int64)
    return np.stack([xs, ys], axis=1)


@njit
def _draw_polyline_nb(mask, pts):
    for k in range(pts.shape[0] - 1):
        x0, y0 = pts[k, 0], pts[k, 1]
        x1, y1 = pts[k + 1, 0], pts[k + 1, 1]
        dx = abs(x1 - x0)
        dy = abs(y1 - y0)
        sx = 1 if x1 >= x0 else -1
        sy = 1 if y1 >= y0 else -1
        if dx >= dy:
            err = 2 * dy - dx
            y = y0
            for i in range(dx + 1):
                mask[y, x0 + i * sx] = 1
                if err >= 0:
                    y += sy
                    err -= 2 * dx
                err += 2 * dy
        else:
            err = 2 * dx - dy
            x = x0
            for i in range(dy + 1):
                mask[y0 + i * sy, x] = 1
                if err >= 0:
                    x += sx
                    err -= 2 * dy
                err += 2 * dx
    return mask


def _draw_polyline_py(mask, pts):
    # same integer recurrence, plain Python ints
    for k in range(len(pts) - 1):
        x0, y0 = int(pts[k][0]), int(pts[k][1])
        x1, y1 = int(pts[k + 1][0]), int(pts[k + 1][1])
        dx, dy = abs(x1 - x0), abs(y1 - y0)
        sx = 1 if x1 >= x0 else -1
        sy = 1 if y1 >= y0 else -1
        if dx >= dy:
            err, y = 2 * dy - dx, y0
            cols = x0 + sx * np.arange(dx + 1)
            rows = np.empty(dx + 1, dtype=np.int64)
            for i in range(dx + 1):
                rows[i] = y
                if err >= 0:
                    y += sy
                    err -= 2 * dx
                err += 2 * dy
        else:
            err, x = 2 * dx - dy, x0
            rows = y0 + sy * np.arange(dy + 1)
            cols = np.empty(dy + 1, dtype=np.int64)
            for i in range(dy + 1):
                cols[i] = x
                if err >= 0:
                    x += sx
                    err -= 2 * dy
                err += 2 * dx
        mask[rows, cols] = 1
    return mask


draw_polyline = pick(_draw_polyline_nb, _draw_polyline_py)


def line_mask(values, style: PlotStyle = PlotStyle()) -> np.ndarray:
    """Boolean (height, width) mask of line pixels for a window."""
    pts = scale_window(values, style)
    mask = np.zeros((style.height, style.width), dtype=np.uint8)
    draw_polyline(mask, np.ascontiguousarray(pts, dtype=np.int64))
    return mask.astype(bool)


def rasterize(values, style: PlotStyle = PlotStyle()) -> FingerprintImage:
    if hasattr(values, "values") and not isinstance(values, np.ndarray):
        values = values.values  # accept an IatWindow
    mask = line_mask(values, style)
    pixels = np.empty((style.height, style.width, 3), dtype=np.uint8)
    pixels[...] = np.array(style.background, dtype=np.uint8)
    pixels[mask] = np.array(style.line_color, dtype=np.uint8)
    return FingerprintImage(pixels)


def encode_ppm(image: FingerprintImage) -> bytes:
    px = np.ascontiguousarray(image.pixels, dtype=np.uint8)
    return f"P6\n{image.width} {image.height}\n255\n".encode("ascii") + px.tobytes()


def decode_ppm(data: bytes) -> FingerprintImage:
    """Decode a binary P6 file with maxval 255 (as written by ``encode_ppm``)."""
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P6" or int(fields[3]) != 255:
        raise ValueError("only binary P6 with maxval 255 is supported")
    w, h = int(fields[1]), int(fields[2])
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return FingerprintImage(raw.reshape(h, w, 3).copy())


def write_ppm(path, image: FingerprintImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def read_ppm(path) -> FingerprintImage:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def render_curve(values, style: PlotStyle | None = None) -> FingerprintImage:
    """Plot an arbitrary-length series (e.g. a training curve) with autoscaling."""
    style = style or PlotStyle(width=300, height=150, y_scale=LINEAR_AUTOSCALE)
    v = np.asarray(values, dtype=np.float64)
    if v.size == 1:
        v = np.repeat(v, 2)
    return rasterize(v, style)
