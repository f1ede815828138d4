"""Training-time random vertical shear, zoom and horizontal flip."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._accel import njit, pick
from .errors import ConfigError, SingularTransform


@dataclass(frozen=True)
class AugmentParams:
    shear_range: float = 0.2
    zoom_range: float = 0.2
    horizontal_flip: bool = True
    fill: str = "nearest_edge"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.shear_range < 1 or not 0 <= self.zoom_range < 1:
            raise ConfigError("shear_range and zoom_range must lie in [0, 1)")
        if self.fill != "nearest_edge":
            raise ConfigError(f"unsupported fill mode {self.fill!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def is_identity(self) -> bool:
        return self.shear_range == 0 and self.zoom_range == 0 and not self.horizontal_flip


def hflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1].copy()


def _inverse_2x3(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (2, 3):
        raise ValueError("affine matrix must be 2x3")
    a = m[:, :2]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) <= 1e-9:
        raise SingularTransform(f"affine determinant {det:g} is not invertible")
    inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
    return np.hstack([inv, -(inv @ m[:, 2:3])])


@njit
def _source_index_nb(inv, h, w):
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    sy = np.empty((h, w), dtype=np.int64)
    sx = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        ry = y - cy
        for x in range(w):
            rx = x - cx
            fx = inv[0, 0] * rx + inv[0, 1] * ry + inv[0, 2] + cx
            fy = inv[1, 0] * rx + inv[1, 1] * ry + inv[1, 2] + cy
            ix = int(np.floor(fx + 0.5))
            iy = int(np.floor(fy + 0.5))
            sx[y, x] = min(max(ix, 0), w - 1)
            sy[y, x] = min(max(iy, 0), h - 1)
    return sy, sx


def _source_index_np(inv, h, w):
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ry, rx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    fx = inv[0, 0] * rx + inv[0, 1] * ry + inv[0, 2] + cx
    fy = inv[1, 0] * rx + inv[1, 1] * ry + inv[1, 2] + cy
    sx = np.clip(np.floor(fx + 0.5).astype(np.int64), 0, w - 1)
    sy = np.clip(np.floor(fy + 0.5).astype(np.int64), 0, h - 1)
    return sy, sx


source_index = pick(_source_index_nb, _source_index_np)


def affine_sample(pixels: np.ndarray, matrix, fill: str = "nearest_edge") -> np.ndarray:
    """Warp ``pixels`` (H, W[, C]) by a center-relative 2x3 affine matrix.

    Each destination pixel pulls the nearest source pixel under the inverse
    map; out-of-bounds source coordinates clamp to the edge.
    """
    if fill != "nearest_edge":
        raise ValueError(f"unsupported fill mode {fill!r}")
    inv = _inverse_2x3(matrix)
    h, w = pixels.shape[:2]
    sy, sx = source_index(inv, h, w)
    return pixels[sy, sx]


def draw_transform(params: AugmentParams, rng: np.random.Generator):
    """Draw one ``(matrix, flip)`` pair; the matrix is zoom composed after vertical shear."""
    s = rng.uniform(-params.shear_range, params.shear_range)
    zx = rng.uniform(1 - params.zoom_range, 1 + params.zoom_range)
    zy = rng.uniform(1 - params.zoom_range, 1 + params.zoom_range)
    flip = bool(rng.random() < 0.5) if params.horizontal_flip else False
    shear = np.array([[1.0, 0.0], [s, 1.0]])
    zoom = np.array([[zx, 0.0], [0.0, zy]])
    matrix = np.zeros((2, 3))
    matrix[:, :2] = zoom @ shear
    return matrix, flip


def transform_for(params: AugmentParams, index: int):
    """The transform at position ``index`` of the seeded augmentation stream."""
    return draw_transform(params, np.random.default_rng([params.seed & 0xFFFFFFFFFFFFFFFF, index]))


_IDENTITY = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def augment(pixels: np.ndarray, params: AugmentParams, index: int) -> np.ndarray:
    if params.is_identity:
        return pixels
    matrix, flip = transform_for(params, index)
    out = pixels if np.array_equal(matrix, _IDENTITY) else affine_sample(pixels, matrix, params.fill)
    return hflip(out) if flip else out
