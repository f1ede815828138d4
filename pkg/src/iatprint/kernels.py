"""Hot loops of the convnet: 3x3 valid convolution and 2x2 max pooling.

Every kernel works on a batch ``(N, C, H, W)`` of float64 and exists as a
numba version (``*_nb``) and a vectorised numpy version (``*_np``). The
public names are bound to one of the two by ``iatprint._accel``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import njit, pick


# -- convolution -------------------------------------------------------------
#
# numba path: per-sample im2col / col2im loops around BLAS products, with
# weight gradients accumulated sample by sample in index order.
# numpy path: strided window views contracted with tensordot.

@njit
def _im2col_nb(xs, cols):
    # xs: (C, H, W) -> cols: (C*9, Ho*Wo), row order (c, u, v)
    n_c, h, wd = xs.shape
    ho, wo = h - 2, wd - 2
    for c in range(n_c):
        for u in range(3):
            for v in range(3):
                r = (c * 3 + u) * 3 + v
                for i in range(ho):
                    base = i * wo
                    src = xs[c, i + u]
                    for j in range(wo):
                        cols[r, base + j] = src[j + v]


@njit
def _col2im_nb(dcols, dxs):
    n_c, h, wd = dxs.shape
    ho, wo = h - 2, wd - 2
    for c in range(n_c):
        for u in range(3):
            for v in range(3):
                r = (c * 3 + u) * 3 + v
                for i in range(ho):
                    base = i * wo
                    dst = dxs[c, i + u]
                    for j in range(wo):
                        dst[j + v] += dcols[r, base + j]


@njit
def conv_forward_nb(x, w, b):
    n_s, n_c, h, wd = x.shape
    n_k = w.shape[0]
    ho, wo = h - 2, wd - 2
    wm = np.ascontiguousarray(w.reshape(n_k, n_c * 9))
    cols = np.empty((n_c * 9, ho * wo))
    y = np.empty((n_s, n_k, ho, wo))
    for n in range(n_s):
        _im2col_nb(x[n], cols)
        out = np.dot(wm, cols)
        for k in range(n_k):
            bk = b[k]
            for i in range(ho):
                for j in range(wo):
                    y[n, k, i, j] = out[k, i * wo + j] + bk
    return y


def conv_forward_np(x, w, b):
    win = sliding_window_view(x, (3, 3), axis=(2, 3))  # (N, C, Ho, Wo, 3, 3)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, K)
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y


@njit
def conv_backward_nb(x, w, dy, need_dx=True):
    n_s, n_c, h, wd = x.shape
    n_k = w.shape[0]
    ho, wo = h - 2, wd - 2
    wm = np.ascontiguousarray(w.reshape(n_k, n_c * 9))
    wmt = np.ascontiguousarray(wm.T)
    cols = np.empty((n_c * 9, ho * wo))
    dwm = np.zeros((n_k, n_c * 9))
    db = np.zeros(n_k)
    dx = np.zeros(x.shape) if need_dx else np.zeros((0, n_c, h, wd))
    for n in range(n_s):
        g = np.ascontiguousarray(dy[n]).reshape(n_k, ho * wo)
        for k in range(n_k):
            s = 0.0
            for p in range(ho * wo):
                s += g[k, p]
            db[k] += s
        _im2col_nb(x[n], cols)
        dwm += np.dot(g, cols.T)
        if need_dx:
            _col2im_nb(np.dot(wmt, g), dx[n])
    return dx, dwm.reshape(w.shape), db


def conv_backward_np(x, w, dy, need_dx=True):
    n_s, n_c, h, wd = x.shape
    ho, wo = h - 2, wd - 2
    win = sliding_window_view(x, (3, 3), axis=(2, 3))
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))  # (K, C, 3, 3)
    db = dy.sum(axis=(0, 2, 3))
    if not need_dx:
        return np.zeros((0, n_c, h, wd)), dw, db
    dx = np.zeros_like(x)
    for u in range(3):
        for v in range(3):
            part = np.tensordot(dy, w[:, :, u, v], axes=([1], [0]))  # (N, Ho, Wo, C)
            dx[:, :, u:u + ho, v:v + wo] += part.transpose(0, 3, 1, 2)
    return dx, dw, db


# -- max pooling ---------------------------------------------------------------

@njit
def maxpool_forward_nb(x):
    n_s, n_k, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    y = np.empty((n_s, n_k, ho, wo))
    arg = np.empty((n_s, n_k, ho, wo), dtype=np.int8)
    for n in range(n_s):
        for k in range(n_k):
            for i in range(ho):
                for j in range(wo):
                    best = x[n, k, 2 * i, 2 * j]
                    idx = 0
                    for q in range(1, 4):
                        val = x[n, k, 2 * i + q // 2, 2 * j + q % 2]
                        if val > best:
                            best = val
                            idx = q
                    y[n, k, i, j] = best
                    arg[n, k, i, j] = idx
    return y, arg


def maxpool_forward_np(x):
    n_s, n_k, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    blocks = x[:, :, :2 * ho, :2 * wo].reshape(n_s, n_k, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n_s, n_k, ho, wo, 4)
    arg = blocks.argmax(axis=-1).astype(np.int8)  # first maximum wins ties
    y = np.take_along_axis(blocks, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return y, arg


@njit
def maxpool_backward_nb(dy, arg, h, wd):
    n_s, n_k, ho, wo = dy.shape
    dx = np.zeros((n_s, n_k, h, wd))
    for n in range(n_s):
        for k in range(n_k):
            for i in range(ho):
                for j in range(wo):
                    q = arg[n, k, i, j]
                    dx[n, k, 2 * i + q // 2, 2 * j + q % 2] = dy[n, k, i, j]
    return dx


def maxpool_backward_np(dy, arg, h, wd):
    n_s, n_k, ho, wo = dy.shape
    onehot = arg[..., None] == np.arange(4, dtype=np.int8)
    blocks = (onehot * dy[..., None]).reshape(n_s, n_k, ho, wo, 2, 2)
    dx = np.zeros((n_s, n_k, h, wd))
    dx[:, :, :2 * ho, :2 * wo] = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n_s, n_k, 2 * ho, 2 * wo)
    return dx


conv_forward = pick(conv_forward_nb, conv_forward_np)
conv_backward = pick(conv_backward_nb, conv_backward_np)
maxpool_forward = pick(maxpool_forward_nb, maxpool_forward_np)
maxpool_backward = pick(maxpool_backward_nb, maxpool_backward_np)
