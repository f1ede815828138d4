"""The fingerprint CNN in float64: parameters, forward/backward, loss, optimizers, weight files.

Layer chain for an ``(3, H, W)`` input::

    conv(32) relu pool  conv(32) relu pool  conv(64) relu pool
    flatten  dense(64) relu dropout  dense(1) sigmoid

All 3x3 convolutions are valid/stride 1, all pools 2x2/stride 2.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    BadModelMagic,
    ModelFormatError,
    ShapeChainMismatch,
    ShapeMismatch,
    StaleCache,
    TruncatedModel,
)

FULL_INPUT_HW = (150, 150)
CONV_CHANNELS = ((3, 32), (32, 32), (32, 64))
HIDDEN_UNITS = 64
LAYER_NAMES = ("conv1", "conv2", "conv3", "fc1", "fc2")
LOSS_KINDS = ("bce", "mse")


def shape_chain(input_hw) -> list[tuple]:
    """Activation shapes from the input through the output, raising on any dead end."""
    h, w = input_hw
    shapes = [(3, h, w)]
    for _, cout in CONV_CHANNELS:
        if h < 3 or w < 3:
            raise ShapeMismatch(f"spatial size {h}x{w} too small for a 3x3 valid convolution")
        h, w = h - 2, w - 2
        shapes.append((cout, h, w))
        if h < 2 or w < 2:
            raise ShapeMismatch(f"spatial size {h}x{w} too small for 2x2 pooling")
        h, w = h // 2, w // 2
        shapes.append((cout, h, w))
    shapes.append((CONV_CHANNELS[-1][1] * h * w,))
    shapes.append((HIDDEN_UNITS,))
    shapes.append((1,))
    return shapes


def expected_shapes(input_hw) -> dict[str, tuple]:
    flat = shape_chain(input_hw)[-3][0]
    shapes = {}
    for name, (cin, cout) in zip(LAYER_NAMES, CONV_CHANNELS):
        shapes[f"{name}.weight"] = (cout, cin, 3, 3)
        shapes[f"{name}.bias"] = (cout,)
    shapes["fc1.weight"] = (HIDDEN_UNITS, flat)
    shapes["fc1.bias"] = (HIDDEN_UNITS,)
    shapes["fc2.weight"] = (1, HIDDEN_UNITS)
    shapes["fc2.bias"] = (1,)
    return shapes


def min_input_size() -> int:
    n = 3
    while True:
        try:
            shape_chain((n, n))
            return n
        except ShapeMismatch:
            n += 1


@dataclass
class ConvLayer:
    weight: np.ndarray  # (K, C, 3, 3)
    bias: np.ndarray  # (K,)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class ModelParams:
    conv1: ConvLayer
    conv2: ConvLayer
    conv3: ConvLayer
    fc1: DenseLayer
    fc2: DenseLayer
    input_hw: tuple = FULL_INPUT_HW
    dropout_p: float = 0.5
    loss_kind: str = "bce"

    @classmethod
    def init(cls, input_hw=FULL_INPUT_HW, seed: int = 0, dropout_p: float = 0.5,
             loss_kind: str = "bce") -> "ModelParams":
        """Seeded He-uniform conv / Xavier-uniform dense weights, zero biases.

        Any ``input_hw`` that survives the three conv+pool stages is accepted;
        ``FULL_INPUT_HW`` gives the full-size network.
        """
        shapes = shape_chain(input_hw)
        rng = np.random.default_rng(seed)
        convs = []
        for cin, cout in CONV_CHANNELS:
            limit = np.sqrt(6.0 / (cin * 9))
            convs.append(ConvLayer(rng.uniform(-limit, limit, (cout, cin, 3, 3)), np.zeros(cout)))
        flat = shapes[-3][0]
        dense = []
        for n_in, n_out in ((flat, HIDDEN_UNITS), (HIDDEN_UNITS, 1)):
            limit = np.sqrt(6.0 / (n_in + n_out))
            dense.append(DenseLayer(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out)))
        params = cls(*convs, *dense, input_hw=tuple(input_hw), dropout_p=dropout_p, loss_kind=loss_kind)
        params.validate()
        return params

    def layers(self):
        return [(name, getattr(self, name)) for name in LAYER_NAMES]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, layer in self.layers():
            out.append((f"{name}.weight", layer.weight))
            out.append((f"{name}.bias", layer.bias))
        return out

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.tensors()]

    def copy(self) -> "ModelParams":
        clone = [type(layer)(layer.weight.copy(), layer.bias.copy()) for _, layer in self.layers()]
        return ModelParams(*clone, input_hw=self.input_hw, dropout_p=self.dropout_p, loss_kind=self.loss_kind)

    def zeros_like(self) -> "ModelParams":
        clone = [type(layer)(np.zeros_like(layer.weight), np.zeros_like(layer.bias)) for _, layer in self.layers()]
        return ModelParams(*clone, input_hw=self.input_hw, dropout_p=self.dropout_p, loss_kind=self.loss_kind)

    def expected_shapes(self) -> dict[str, tuple]:
        return expected_shapes(self.input_hw)

    def validate(self) -> None:
        expected = self.expected_shapes()
        for name, arr in self.tensors():
            if tuple(arr.shape) != expected[name]:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {expected[name]}")
        if not 0 <= self.dropout_p < 1:
            raise ShapeMismatch("dropout_p must lie in [0, 1)")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


# -- elementwise pieces ------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def flatten(x):
    return x.reshape(x.shape[0], -1)


def dense_forward(x, layer: DenseLayer):
    if x.shape[-1] != layer.weight.shape[1]:
        raise ShapeMismatch(f"dense input width {x.shape[-1]} != {layer.weight.shape[1]}")
    return x @ layer.weight.T + layer.bias


def dropout_forward(x, p: float, rng: np.random.Generator | None, mode: str = "train"):
    """Inverted dropout; returns ``(output, scaled_mask)`` (mask is None outside training)."""
    if mode != "train" or p == 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def loss(p, y, kind: str = "bce"):
    """Per-sample loss and its derivative with respect to ``p``."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-12, 1 - 1e-12)
    y = np.asarray(y, dtype=np.float64)
    if kind == "bce":
        value = -(y * np.log(p) + (1 - y) * np.log1p(-p))
        grad = -y / p + (1 - y) / (1 - p)
    elif kind == "mse":
        value = (p - y) ** 2
        grad = 2 * (p - y)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return value, grad


# -- forward / backward ------------------------------------------------------------

@dataclass
class ForwardCache:
    param_shapes: list
    conv_inputs: list = field(default_factory=list)
    relu_masks: list = field(default_factory=list)
    pool_args: list = field(default_factory=list)
    pool_in_hw: list = field(default_factory=list)
    pooled_shape: tuple = ()
    flat: np.ndarray | None = None
    hidden_mask: np.ndarray | None = None
    dropout_mask: np.ndarray | None = None
    hidden: np.ndarray | None = None
    prob: np.ndarray | None = None
    shapes: list = field(default_factory=list)


def model_forward(images, params: ModelParams, mode: str = "eval", rng: np.random.Generator | None = None):
    """Forward a single image ``(3, H, W)`` or a batch ``(N, 3, H, W)``.

    Returns ``(probability, cache)``; the cache is ``None`` in eval mode.
    A single image yields a float probability, a batch an ``(N,)`` array.
    """
    x = np.asarray(images, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    h, w = params.input_hw
    if x.ndim != 4 or x.shape[1:] != (3, h, w):
        raise ShapeMismatch(f"input shape {x.shape[1:] if x.ndim == 4 else x.shape} != {(3, h, w)}")
    train = mode == "train"
    cache = ForwardCache([a.shape for a in params.arrays()]) if train else None
    if train:
        cache.shapes.append(x.shape[1:])

    a = x
    for i, layer in enumerate((params.conv1, params.conv2, params.conv3)):
        z = kernels.conv_forward(a, layer.weight, layer.bias)
        r = relu(z)
        pooled, arg = kernels.maxpool_forward(r)
        if train:
            cache.conv_inputs.append(a)
            cache.relu_masks.append(z > 0)
            cache.pool_args.append(arg)
            cache.pool_in_hw.append(r.shape[2:])
            cache.shapes += [z.shape[1:], pooled.shape[1:]]
        a = pooled

    flat = flatten(a)
    z1 = dense_forward(flat, params.fc1)
    h1 = relu(z1)
    hd, mask = dropout_forward(h1, params.dropout_p, rng, mode)
    logit = dense_forward(hd, params.fc2)[:, 0]
    prob = sigmoid(logit)
    if train:
        cache.pooled_shape = a.shape
        cache.flat = flat
        cache.hidden_mask = z1 > 0
        cache.dropout_mask = mask
        cache.hidden = hd
        cache.prob = prob
        cache.shapes += [flat.shape[1:], z1.shape[1:], (1,)]
    return (float(prob[0]) if single else prob), cache


def model_backward(cache: ForwardCache, params: ModelParams, dprob) -> ModelParams:
    """Gradients of ``sum_n dprob[n] * prob[n]`` with respect to every parameter."""
    if cache is None or [a.shape for a in params.arrays()] != cache.param_shapes:
        raise StaleCache("forward cache does not match the current parameter shapes")
    dprob = np.asarray(dprob, dtype=np.float64).reshape(-1)
    prob = cache.prob
    if dprob.shape != prob.shape:
        raise ShapeMismatch(f"output gradient shape {dprob.shape} != {prob.shape}")
    grads = params.zeros_like()

    dlogit = dprob * prob * (1.0 - prob)  # (N,)
    grads.fc2.weight[...] = dlogit[None, :] @ cache.hidden
    grads.fc2.bias[...] = dlogit.sum()
    dh = dlogit[:, None] * params.fc2.weight  # (N, 64)
    if cache.dropout_mask is not None:
        dh = dh * cache.dropout_mask
    dh = dh * cache.hidden_mask
    grads.fc1.weight[...] = dh.T @ cache.flat
    grads.fc1.bias[...] = dh.sum(axis=0)
    da = (dh @ params.fc1.weight).reshape(cache.pooled_shape)

    convs = (params.conv1, params.conv2, params.conv3)
    gconvs = (grads.conv1, grads.conv2, grads.conv3)
    for i in (2, 1, 0):
        hh, ww = cache.pool_in_hw[i]
        dr = kernels.maxpool_backward(np.ascontiguousarray(da), cache.pool_args[i], hh, ww)
        dz = dr * cache.relu_masks[i]
        dx, dw, db = kernels.conv_backward(cache.conv_inputs[i], convs[i].weight, dz, i > 0)
        gconvs[i].weight[...] = dw
        gconvs[i].bias[...] = db
        da = dx
    return grads


# -- optimizers -------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    ps, gs = params.arrays(), grads.arrays()
    if len(state.m) != len(ps) or any(m.shape != p.shape for m, p in zip(state.m, ps)):
        raise ShapeMismatch("optimizer state does not match parameters")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeMismatch("gradient does not match parameter shape")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class SgdState:
    velocity: list

    @classmethod
    def zeros(cls, params: ModelParams) -> "SgdState":
        return cls([np.zeros_like(a) for a in params.arrays()])


def sgd_step(params: ModelParams, grads: ModelParams, state: SgdState, lr: float = 1e-2, momentum: float = 0.9):
    for p, g, vel in zip(params.arrays(), grads.arrays(), state.velocity):
        vel *= momentum
        vel -= lr * g
        p += vel
    return params, state


# -- weight files -------------------------------------------------------------------

MODEL_MAGIC = b"IATM"
MODEL_VERSION = 1
_META_INPUT = "meta.input_shape"
_META_DROPOUT = "meta.dropout_p"


def _entries(params: ModelParams):
    yield from params.tensors()
    h, w = params.input_hw
    yield _META_INPUT, np.array([3.0, h, w])
    yield _META_DROPOUT, np.array([params.dropout_p])


def save_model(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_model(params))


def dump_model(params: ModelParams) -> bytes:
    entries = list(_entries(params))
    out = [MODEL_MAGIC, struct.pack("<HBB", MODEL_VERSION, LOSS_KINDS.index(params.loss_kind), len(entries))]
    for name, arr in entries:
        raw = name.encode("ascii")
        out.append(struct.pack("<B", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def parse_model(data: bytes) -> ModelParams:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedModel(f"model file ends at byte {len(data)}, needed {pos + n}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MODEL_MAGIC:
        raise BadModelMagic("not an IATM model file")
    version, loss_idx, count = struct.unpack("<HBB", take(4))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if loss_idx >= len(LOSS_KINDS):
        raise ModelFormatError(f"unknown loss kind code {loss_idx}")
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<B", take(1))
        name = take(name_len).decode("ascii", errors="replace")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
        tensors[name] = arr
    if pos != len(data):
        raise ModelFormatError(f"{len(data) - pos} trailing bytes after last tensor")

    try:
        _, h, w = (int(v) for v in tensors[_META_INPUT])
        dropout_p = float(tensors[_META_DROPOUT][0])
    except (KeyError, ValueError) as exc:
        raise ShapeChainMismatch(f"missing or malformed metadata: {exc}") from None
    try:
        expected = expected_shapes((h, w))
    except ShapeMismatch as exc:
        raise ShapeChainMismatch(str(exc)) from None
    for name, shape in expected.items():
        if name not in tensors:
            raise ShapeChainMismatch(f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise ShapeChainMismatch(f"{name} has shape {tensors[name].shape}, chain requires {shape}")
    extra = set(tensors) - set(expected) - {_META_INPUT, _META_DROPOUT}
    if extra:
        raise ShapeChainMismatch(f"unexpected tensors {sorted(extra)}")
    layers = []
    for name in LAYER_NAMES:
        cls = ConvLayer if name.startswith("conv") else DenseLayer
        layers.append(cls(tensors[f"{name}.weight"].copy(), tensors[f"{name}.bias"].copy()))
    return ModelParams(*layers, input_hw=(h, w), dropout_p=dropout_p, loss_kind=LOSS_KINDS[loss_idx])
