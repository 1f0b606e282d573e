"""Fixed-weight convolutional stacks: forward pass, exact input gradients, file I/O.

Layers are convolutions (stride 1, same-size zero padding, odd kernels),
rectifiers, and 2x2 stride-2 pools (max or average; border windows clip).
Weights are immutable after load; only gradients with respect to the
input image are ever needed.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels

_MAGIC = b"FNET"
_KIND_CONV, _KIND_RELU, _KIND_POOL = 1, 2, 3
_POOL_MODES = {"max": 1, "avg": 2}
_POOL_NAMES = {v: k for k, v in _POOL_MODES.items()}


@dataclass(frozen=True)
class Conv:
    weight: np.ndarray  # (out_maps, in_maps, kh, kw)
    bias: np.ndarray  # (out_maps,)


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Pool:
    mode: str = "max"


class FeatureNetwork:
    """Immutable layer stack with optional fixed input size."""

    def __init__(self, layers, input_size=None):
        layers = tuple(layers)
        channels = None
        has_conv = False
        for i, layer in enumerate(layers):
            if isinstance(layer, Conv):
                has_conv = True
                w = np.asarray(layer.weight, dtype=np.float64)
                b = np.asarray(layer.bias, dtype=np.float64)
                if w.ndim != 4 or b.shape != (w.shape[0],):
                    raise ValueError(f"layer {i}: malformed convolution weights")
                if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
                    raise ValueError(f"layer {i}: kernel dimensions must be odd")
                if not (np.isfinite(w).all() and np.isfinite(b).all()):
                    raise ValueError(f"layer {i}: non-finite weights")
                if channels is not None and w.shape[1] != channels:
                    raise ValueError(
                        f"layer {i}: expects {w.shape[1]} input maps, previous layer emits {channels}"
                    )
                channels = w.shape[0]
            elif isinstance(layer, Pool):
                if layer.mode not in _POOL_MODES:
                    raise ValueError(f"layer {i}: unknown pool mode {layer.mode!r}")
            elif not isinstance(layer, Relu):
                raise TypeError(f"layer {i}: unknown layer type {type(layer).__name__}")
        if not has_conv:
            raise ValueError("network needs at least one convolution layer")
        self.layers = layers
        self.input_size = tuple(input_size) if input_size is not None else None

    @property
    def in_channels(self) -> int:
        for layer in self.layers:
            if isinstance(layer, Conv):
                return layer.weight.shape[1]
        raise AssertionError("unreachable")

    def conv_layer_ids(self):
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Conv)]


def _pool_forward(x, mode):
    c, h, w = x.shape
    oh, ow = -(-h // 2), -(-w // 2)
    if mode == "max":
        xp = np.full((c, oh * 2, ow * 2), -np.inf)
        xp[:, :h, :w] = x
        blocks = (xp[:, 0::2, 0::2], xp[:, 0::2, 1::2], xp[:, 1::2, 0::2], xp[:, 1::2, 1::2])
        y = np.maximum.reduce(blocks)
        return y, ("max", blocks, y, (h, w))
    xp = np.zeros((c, oh * 2, ow * 2))
    xp[:, :h, :w] = x
    cnt = np.zeros((oh * 2, ow * 2))
    cnt[:h, :w] = 1.0
    counts = cnt[0::2, 0::2] + cnt[0::2, 1::2] + cnt[1::2, 0::2] + cnt[1::2, 1::2]
    y = (xp[:, 0::2, 0::2] + xp[:, 0::2, 1::2] + xp[:, 1::2, 0::2] + xp[:, 1::2, 1::2]) / counts
    return y, ("avg", counts, (h, w))


def _pool_backward(cache, g):
    if cache[0] == "max":
        _, blocks, y, (h, w) = cache
        c = g.shape[0]
        gp = np.zeros((c, y.shape[1] * 2, y.shape[2] * 2))
        taken = np.zeros(y.shape, dtype=bool)
        views = (gp[:, 0::2, 0::2], gp[:, 0::2, 1::2], gp[:, 1::2, 0::2], gp[:, 1::2, 1::2])
        for block, view in zip(blocks, views):
            mask = (block == y) & ~taken  # first maximum in row-major window order
            view[mask] = g[mask]
            taken |= mask
        return gp[:, :h, :w]
    _, counts, (h, w) = cache
    c = g.shape[0]
    gd = g / counts
    gp = np.zeros((c, counts.shape[0] * 2, counts.shape[1] * 2))
    for view in (gp[:, 0::2, 0::2], gp[:, 0::2, 1::2], gp[:, 1::2, 0::2], gp[:, 1::2, 1::2]):
        view[...] = gd
    return gp[:, :h, :w]


def forward(net: FeatureNetwork, x: np.ndarray):
    """Run the stack on a (c, h, w) array; returns (per-layer outputs, caches)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != net.in_channels:
        raise ValueError(f"input shape {x.shape} does not match network ({net.in_channels} maps)")
    if net.input_size is not None and x.shape[1:] != net.input_size:
        raise ValueError(
            f"input {x.shape[1]}x{x.shape[2]} does not match required {net.input_size}"
        )
    outputs, caches = [], []
    cur = x
    for layer in net.layers:
        if isinstance(layer, Conv):
            cur = _kernels.conv2d_forward(cur, layer.weight, layer.bias)
            caches.append(None)
        elif isinstance(layer, Relu):
            caches.append(cur)  # pre-activation
            cur = np.maximum(cur, 0.0)
        else:
            cur, cache = _pool_forward(cur, layer.mode)
            caches.append(cache)
        outputs.append(cur)
    return outputs, caches


def backward_to_input(net: FeatureNetwork, caches, inject: dict) -> np.ndarray:
    """Backpropagate injected per-layer output gradients down to the input image.

    inject maps layer index -> dL/d(output of that layer). Rectifier
    subgradient at exactly zero pre-activation is zero.
    """
    if not inject:
        raise ValueError("no gradients to propagate")
    last = max(inject)
    g = np.zeros_like(inject[last])
    for i in range(last, -1, -1):
        if i in inject:
            g = g + inject[i]
        layer = net.layers[i]
        if isinstance(layer, Conv):
            g = _kernels.conv2d_backward_input(g, layer.weight)
        elif isinstance(layer, Relu):
            g = g * (caches[i] > 0.0)
        else:
            g = _pool_backward(caches[i], g)
    return g


def builtin_network(in_channels: int = 3, seed: int = 7) -> FeatureNetwork:
    """Seeded random-weight stack for tests and offline experiments.

    conv(in->8) / relu / maxpool / conv(8->16) / relu / maxpool; accepts
    any input size.
    """
    rng = np.random.default_rng(seed)

    def conv(out_maps, in_maps):
        scale = np.sqrt(2.0 / (in_maps * 9))
        w = rng.standard_normal((out_maps, in_maps, 3, 3)) * scale
        b = rng.standard_normal(out_maps) * 0.01
        return Conv(weight=w, bias=b)

    return FeatureNetwork(
        [conv(8, in_channels), Relu(), Pool("max"), conv(16, 8), Relu(), Pool("max")]
    )


def network_to_bytes(net: FeatureNetwork) -> bytes:
    parts = [_MAGIC, struct.pack("<I", 1)]
    if net.input_size is None:
        parts.append(struct.pack("<II", 0, 0))
    else:
        parts.append(struct.pack("<II", net.input_size[0], net.input_size[1]))
    parts.append(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        if isinstance(layer, Conv):
            o, c, kh, kw = layer.weight.shape
            parts.append(struct.pack("<BIIII", _KIND_CONV, o, c, kh, kw))
            parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
        elif isinstance(layer, Relu):
            parts.append(struct.pack("<B", _KIND_RELU))
        else:
            parts.append(struct.pack("<BB", _KIND_POOL, _POOL_MODES[layer.mode]))
    return b"".join(parts)


def save_network(net: FeatureNetwork, path) -> None:
    from ._util import atomic_write_bytes

    atomic_write_bytes(path, network_to_bytes(net))


def network_from_bytes(blob: bytes) -> FeatureNetwork:
    if blob[:4] != _MAGIC:
        raise ValueError("not a feature-network file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != 1:
        raise ValueError(f"unsupported network file version {version}")
    in_h, in_w = struct.unpack_from("<II", blob, 8)
    (n_layers,) = struct.unpack_from("<I", blob, 16)
    off = 20
    layers = []
    for _ in range(n_layers):
        (kind,) = struct.unpack_from("<B", blob, off)
        off += 1
        if kind == _KIND_CONV:
            o, c, kh, kw = struct.unpack_from("<IIII", blob, off)
            off += 16
            count = o * c * kh * kw
            w = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(o, c, kh, kw)
            off += count * 8
            b = np.frombuffer(blob, dtype="<f8", count=o, offset=off)
            off += o * 8
            layers.append(Conv(weight=w.copy(), bias=b.copy()))
        elif kind == _KIND_RELU:
            layers.append(Relu())
        elif kind == _KIND_POOL:
            (mode,) = struct.unpack_from("<B", blob, off)
            off += 1
            if mode not in _POOL_NAMES:
                raise ValueError(f"unknown pool mode code {mode}")
            layers.append(Pool(_POOL_NAMES[mode]))
        else:
            raise ValueError(f"unknown layer kind code {kind}")
    input_size = None if in_h == 0 else (in_h, in_w)
    return FeatureNetwork(layers, input_size=input_size)


def load_network(path) -> FeatureNetwork:
    with open(path, "rb") as fh:
        return network_from_bytes(fh.read())
