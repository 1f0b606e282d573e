"""Pixel-space style transfer over a fixed-weight convolutional stack.

A generated image starts as seeded noise and descends the combined
objective: a quadratic penalty on content-layer activations against the
subject image plus Gram-matrix discrepancies against the reference image
across the style layers. Gradients are exact reverse-mode derivatives;
the step size backtracks (halving on any increase), which makes the
recorded loss trajectory non-increasing by construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import convnet
from .convnet import FeatureNetwork
from .image import Image

_MAX_HALVINGS = 20


class NonFiniteLossError(RuntimeError):
    """Raised when the objective stops being finite; carries the last finite loss."""

    def __init__(self, message, last_finite_loss=None):
        super().__init__(message)
        self.last_finite_loss = last_finite_loss


@dataclass(frozen=True)
class StyleConfig:
    content_layer: int | None = None  # default: deepest convolution layer
    style_layers: tuple | None = None  # default: every convolution layer
    layer_weights: tuple | None = None  # default: uniform 1/len(style_layers)
    alpha: float = 1.0
    beta: float = 1000.0
    step_size: float = 1.0
    iterations: int = 100
    init_seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    def resolve(self, net: FeatureNetwork):
        """Concretize layer choices against a network; returns (content, styles, weights)."""
        convs = net.conv_layer_ids()
        content = self.content_layer if self.content_layer is not None else convs[-1]
        styles = tuple(self.style_layers) if self.style_layers is not None else tuple(convs)
        if not styles:
            raise ValueError("at least one style layer is required")
        if self.layer_weights is None:
            weights = tuple(1.0 / len(styles) for _ in styles)
        else:
            weights = tuple(float(w) for w in self.layer_weights)
        if len(weights) != len(styles):
            raise ValueError("layer_weights length must match style_layers")
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("layer weights must be nonnegative with positive sum")
        n_layers = len(net.layers)
        for lid in (content, *styles):
            if not 0 <= lid < n_layers:
                raise ValueError(f"layer id {lid} not present in network")
        return content, styles, weights


class FeatureMapStack:
    """Selected-layer activations flattened to (map count, spatial size) matrices."""

    def __init__(self, features, spatial):
        self._features = dict(features)  # layer id -> (N_l, M_l) matrix
        self._spatial = dict(spatial)  # layer id -> (h, w)

    @classmethod
    def from_outputs(cls, outputs, layer_ids):
        feats, spatial = {}, {}
        for lid in layer_ids:
            if not 0 <= lid < len(outputs):
                raise ValueError(f"layer id {lid} not present")
            act = outputs[lid]
            feats[lid] = act.reshape(act.shape[0], -1)
            spatial[lid] = act.shape[1:]
        return cls(feats, spatial)

    def layer_ids(self):
        return sorted(self._features)

    def feature(self, lid) -> np.ndarray:
        if lid not in self._features:
            raise KeyError(f"layer {lid} not in stack")
        return self._features[lid]

    def map_count(self, lid) -> int:
        return self.feature(lid).shape[0]

    def map_size(self, lid) -> int:
        return self.feature(lid).shape[1]

    def spatial(self, lid):
        return self._spatial[lid]


def extract_features(net: FeatureNetwork, img, layer_ids) -> FeatureMapStack:
    """Forward pass retaining the requested layers."""
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    outputs, _ = convnet.forward(net, data)
    return FeatureMapStack.from_outputs(outputs, layer_ids)


def gram(stack: FeatureMapStack, lid) -> np.ndarray:
    """Inner products between the vectorized feature maps of one layer."""
    f = stack.feature(lid)
    return f @ f.T


def content_loss(f_stack: FeatureMapStack, p_stack: FeatureMapStack, lid) -> float:
    f = f_stack.feature(lid)
    p = p_stack.feature(lid)
    if f.shape != p.shape:
        raise ValueError(f"layer {lid}: shape mismatch {f.shape} vs {p.shape}")
    d = f - p
    return 0.5 * float(np.sum(d * d))


def style_layer_loss(g: np.ndarray, a: np.ndarray, n_maps: int, m_size: int) -> float:
    if g.shape != a.shape:
        raise ValueError(f"gram side mismatch {g.shape} vs {a.shape}")
    d = g - a
    return float(np.sum(d * d)) / (4.0 * n_maps**2 * m_size**2)


def style_loss(x_stack: FeatureMapStack, r_stack: FeatureMapStack, net, config) -> float:
    _, styles, weights = config.resolve(net)
    total = 0.0
    for lid, w in zip(styles, weights):
        gx = gram(x_stack, lid)
        gr = gram(r_stack, lid)
        total += w * style_layer_loss(gx, gr, x_stack.map_count(lid), x_stack.map_size(lid))
    return total


class StyleObjective:
    """Total objective with subject/reference statistics precomputed once."""

    def __init__(self, net: FeatureNetwork, subject: Image, reference: Image, config: StyleConfig):
        self.net = net
        self.config = config
        self.content_layer, self.style_layers, self.weights = config.resolve(net)
        needed = {self.content_layer, *self.style_layers}
        self._p_stack = extract_features(net, subject, needed)
        r_stack = extract_features(net, reference, needed)
        self._a_grams = {lid: gram(r_stack, lid) for lid in self.style_layers}

    def _losses(self, outputs):
        stack = FeatureMapStack.from_outputs(outputs, {self.content_layer, *self.style_layers})
        c_loss = content_loss(stack, self._p_stack, self.content_layer)
        s_loss = 0.0
        per_layer = {}
        for lid, w in zip(self.style_layers, self.weights):
            g = gram(stack, lid)
            per_layer[lid] = g
            s_loss += w * style_layer_loss(
                g, self._a_grams[lid], stack.map_count(lid), stack.map_size(lid)
            )
        return stack, c_loss, s_loss, per_layer

    def loss(self, x: np.ndarray) -> float:
        outputs, _ = convnet.forward(self.net, x)
        _, c_loss, s_loss, _ = self._losses(outputs)
        return self.config.alpha * c_loss + self.config.beta * s_loss

    def loss_and_grad(self, x: np.ndarray):
        outputs, caches = convnet.forward(self.net, x)
        stack, c_loss, s_loss, grams = self._losses(outputs)
        total = self.config.alpha * c_loss + self.config.beta * s_loss

        inject = {}
        if self.config.alpha > 0:
            f = stack.feature(self.content_layer)
            p = self._p_stack.feature(self.content_layer)
            gc = self.config.alpha * (f - p)
            shape = (stack.map_count(self.content_layer), *stack.spatial(self.content_layer))
            inject[self.content_layer] = gc.reshape(shape)
        if self.config.beta > 0:
            for lid, w in zip(self.style_layers, self.weights):
                n, m = stack.map_count(lid), stack.map_size(lid)
                gmat = (grams[lid] - self._a_grams[lid]) @ stack.feature(lid)
                gs = (self.config.beta * w / (n**2 * m**2)) * gmat
                prev = inject.get(lid)
                gs = gs.reshape(n, *stack.spatial(lid))
                inject[lid] = gs if prev is None else prev + gs
        if not inject:
            return total, np.zeros_like(x)
        return total, convnet.backward_to_input(self.net, caches, inject)


def total_loss(x: Image, subject: Image, reference: Image, net, config) -> float:
    """alpha * content discrepancy + beta * weighted Gram discrepancies."""
    return StyleObjective(net, subject, reference, config).loss(x.data)


def grad_total_loss(x: Image, subject: Image, reference: Image, net, config) -> np.ndarray:
    """Exact derivative of total_loss with respect to every pixel of x."""
    _, g = StyleObjective(net, subject, reference, config).loss_and_grad(x.data)
    return g


@dataclass(frozen=True)
class StyleTransferResult:
    image: Image
    loss_trajectory: np.ndarray  # length iterations + 1, non-increasing
    step_sizes: np.ndarray


def neural_style_transfer(
    subject: Image, reference: Image, net: FeatureNetwork, config: StyleConfig
) -> StyleTransferResult:
    """Descend the combined objective from seeded noise; returns the clamped result."""
    rng = np.random.default_rng(config.init_seed)
    x = np.clip(0.5 + 0.1 * rng.standard_normal(subject.data.shape), 0.0, 1.0)
    if config.iterations == 0:
        return StyleTransferResult(Image(x), np.array([]), np.array([]))

    objective = StyleObjective(net, subject, reference, config)
    loss, grad = objective.loss_and_grad(x)
    if not math.isfinite(loss):
        raise NonFiniteLossError("initial loss is not finite", last_finite_loss=None)

    trajectory = [loss]
    steps = []
    step = config.step_size
    for _ in range(config.iterations):
        accepted = False
        for halving in range(_MAX_HALVINGS + 1):
            cand = x - step * grad
            cand_loss = objective.loss(cand)
            if math.isfinite(cand_loss) and cand_loss <= loss:
                accepted = True
                break
            step *= 0.5
        if accepted:
            x = cand
            loss, grad = objective.loss_and_grad(x)
            if halving == 0:
                step *= 1.3  # cheap recovery after a clean step
        if not math.isfinite(loss):
            raise NonFiniteLossError(
                f"loss diverged; last finite loss {trajectory[-1]:.6g}",
                last_finite_loss=trajectory[-1],
            )
        trajectory.append(loss)
        steps.append(step)
    return StyleTransferResult(
        Image(np.clip(x, 0.0, 1.0)), np.asarray(trajectory), np.asarray(steps)
    )
