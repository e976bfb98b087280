"""Feedforward layers with explicit forward/backward passes.

The model is a stack of affine layers with ReLU between them and an identity
output head feeding softmax cross-entropy. Backward passes are hand-derived;
there is no autodiff graph. A central finite-difference checker doubles as
the correctness oracle for the analytic gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DimensionError, Rng

# Gradients are keyed identically to model parameters: "w0", "b0", "w1", ...
GradientSet = dict


@dataclass
class AffineLayer:
    weights: np.ndarray  # fan_in x fan_out
    bias: np.ndarray  # fan_out

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError(
                f"affine layer needs rank-2 weights and rank-1 bias, got "
                f"{self.weights.shape} and {self.bias.shape}"
            )
        if self.weights.shape[1] != self.bias.shape[0]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} does not match fan_out "
                f"{self.weights.shape[1]}"
            )


@dataclass
class MlpModel:
    """Affine stack with ReLU on hidden layers and identity on the output."""

    layers: list
    dropout_rate: float = 0.0

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise DimensionError(
                    f"layer dims do not chain: fan_out {a.weights.shape[1]} "
                    f"feeds fan_in {b.weights.shape[0]}"
                )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"w{i}"] = layer.weights
            params[f"b{i}"] = layer.bias
        return params

    def set_parameters(self, params: dict) -> None:
        for i, layer in enumerate(self.layers):
            layer.weights = params[f"w{i}"]
            layer.bias = params[f"b{i}"]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]


@dataclass
class ForwardCache:
    """Everything mlp_backward needs to replay one forward pass exactly."""

    inputs: np.ndarray
    pre_activations: list = field(default_factory=list)
    layer_inputs: list = field(default_factory=list)
    dropout_masks: list = field(default_factory=list)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(upstream: np.ndarray, preactivation: np.ndarray) -> np.ndarray:
    """Mask upstream by (preactivation > 0); the derivative at 0 is 0."""
    if upstream.shape != preactivation.shape:
        raise DimensionError(
            f"relu_backward shapes differ: {upstream.shape} vs {preactivation.shape}"
        )
    return upstream * (preactivation > 0.0)


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """Loss and logit gradient for a single example.

    Computed with max-subtraction so large logits do not overflow.
    """
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} logits")
    shifted = logits - np.max(logits)
    log_z = np.log(np.sum(np.exp(shifted)))
    loss = float(log_z - shifted[label])
    grad = np.exp(shifted - log_z)
    grad[label] -= 1.0
    return loss, grad


def softmax_cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean loss over a batch and the gradient w.r.t. the logits.

    The returned gradient already carries the 1/batch factor, so feeding it
    to mlp_backward yields gradients of the mean loss.
    """
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels out of range for {c} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def dropout_forward(x: np.ndarray, rate: float, rng: Rng, training: bool):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    keep = rng.uniform(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def mlp_forward(model: MlpModel, batch: np.ndarray, rng: Rng | None = None,
                training: bool = False):
    """Run the stack on a batch (rows are examples); returns logits and cache."""
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise DimensionError(
            f"batch shape {batch.shape} does not feed input dim {model.input_dim}"
        )
    use_dropout = training and model.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout at train time needs an Rng")

    cache = ForwardCache(inputs=batch)
    a = batch
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        cache.layer_inputs.append(a)
        z = a @ layer.weights + layer.bias
        cache.pre_activations.append(z)
        if i == last:
            a = z
            cache.dropout_masks.append(None)
        else:
            h = relu(z)
            if use_dropout:
                h, mask = dropout_forward(h, model.dropout_rate, rng, training=True)
            else:
                mask = None
            cache.dropout_masks.append(mask)
            a = h
    return a, cache


def mlp_backward(model: MlpModel, cache: ForwardCache, grad_logits: np.ndarray) -> GradientSet:
    """Exact gradients w.r.t. every weight and bias, given dLoss/dLogits."""
    if len(cache.pre_activations) != len(model.layers):
        raise ValueError("cache does not match model: wrong number of layers")
    if grad_logits.shape != cache.pre_activations[-1].shape:
        raise DimensionError(
            f"grad_logits shape {grad_logits.shape} does not match logits "
            f"{cache.pre_activations[-1].shape}"
        )
    grads: GradientSet = {}
    dz = grad_logits
    for i in range(len(model.layers) - 1, -1, -1):
        a_in = cache.layer_inputs[i]
        grads[f"w{i}"] = a_in.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.layers[i].weights.T
            mask = cache.dropout_masks[i - 1]
            if mask is not None:
                da = da * mask
            dz = relu_backward(da, cache.pre_activations[i - 1])
    return grads


def mlp_loss(model: MlpModel, batch: np.ndarray, labels: np.ndarray) -> float:
    logits, _ = mlp_forward(model, batch, training=False)
    loss, _ = softmax_cross_entropy_batch(logits, labels)
    return loss


def random_check_model(rng: Rng, h: float = 1e-5):
    """Sample a small random (model, batch, labels) for gradient checking.

    Biases are nonzero so a dead layer cannot park pre-activations exactly
    on the ReLU kink, and any draw whose kink margin is within 100h of the
    kink is resampled; at the kink the loss is not differentiable and
    central differences would disagree with the (subgradient) analytic
    value.
    """
    while True:
        depth = 2 + int(rng.integers(3, size=1)[0])
        widths = [2 + int(v) for v in rng.integers(7, size=depth + 1)]
        layers = [
            AffineLayer(weights=rng.gaussian((widths[i], widths[i + 1]), stddev=0.5),
                        bias=rng.gaussian((widths[i + 1],), stddev=0.3))
            for i in range(depth)
        ]
        model = MlpModel(layers=layers)
        batch = rng.gaussian((4, widths[0]))
        labels = rng.integers(widths[-1], size=4)
        if kink_margin(model, batch) > 100.0 * h:
            return model, batch, labels


def kink_margin(model: MlpModel, batch: np.ndarray) -> float:
    """Smallest |hidden pre-activation| over the batch.

    Finite-difference checks are unreliable when a pre-activation sits
    within the probe step of the ReLU kink; callers should resample
    models whose margin is below ~100x the probe h.
    """
    _, cache = mlp_forward(model, batch, training=False)
    hidden = cache.pre_activations[:-1]
    if not hidden:
        return float("inf")
    return min(float(np.abs(z).min()) for z in hidden)


def gradient_check(model: MlpModel, batch: np.ndarray, labels: np.ndarray,
                   h: float = 1e-5) -> float:
    """Max over parameter tensors of the relative error between analytic
    and central-difference gradients, ||a - n|| / max(||a||, ||n||).

    The norm is taken per tensor rather than per element: loss differences
    carry ~1e-11 of float64 roundoff, which would swamp the ratio on
    near-zero elements while being invisible against the tensor norm.
    Intended for small models only.
    """
    logits, cache = mlp_forward(model, batch, training=False)
    _, grad_logits = softmax_cross_entropy_batch(logits, labels)
    analytic = mlp_backward(model, cache, grad_logits)

    worst = 0.0
    for name, param in model.parameters().items():
        flat = param.reshape(-1)
        numeric = np.empty_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = mlp_loss(model, batch, labels)
            flat[j] = orig - h
            down = mlp_loss(model, batch, labels)
            flat[j] = orig
            numeric[j] = (up - down) / (2.0 * h)
        a_flat = analytic[name].reshape(-1)
        denom = max(np.linalg.norm(a_flat), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(a_flat - numeric)) / denom)
    return worst


def accuracy(model: MlpModel, inputs: np.ndarray, labels: np.ndarray,
             batch_size: int = 1000) -> float:
    """Fraction of argmax predictions matching labels, dropout disabled."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy over an empty dataset is undefined")
    hits = 0
    for start in range(0, len(labels), batch_size):
        chunk = inputs[start:start + batch_size]
        logits, _ = mlp_forward(model, chunk, training=False)
        hits += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(labels)
