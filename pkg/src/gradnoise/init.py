"""Weight initialization schemes for deep ReLU stacks.

Four schemes: a deliberately crude fixed-stddev Gaussian ("simple"), the
all-zeros pathological start ("zero"), and two analytically derived ReLU
initializations ("he" and "sussillo"). Biases always start at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .tensor_core import Rng, gaussian_tensor
from .nn import AffineLayer

SCHEME_NAMES = ("simple", "zero", "he", "sussillo")


@dataclass
class InitScheme:
    variant: str
    stddev: float = 0.1  # used by "simple" only

    def __post_init__(self):
        if self.variant not in SCHEME_NAMES:
            raise ValueError(
                f"unknown init scheme {self.variant!r}, expected one of {SCHEME_NAMES}"
            )


def scheme_from_name(name: str) -> InitScheme:
    return InitScheme(variant=name)


def sussillo_gain(depth: int) -> float:
    """Depth-dependent gain for the random-walk ReLU initialization."""
    return math.sqrt(2.0) * math.exp(1.2 / (max(depth, 6) - 2.4))


def initialize(scheme: InitScheme, model_dims, rng: Rng) -> list:
    """Build affine layers for a chain of (fan_in, fan_out) dims."""
    model_dims = list(model_dims)
    if not model_dims:
        raise ValueError("model_dims must not be empty")
    for (_, out_a), (in_b, _) in zip(model_dims, model_dims[1:]):
        if out_a != in_b:
            raise ValueError(f"dims do not chain: fan_out {out_a} feeds fan_in {in_b}")

    depth = len(model_dims)
    layers = []
    for fan_in, fan_out in model_dims:
        if scheme.variant == "simple":
            w = gaussian_tensor(rng, (fan_in, fan_out), 0.0, scheme.stddev)
        elif scheme.variant == "zero":
            w = gaussian_tensor(rng, (fan_in, fan_out), 0.0, 0.0)
        elif scheme.variant == "he":
            w = gaussian_tensor(rng, (fan_in, fan_out), 0.0, math.sqrt(2.0 / fan_in))
        else:  # sussillo
            w = gaussian_tensor(
                rng, (fan_in, fan_out), 0.0, sussillo_gain(depth) / math.sqrt(fan_in)
            )
        b = gaussian_tensor(rng, (fan_out,), 0.0, 0.0)
        layers.append(AffineLayer(weights=w, bias=b))
    return layers
