"""Training-step pipeline: clip, inject annealed Gaussian noise, update.

The central piece is the noise schedule: at step t the injected noise is
zero-mean Gaussian with variance eta / (1 + t)^gamma, so early steps get
large kicks and the noise anneals away as training proceeds. A fixed-stddev
variant and an off switch share the same interface. The default pipeline
order clips first and adds noise to the clipped gradient; the reverse order
is available for ablations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import Rng, global_norm

CLIP_THEN_NOISE = "clip_then_noise"
NOISE_THEN_CLIP = "noise_then_clip"
PIPELINE_ORDERS = (CLIP_THEN_NOISE, NOISE_THEN_CLIP)


@dataclass
class NoiseSchedule:
    mode: str = "off"  # "annealed" | "fixed" | "off"
    eta: float = 0.01
    gamma: float = 0.55
    fixed_stddev: float = 0.001

    def __post_init__(self):
        if self.mode not in ("annealed", "fixed", "off"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.mode == "annealed":
            if self.eta <= 0:
                raise ValueError("annealed noise needs eta > 0")
            if self.gamma < 0:
                raise ValueError("annealed noise needs gamma >= 0")
        if self.mode == "fixed" and self.fixed_stddev < 0:
            raise ValueError("fixed noise needs fixed_stddev >= 0")


def noise_stddev(schedule: NoiseSchedule, t: int) -> float:
    """Noise stddev at step t: sqrt(eta / (1 + t)^gamma) when annealed."""
    if t < 0:
        raise ValueError("step index must be >= 0")
    if schedule.mode == "off":
        return 0.0
    if schedule.mode == "fixed":
        return schedule.fixed_stddev
    return math.sqrt(schedule.eta / (1.0 + t) ** schedule.gamma)


def inject_noise(grads: dict, stddev: float, rng: Rng) -> dict:
    """Add independent N(0, stddev^2) to every gradient element."""
    if stddev < 0:
        raise ValueError(f"stddev must be >= 0, got {stddev}")
    if stddev == 0.0:
        return grads
    return {name: g + rng.gaussian(g.shape, 0.0, stddev) for name, g in grads.items()}


@dataclass
class ClipConfig:
    threshold: float | None = None

    def __post_init__(self):
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError(f"clip threshold must be > 0, got {self.threshold}")


def clip_global_norm(grads: dict, config: ClipConfig):
    """Scale the whole gradient set so its joint L2 norm fits the threshold.

    Returns (gradients, pre_clip_norm). Direction is preserved; a missing
    threshold makes this a no-op.
    """
    pre_norm = global_norm(grads.values())
    if config.threshold is None or pre_norm <= config.threshold:
        return grads, pre_norm
    scale = config.threshold / pre_norm
    return {name: g * scale for name, g in grads.items()}, pre_norm


@dataclass
class OptimizerState:
    kind: str = "sgd"  # "sgd" | "adam"
    learning_rate: float = 0.1
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def sgd_step(params: dict, grads: dict, lr: float) -> None:
    """Plain p <- p - lr * g, in place."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        p -= lr * g


def adam_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """Bias-corrected first/second-moment update, in place."""
    if state.kind != "adam":
        raise ValueError("adam_step needs an adam OptimizerState")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    lr = state.learning_rate
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    state.t = t


@dataclass
class StepDiagnostics:
    step: int
    pre_clip_norm: float
    post_clip_norm: float
    sigma: float

    def csv_row(self) -> str:
        return f"{self.step},{self.pre_clip_norm:.12g},{self.post_clip_norm:.12g},{self.sigma:.12g}"


def apply_step(params: dict, grads: dict, state: OptimizerState,
               clip: ClipConfig, noise: NoiseSchedule, rng: Rng,
               order: str = CLIP_THEN_NOISE) -> StepDiagnostics:
    """One full update: clip and noise in the configured order, then step.

    The step index used for the noise stddev is the number of updates already
    applied, so the first update draws noise at t = 0.
    """
    if order not in PIPELINE_ORDERS:
        raise ValueError(f"unknown pipeline order {order!r}")
    t = state.t
    sigma = noise_stddev(noise, t)
    if order == CLIP_THEN_NOISE:
        grads, pre_norm = clip_global_norm(grads, clip)
        post_norm = global_norm(grads.values())
        grads = inject_noise(grads, sigma, rng)
    else:
        grads = inject_noise(grads, sigma, rng)
        grads, pre_norm = clip_global_norm(grads, clip)
        post_norm = global_norm(grads.values())
    if state.kind == "sgd":
        sgd_step(params, grads, state.learning_rate)
        state.t += 1
    else:
        adam_step(params, grads, state)
    return StepDiagnostics(step=t, pre_clip_norm=pre_norm,
                           post_clip_norm=post_norm, sigma=sigma)
