"""Adam with bias correction and the inverse-square-root warmup schedule."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError, ShapeError


def noam_lr(step, d_model, warmup_steps, peak_lr=0.001):
    """scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5), scaled to peak at ``warmup_steps``."""
    if step < 1:
        raise ParameterError(f"noam_lr step must be >= 1, got {step}")
    if warmup_steps < 1:
        raise ParameterError(f"warmup_steps must be >= 1, got {warmup_steps}")
    scale = peak_lr * math.sqrt(d_model) * math.sqrt(warmup_steps)
    return scale * d_model ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of the arrays in ``params``; returns the updated ``state``."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state:
        state.update(t=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=0.0):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip_norm = clip_norm
        self.state = {}

    def step(self, lr):
        grads = [p.grad for p in self.params]
        if self.clip_norm > 0:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads if g is not None))
            if norm > self.clip_norm:
                grads = [None if g is None else g * (self.clip_norm / norm) for g in grads]
        adam_step([p.data for p in self.params], grads, self.state, lr, self.beta1, self.beta2, self.eps)
