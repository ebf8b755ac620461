"""Adam, one independent instance per network namespace."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import ParamStore

DEFAULT_LRS = {"enc": 0.001, "gen": 0.001, "dis": 0.0002, "rec": 0.0002}
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    lr: float
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    t: int = 0
    grad_clip: float | None = None
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(store: ParamStore, namespace: str, lr: float,
              grad_clip: float | None = None) -> AdamState:
    state = AdamState(lr=lr, grad_clip=grad_clip)
    for name in store.names(namespace):
        p = store.param(name)
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def make_optimizers(store: ParamStore, overrides: dict | None = None) -> dict[str, AdamState]:
    """Four Adam instances; overrides accepts lr_enc/... and grad_clip keys."""
    overrides = dict(overrides or {})
    clip = overrides.pop("grad_clip", None)
    lrs = dict(DEFAULT_LRS)
    for net in list(lrs):
        key = f"lr_{net}"
        if key in overrides:
            lrs[net] = float(overrides.pop(key))
    if overrides:
        raise ValueError(f"unknown optimizer overrides: {sorted(overrides)}")
    return {net: init_adam(store, f"{net}/", lr, clip) for net, lr in lrs.items()}


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One update over exactly the namespace's parameters, in place.

    Rejects (without mutating anything) when a gradient is missing,
    unexpected, or non-finite.
    """
    expected = set(state.m)
    got = set(grads)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise ValueError(f"gradient keys mismatch: missing {missing}, unexpected {extra}")
    for name in sorted(grads):
        if not np.all(np.isfinite(grads[name])):
            raise ValueError(f"non-finite gradient for parameter {name!r}; step rejected")

    if state.grad_clip is not None:
        total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum())
                              for g in grads.values()))
        if total > state.grad_clip:
            scale = state.grad_clip / total
            grads = {n: g * scale for n, g in grads.items()}

    state.t += 1
    b1t = 1.0 - state.beta1 ** state.t
    b2t = 1.0 - state.beta2 ** state.t
    for name in sorted(grads):
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        mhat = m / b1t
        vhat = v / b2t
        p = store.param(name)
        store.set_param(name, p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
