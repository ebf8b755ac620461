"""Parameterized layers over the tape: dense, conv, deconv, batchnorm.

A ParamStore owns named parameter arrays plus persistent per-layer state
(batch-norm running statistics). Layer forwards bind parameters onto the
input Var's tape by name, so one backward pass yields gradients per name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Var

INIT_STD = 0.02
BN_MOMENTUM = 0.9
BN_EPS = 1e-5

LAYER_KINDS = ("dense", "conv", "deconv", "batchnorm", "activation")
NETWORK_NAMESPACES = ("enc/", "gen/", "dis/", "rec/")


@dataclass(frozen=True)
class LayerSpec:
    """One network row: a main op plus optional fused batchnorm/activation."""

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    batchnorm: bool = False
    activation: Optional[str] = None
    alpha: float = 0.2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv", "deconv") and (self.in_dim <= 0 or self.out_dim <= 0):
            raise ValueError(f"{self.kind} layer needs positive dims, got "
                             f"{self.in_dim}->{self.out_dim}")
        if self.kind in ("conv", "deconv") and self.kernel <= 0:
            raise ValueError(f"{self.kind} layer needs a positive kernel size")
        if self.kind == "batchnorm" and self.out_dim <= 0:
            raise ValueError("standalone batchnorm needs out_dim (channel count)")
        if self.kind == "activation" and not self.activation:
            raise ValueError("activation layer needs an activation kind")


class ParamStore:
    """Named tensors with deterministic (lexicographic) iteration order."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._state: dict[str, np.ndarray] = {}

    def add_param(self, name: str, value: np.ndarray) -> None:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._params[name] = value

    def add_state(self, name: str, value: np.ndarray) -> None:
        if name in self._state:
            raise ValueError(f"duplicate state name {name!r}")
        self._state[name] = value

    def param(self, name: str) -> np.ndarray:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"missing parameter {name!r}") from None

    def state(self, name: str) -> np.ndarray:
        try:
            return self._state[name]
        except KeyError:
            raise KeyError(f"missing state {name!r}") from None

    def set_param(self, name: str, value: np.ndarray) -> None:
        self.param(name)
        self._params[name] = value

    def set_state(self, name: str, value: np.ndarray) -> None:
        self.state(name)
        self._state[name] = value

    def names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._params if n.startswith(prefix))

    def state_names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._state if n.startswith(prefix))

    def param_count(self, prefix: str = "") -> int:
        return sum(self._params[n].size for n in self.names(prefix))

    def copy(self) -> "ParamStore":
        out = ParamStore()
        out._params = {k: v.copy() for k, v in self._params.items()}
        out._state = {k: v.copy() for k, v in self._state.items()}
        return out


def _truncated_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    """N(0, std^2) truncated at +-2 std, by redrawing out-of-range samples."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def layer_name(namespace: str, index: int, kind: str) -> str:
    return f"{namespace}{index:02d}_{kind}"


def init_params(specs: list[LayerSpec], seed, namespace: str = "",
                dtype=np.float32, store: Optional[ParamStore] = None) -> ParamStore:
    """Weights ~ N(0, 0.02^2) truncated at 2 sigma; biases zero; BN identity."""
    store = store if store is not None else ParamStore()
    rng = np.random.default_rng(seed)
    for i, spec in enumerate(specs):
        base = layer_name(namespace, i, spec.kind)
        if spec.kind == "dense":
            store.add_param(f"{base}/w",
                            _truncated_normal(rng, (spec.in_dim, spec.out_dim), INIT_STD, dtype))
            store.add_param(f"{base}/b", np.zeros(spec.out_dim, dtype))
        elif spec.kind == "conv":
            shape = (spec.out_dim, spec.in_dim, spec.kernel, spec.kernel)
            store.add_param(f"{base}/w", _truncated_normal(rng, shape, INIT_STD, dtype))
            store.add_param(f"{base}/b", np.zeros(spec.out_dim, dtype))
        elif spec.kind == "deconv":
            shape = (spec.in_dim, spec.out_dim, spec.kernel, spec.kernel)
            store.add_param(f"{base}/w", _truncated_normal(rng, shape, INIT_STD, dtype))
            store.add_param(f"{base}/b", np.zeros(spec.out_dim, dtype))
        if spec.batchnorm or spec.kind == "batchnorm":
            ch = spec.out_dim
            store.add_param(f"{base}/bn_scale", np.ones(ch, dtype))
            store.add_param(f"{base}/bn_shift", np.zeros(ch, dtype))
            store.add_state(f"{base}/bn_mean", np.zeros(ch, dtype))
            store.add_state(f"{base}/bn_var", np.ones(ch, dtype))
    return store


def dense_forward(x: Var, store: ParamStore, name: str) -> Var:
    """x @ w + b; 4-d inputs are flattened to [B, -1] first."""
    w = x.tape.param(f"{name}/w", store.param(f"{name}/w"))
    b = x.tape.param(f"{name}/b", store.param(f"{name}/b"))
    if len(x.shape) > 2:
        x = T.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
    return T.add(T.matmul(x, w), b)


def batchnorm_forward(x: Var, store: ParamStore, name: str, mode: str,
                      momentum: float = BN_MOMENTUM, eps: float = BN_EPS,
                      track_stats: bool = True) -> Var:
    """Train mode: batch statistics + running-stat update. Eval mode: pure.

    track_stats=False normalizes by batch statistics without touching the
    running estimates; the trainer uses it for generated batches so running
    stats track only the real-data distribution they serve at eval time.
    """
    scale = x.tape.param(f"{name}/bn_scale", store.param(f"{name}/bn_scale"))
    shift = x.tape.param(f"{name}/bn_shift", store.param(f"{name}/bn_shift"))
    bshape = (1, -1) if len(x.shape) == 2 else (1, -1, 1, 1)
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError(f"batchnorm {name!r}: train mode needs batch size >= 2")
        out, bmean, bvar = T.batchnorm(x, scale, shift, eps=eps)
        if track_stats:
            dt = store.state(f"{name}/bn_mean").dtype
            store.set_state(f"{name}/bn_mean",
                            (momentum * store.state(f"{name}/bn_mean")
                             + (1 - momentum) * bmean).astype(dt))
            store.set_state(f"{name}/bn_var",
                            (momentum * store.state(f"{name}/bn_var")
                             + (1 - momentum) * bvar).astype(dt))
        return out
    if mode == "eval":
        rmean = store.state(f"{name}/bn_mean").reshape(bshape)
        rinv = (1.0 / np.sqrt(store.state(f"{name}/bn_var") + eps)).reshape(bshape)
        dtype = x.dtype
        xhat = T.mul(T.sub(x, x.tape.constant(rmean.astype(dtype))),
                     x.tape.constant(rinv.astype(dtype)))
        return T.add(T.mul(xhat, T.reshape(scale, bshape)), T.reshape(shift, bshape))
    raise ValueError(f"unknown mode {mode!r}")


def _apply_row(x: Var, spec: LayerSpec, store: ParamStore, name: str, mode: str,
               track_stats: bool = True) -> Var:
    if spec.kind == "dense":
        x = dense_forward(x, store, name)
    elif spec.kind == "conv":
        w = x.tape.param(f"{name}/w", store.param(f"{name}/w"))
        b = x.tape.param(f"{name}/b", store.param(f"{name}/b"))
        x = T.conv2d(x, w, b, stride=spec.stride, pad=spec.pad)
    elif spec.kind == "deconv":
        w = x.tape.param(f"{name}/w", store.param(f"{name}/w"))
        b = x.tape.param(f"{name}/b", store.param(f"{name}/b"))
        x = T.deconv2d(x, w, b, stride=spec.stride, pad=spec.pad)
    if spec.batchnorm or spec.kind == "batchnorm":
        x = batchnorm_forward(x, store, name, mode, track_stats=track_stats)
    if spec.activation:
        x = T.activation(x, spec.activation, spec.alpha)
    return x


def sequential_forward(x: Var, specs: list[LayerSpec], store: ParamStore,
                       namespace: str, mode: str, track_stats: bool = True) -> Var:
    for i, spec in enumerate(specs):
        name = layer_name(namespace, i, spec.kind)
        try:
            x = _apply_row(x, spec, store, name, mode, track_stats=track_stats)
        except ShapeError as e:
            raise ShapeError(f"layer {i} ({name}): {e}") from e
    return x
