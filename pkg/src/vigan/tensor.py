"""Reverse-mode autodiff over dense numpy tensors.

Values are plain numpy arrays (row-major, f32 or f64). A Tape records one
node per operation; a Var is a lightweight handle (tape, node id) so the
graph is explicit and inspectable. backward() walks the tape once in
reverse recording order and returns a gradient for every node id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import col2im, conv_out_size, deconv_out_size, im2col

Array = np.ndarray


class ShapeError(ValueError):
    """Operand shapes violate an operation's shape rule."""


def _broadcast(sa, sb):
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"shapes {list(sa)} and {list(sb)} do not broadcast") from None


# --- shape rules, shared by the op constructors and Tape.record -------------

def _rule_elementwise(shapes, attrs):
    out = shapes[0]
    for s in shapes[1:]:
        out = _broadcast(out, s)
    return out


def _rule_same(shapes, attrs):
    return shapes[0]


def _rule_matmul(shapes, attrs):
    (a, b) = shapes
    if len(a) != 2 or len(b) != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {list(a)} and {list(b)}")
    if a[1] != b[0]:
        raise ShapeError(f"matmul inner dims differ: {list(a)} vs {list(b)}")
    return (a[0], b[1])


def _rule_reduce(shapes, attrs):
    return ()


def _rule_concat(shapes, attrs):
    a, b = shapes
    axis = attrs["axis"]
    if len(a) != len(b):
        raise ShapeError(f"concat rank mismatch: {list(a)} vs {list(b)}")
    for d in range(len(a)):
        if d != axis and a[d] != b[d]:
            raise ShapeError(f"concat shapes differ off axis {axis}: {list(a)} vs {list(b)}")
    out = list(a)
    out[axis] = a[axis] + b[axis]
    return tuple(out)


def _rule_reshape(shapes, attrs):
    target = tuple(attrs["shape"])
    n = math.prod(shapes[0])
    if target.count(-1) > 1:
        raise ShapeError(f"reshape target {list(target)} has multiple -1 entries")
    if -1 in target:
        rest = -math.prod(target)  # product of fixed extents
        if rest == 0 or n % rest:
            raise ShapeError(f"reshape {list(shapes[0])} -> {list(target)} changes element count")
        target = tuple(n // rest if t == -1 else t for t in target)
    if n != math.prod(target):
        raise ShapeError(f"reshape {list(shapes[0])} -> {list(target)} changes element count")
    return target


def _rule_conv2d(shapes, attrs):
    x, w, b = shapes
    stride, pad = attrs["stride"], attrs["pad"]
    if len(x) != 4 or len(w) != 4:
        raise ShapeError(f"conv2d needs 4-d image and kernel, got {list(x)} and {list(w)}")
    B, C, H, W = x
    F, Cw, kh, kw = w
    if Cw != C:
        raise ShapeError(f"conv2d channel mismatch: image {list(x)} vs kernel {list(w)}")
    if b != (F,):
        raise ShapeError(f"conv2d bias shape {list(b)} does not match {F} filters")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    if kh > H + 2 * pad or kw > W + 2 * pad:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {H + 2 * pad}x{W + 2 * pad}"
        )
    return (B, F, conv_out_size(H, kh, stride, pad), conv_out_size(W, kw, stride, pad))


def _rule_deconv2d(shapes, attrs):
    x, w, b = shapes
    stride, pad = attrs["stride"], attrs["pad"]
    if len(x) != 4 or len(w) != 4:
        raise ShapeError(f"deconv2d needs 4-d image and kernel, got {list(x)} and {list(w)}")
    B, C, H, W = x
    Cw, F, kh, kw = w
    if Cw != C:
        raise ShapeError(f"deconv2d channel mismatch: image {list(x)} vs kernel {list(w)}")
    if b != (F,):
        raise ShapeError(f"deconv2d bias shape {list(b)} does not match {F} filters")
    if stride < 1:
        raise ShapeError(f"deconv2d stride must be >= 1, got {stride}")
    oh = deconv_out_size(H, kh, stride, pad)
    ow = deconv_out_size(W, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(f"deconv2d output {oh}x{ow} is not positive")
    return (B, F, oh, ow)


def _rule_batchnorm(shapes, attrs):
    return shapes[0]


SHAPE_RULES: dict[str, Callable] = {
    "add": _rule_elementwise,
    "sub": _rule_elementwise,
    "mul": _rule_elementwise,
    "exp": _rule_same,
    "log": _rule_same,
    "relu": _rule_same,
    "leaky_relu": _rule_same,
    "tanh": _rule_same,
    "sigmoid": _rule_same,
    "clamp": _rule_same,
    "matmul": _rule_matmul,
    "sum": _rule_reduce,
    "mean": _rule_reduce,
    "concat": _rule_concat,
    "reshape": _rule_reshape,
    "conv2d": _rule_conv2d,
    "deconv2d": _rule_deconv2d,
    "batchnorm": _rule_batchnorm,
}


@dataclass
class Node:
    op: str
    input_ids: tuple[int, ...]
    value: Array
    # maps the output gradient to one gradient (or None) per input
    backward: Optional[Callable[[Array], Sequence[Optional[Array]]]] = None


class Tape:
    """Append-only record of operations; node ids are list indices."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.param_ids: dict[str, int] = {}

    @property
    def next_id(self) -> int:
        return len(self.nodes)

    def record(self, op: str, input_ids: Sequence[int], value: Array,
               backward=None, attrs: Optional[dict] = None) -> int:
        for i in input_ids:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"input node {i} not on tape (have {len(self.nodes)})")
        rule = SHAPE_RULES.get(op)
        if rule is not None:
            expected = rule([self.nodes[i].value.shape for i in input_ids], attrs or {})
            if tuple(value.shape) != tuple(expected):
                raise ShapeError(
                    f"{op}: output shape {list(value.shape)} does not match "
                    f"rule result {list(expected)}"
                )
        self.nodes.append(Node(op, tuple(input_ids), value, backward))
        return len(self.nodes) - 1

    def constant(self, value, dtype=None) -> "Var":
        arr = np.asarray(value, dtype=dtype)
        return Var(self, self.record("const", (), arr))

    def param(self, name: str, value: Array) -> "Var":
        """Leaf bound to a named parameter; repeated binds reuse the node."""
        nid = self.param_ids.get(name)
        if nid is None:
            nid = self.record("param", (), value)
            self.param_ids[name] = nid
        return Var(self, nid)


class Var:
    """Handle to one tape node. Cheap to copy; the value lives on the tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ValueError("operands live on different tapes")
            return other
        return self.tape.constant(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, self.tape.constant(np.asarray(-1.0, dtype=self.dtype)))

    def __repr__(self):
        return f"Var(id={self.id}, op={self.tape.nodes[self.id].op}, shape={list(self.shape)})"


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


# --- elementwise -------------------------------------------------------------

def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    out = a.value + b.value
    sa, sb = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Var(tape, tape.record("add", (a.id, b.id), out, bwd))


def sub(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    out = a.value - b.value
    sa, sb = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return Var(tape, tape.record("sub", (a.id, b.id), out, bwd))


def mul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    out = av * bv

    def bwd(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return Var(tape, tape.record("mul", (a.id, b.id), out, bwd))


def elementwise(a: Var, b: Var, kind: str) -> Var:
    try:
        op = {"add": add, "sub": sub, "mul": mul}[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return op(a, b)


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return Var(x.tape, x.tape.record("exp", (x.id,), out, lambda g: (g * out,)))


def log(x: Var) -> Var:
    xv = x.value
    return Var(x.tape, x.tape.record("log", (x.id,), np.log(xv), lambda g: (g / xv,)))


def clamp(x: Var, lo: float, hi: float) -> Var:
    xv = x.value
    out = np.clip(xv, lo, hi)
    inside = ((xv >= lo) & (xv <= hi)).astype(xv.dtype)

    def bwd(g):
        return (g * inside,)

    return Var(x.tape, x.tape.record("clamp", (x.id,), out, bwd))


def detach(x: Var) -> Var:
    """Copy of x with no inputs: gradients stop here."""
    return Var(x.tape, x.tape.record("detach", (), x.value.copy()))


# --- activations -------------------------------------------------------------

def relu(x: Var) -> Var:
    xv = x.value
    out = np.maximum(xv, 0)
    mask = (xv > 0).astype(xv.dtype)
    return Var(x.tape, x.tape.record("relu", (x.id,), out, lambda g: (g * mask,)))


def leaky_relu(x: Var, alpha: float = 0.2) -> Var:
    xv = x.value
    slope = np.where(xv > 0, xv.dtype.type(1), xv.dtype.type(alpha))
    out = xv * slope
    return Var(x.tape, x.tape.record("leaky_relu", (x.id,), out, lambda g: (g * slope,)))


def tanh(x: Var) -> Var:
    out = np.tanh(x.value)
    return Var(x.tape, x.tape.record("tanh", (x.id,), out, lambda g: (g * (1 - out * out),)))


def sigmoid(x: Var) -> Var:
    # tanh form is stable for large |x|
    out = 0.5 * (np.tanh(0.5 * x.value) + 1.0)
    return Var(x.tape, x.tape.record("sigmoid", (x.id,), out, lambda g: (g * out * (1 - out),)))


def activation(x: Var, kind: str, alpha: float = 0.2) -> Var:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation kind {kind!r}")


# --- shape ops ---------------------------------------------------------------

def reshape(x: Var, shape) -> Var:
    shape = tuple(int(s) for s in shape)
    old = x.value.shape
    shape = _rule_reshape([old], {"shape": shape})
    out = x.value.reshape(shape)

    def bwd(g):
        return (g.reshape(old),)

    return Var(x.tape, x.tape.record("reshape", (x.id,), out, bwd, attrs={"shape": shape}))


def concat(a: Var, b: Var, axis: int) -> Var:
    tape = _same_tape(a, b)
    _rule_concat([a.value.shape, b.value.shape], {"axis": axis})
    out = np.concatenate([a.value, b.value], axis=axis)
    split = a.value.shape[axis]

    def bwd(g):
        ga, gb = np.split(g, [split], axis=axis)
        return np.ascontiguousarray(ga), np.ascontiguousarray(gb)

    return Var(tape, tape.record("concat", (a.id, b.id), out, bwd, attrs={"axis": axis}))


# --- reductions --------------------------------------------------------------

def reduce_sum(x: Var) -> Var:
    xv = x.value
    out = np.asarray(xv.sum(), dtype=xv.dtype)

    def bwd(g):
        return (np.full(xv.shape, g, dtype=xv.dtype),)

    return Var(x.tape, x.tape.record("sum", (x.id,), out, bwd))


def reduce_mean(x: Var) -> Var:
    xv = x.value
    out = np.asarray(xv.mean(), dtype=xv.dtype)
    n = xv.size

    def bwd(g):
        return (np.full(xv.shape, g / n, dtype=xv.dtype),)

    return Var(x.tape, x.tape.record("mean", (x.id,), out, bwd))


def reduce(x: Var, kind: str) -> Var:
    if kind == "sum":
        return reduce_sum(x)
    if kind == "mean":
        return reduce_mean(x)
    raise ValueError(f"unknown reduce kind {kind!r}")


# --- linear algebra ----------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    _rule_matmul((av.shape, bv.shape), {})
    out = av @ bv

    def bwd(g):
        return g @ bv.T, av.T @ g

    return Var(tape, tape.record("matmul", (a.id, b.id), out, bwd))


def conv2d(x: Var, w: Var, bias: Var, stride: int = 1, pad: int = 0) -> Var:
    """Cross-correlation with zero padding; kernel is [F, C, kh, kw]."""
    tape = _same_tape(x, w, bias)
    xv, wv, bv = x.value, w.value, bias.value
    _rule_conv2d((xv.shape, wv.shape, bv.shape), {"stride": stride, "pad": pad})
    B, C, H, W = xv.shape
    F, _, kh, kw = wv.shape
    cols = im2col(xv, kh, kw, stride, pad)          # [B, P, C*kh*kw]
    w2 = wv.reshape(F, -1)
    out_bpf = cols @ w2.T + bv                       # [B, P, F]
    oh = conv_out_size(H, kh, stride, pad)
    ow = conv_out_size(W, kw, stride, pad)
    out = np.ascontiguousarray(out_bpf.transpose(0, 2, 1)).reshape(B, F, oh, ow)

    def bwd(g):
        g_bpf = np.ascontiguousarray(g.reshape(B, F, oh * ow).transpose(0, 2, 1))
        dbias = g_bpf.sum(axis=(0, 1))
        dw = (g_bpf.reshape(-1, F).T @ cols.reshape(-1, C * kh * kw)).reshape(wv.shape)
        dcols = g_bpf @ w2
        dx = col2im(dcols, C, H, W, kh, kw, stride, pad)
        return dx, dw, dbias

    nid = tape.record("conv2d", (x.id, w.id, bias.id), out, bwd,
                      attrs={"stride": stride, "pad": pad})
    return Var(tape, nid)


def deconv2d(x: Var, w: Var, bias: Var, stride: int = 1, pad: int = 0) -> Var:
    """Transposed convolution (adjoint of conv2d); kernel is [C, F, kh, kw]."""
    tape = _same_tape(x, w, bias)
    xv, wv, bv = x.value, w.value, bias.value
    _rule_deconv2d((xv.shape, wv.shape, bv.shape), {"stride": stride, "pad": pad})
    B, C, H, W = xv.shape
    _, F, kh, kw = wv.shape
    oh = deconv_out_size(H, kh, stride, pad)
    ow = deconv_out_size(W, kw, stride, pad)
    w2 = wv.reshape(C, F * kh * kw)
    x_bpc = np.ascontiguousarray(xv.reshape(B, C, H * W).transpose(0, 2, 1))
    cols = x_bpc @ w2                                # [B, H*W, F*kh*kw]
    out = col2im(cols, F, oh, ow, kh, kw, stride, pad)
    out += bv.reshape(1, F, 1, 1)

    def bwd(g):
        dbias = g.sum(axis=(0, 2, 3))
        gcols = im2col(g, kh, kw, stride, pad)       # [B, H*W, F*kh*kw]
        dx_bpc = gcols @ w2.T
        dx = np.ascontiguousarray(dx_bpc.transpose(0, 2, 1)).reshape(B, C, H, W)
        dw = (x_bpc.reshape(-1, C).T @ gcols.reshape(-1, F * kh * kw)).reshape(wv.shape)
        return dx, dw, dbias

    nid = tape.record("deconv2d", (x.id, w.id, bias.id), out, bwd,
                      attrs={"stride": stride, "pad": pad})
    return Var(tape, nid)


# --- batch normalization (fused, training statistics) -------------------------

def batchnorm(x: Var, scale: Var, shift: Var, eps: float = 1e-5):
    """Normalize by batch statistics per channel; returns (out, mean, var).

    Channels are axis 1 for 4-d inputs and axis 1 (features) for 2-d inputs;
    mean/var are the biased batch statistics used for normalization.
    """
    tape = _same_tape(x, scale, shift)
    xv = x.value
    if xv.ndim == 4:
        axes = (0, 2, 3)
        bshape = (1, -1, 1, 1)
    elif xv.ndim == 2:
        axes = (0,)
        bshape = (1, -1)
    else:
        raise ShapeError(f"batchnorm expects 2-d or 4-d input, got {list(xv.shape)}")
    ch = xv.shape[1]
    if scale.value.shape != (ch,) or shift.value.shape != (ch,):
        raise ShapeError(
            f"batchnorm scale/shift must have shape [{ch}], got "
            f"{list(scale.value.shape)} and {list(shift.value.shape)}"
        )
    n = xv.size // ch
    mean = xv.mean(axis=axes)
    var = xv.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mean.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * scale.value.reshape(bshape) + shift.value.reshape(bshape)
    sv = scale.value

    def bwd(g):
        dshift = g.sum(axis=axes)
        dscale = (g * xhat).sum(axis=axes)
        dxhat = g * sv.reshape(bshape)
        dx = (inv.reshape(bshape) / n) * (
            n * dxhat
            - dxhat.sum(axis=axes).reshape(bshape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
        )
        return dx.astype(xv.dtype, copy=False), dscale, dshift

    nid = tape.record("batchnorm", (x.id, scale.id, shift.id), out, bwd)
    return Var(tape, nid), mean, var


# --- backward pass and gradient checking --------------------------------------

def backward(tape: Tape, loss) -> dict[int, Array]:
    """d(loss)/d(node) for every node id; nodes not reaching loss map to zeros."""
    lid = loss.id if isinstance(loss, Var) else int(loss)
    lnode = tape.nodes[lid]
    if lnode.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {list(lnode.value.shape)}")
    grads: dict[int, Array] = {lid: np.ones_like(lnode.value)}
    for nid in range(lid, -1, -1):
        g = grads.get(nid)
        node = tape.nodes[nid]
        if g is None or node.backward is None:
            continue
        for iid, ig in zip(node.input_ids, node.backward(g)):
            if ig is None:
                continue
            prev = grads.get(iid)
            grads[iid] = ig if prev is None else prev + ig
    for nid, node in enumerate(tape.nodes):
        if nid not in grads:
            grads[nid] = np.zeros_like(node.value)
    return grads


def grad_check(f, points, h: float = 1e-5, max_coords: Optional[int] = None,
               rng: Optional[np.random.Generator] = None,
               fd_dtype=None) -> float:
    """Max relative error between backward() and central differences.

    f takes one Var per point and returns a scalar Var; it must be pure.
    Relative error uses a denominator floor of 1 so near-zero gradients
    compare absolutely. max_coords caps the checked coordinates per input
    (sampled with rng) to keep large checks fast. fd_dtype evaluates the
    finite differences in a wider dtype (f64 reference for f32 gradients,
    where difference quotients drown in rounding noise).
    """
    points = [np.asarray(p) for p in points]

    def run(values) -> float:
        tape = Tape()
        out = f(*[tape.constant(v) for v in values])
        return float(out.value)

    tape = Tape()
    vs = [tape.constant(p) for p in points]
    grads = backward(tape, f(*vs))
    analytic = [grads[v.id] for v in vs]

    # perturb in the FD dtype so the step is exact, not quantized
    fd_points = [p.astype(fd_dtype) if fd_dtype is not None else p for p in points]
    worst = 0.0
    for i, p in enumerate(points):
        coords = range(p.size)
        if max_coords is not None and p.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(p.size, size=max_coords, replace=False)
        for ci in coords:
            vp = [q.copy() for q in fd_points]
            vm = [q.copy() for q in fd_points]
            vp[i].flat[ci] += h
            vm[i].flat[ci] -= h
            numeric = (run(vp) - run(vm)) / (2 * h)
            a = float(analytic[i].flat[ci])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
