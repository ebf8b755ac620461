"""Finite-difference verification battery over every differentiable op
and the composed training objectives, shared by the CLI and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import (LossWeights, compose_enc_loss, compose_gen_loss, dis_loss,
                     gen_adv_loss, kl_prior, recog_loss, recon_feature_loss)
from .model import EncoderOutput, ModelConfig, ViGAN
from .tensor import Tape, backward, grad_check

OP_TOL = 1e-5
BN_TOL = 1e-4
END_TO_END_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    worst_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst_error < self.tolerance


def _away_from_kinks(rng, shape, low=0.1, high=1.5):
    p = rng.uniform(low, high, size=shape)
    return p * rng.choice([-1.0, 1.0], size=shape)


def _squared(out):
    return T.reduce_sum(T.mul(out, out))


def _op_cases(rng):
    """name -> (loss builder, point shapes factory)."""
    return {
        "add": (lambda a, b: _squared(T.add(a, b)), lambda: [(2, 3), (2, 3)]),
        "sub": (lambda a, b: _squared(T.sub(a, b)), lambda: [(2, 3), (2, 3)]),
        "mul": (lambda a, b: _squared(T.mul(a, b)), lambda: [(2, 3), (2, 3)]),
        "exp": (lambda a: _squared(T.exp(a)), lambda: [(2, 3)]),
        "log": (lambda a: _squared(T.log(T.mul(a, a))), lambda: [(2, 3)]),
        "relu": (lambda a: _squared(T.relu(a)), lambda: [(2, 3)]),
        "leaky_relu": (lambda a: _squared(T.leaky_relu(a, 0.2)), lambda: [(2, 3)]),
        "tanh": (lambda a: _squared(T.tanh(a)), lambda: [(2, 3)]),
        "sigmoid": (lambda a: _squared(T.sigmoid(a)), lambda: [(2, 3)]),
        "clamp": (lambda a: _squared(T.clamp(a, -0.9, 0.9)), lambda: [(2, 3)]),
        "sum": (lambda a: T.reduce_sum(T.mul(a, a)), lambda: [(2, 3)]),
        "mean": (lambda a: _squared(T.reduce_mean(T.mul(a, a))), lambda: [(2, 3)]),
        "concat": (lambda a, b: _squared(T.concat(a, b, 1)), lambda: [(2, 2), (2, 3)]),
        "reshape": (lambda a: _squared(T.reshape(a, (6,))), lambda: [(2, 3)]),
        "matmul": (lambda a, b: _squared(T.matmul(a, b)), lambda: [(3, 4), (4, 2)]),
        "conv2d": (lambda x, w, b: _squared(T.conv2d(x, w, b, stride=2, pad=1)),
                   lambda: [(2, 2, 6, 6), (3, 2, 4, 4), (3,)]),
        "deconv2d": (lambda x, w, b: _squared(T.deconv2d(x, w, b, stride=2, pad=1)),
                     lambda: [(2, 3, 4, 4), (3, 2, 4, 4), (2,)]),
    }


def check_op(name: str, points: int = 25, seed: int = 0,
             dtype=np.float64, tol: float | None = None) -> CheckResult:
    """One op's finite-difference battery.

    For f32 the analytic gradient is compared against an f64 finite-
    difference reference at the same points (difference quotients of f32
    forwards are dominated by rounding noise, not gradient error).
    """
    single = np.dtype(dtype) == np.float32
    fd_dtype = np.float64 if single else None
    rng = np.random.default_rng(seed)
    cases = _op_cases(rng)
    if name == "batchnorm":
        worst = 0.0
        for _ in range(points):
            x = _away_from_kinks(rng, (5, 3)).astype(dtype)
            scale = rng.uniform(0.5, 1.5, 3).astype(dtype)
            shift = _away_from_kinks(rng, (3,)).astype(dtype)

            def f(xv, sv, bv):
                out, _, _ = T.batchnorm(xv, sv, bv)
                return _squared(out)

            worst = max(worst, grad_check(f, [x, scale, shift], fd_dtype=fd_dtype))
        return CheckResult("batchnorm", worst, tol if tol is not None else BN_TOL)
    builder, shapes = cases[name]
    worst = 0.0
    for _ in range(points):
        pts = [_away_from_kinks(rng, s).astype(dtype) for s in shapes()]
        worst = max(worst, grad_check(builder, pts, fd_dtype=fd_dtype))
    return CheckResult(name, worst, tol if tol is not None else OP_TOL)


def op_names() -> list[str]:
    return sorted(list(_op_cases(np.random.default_rng(0))) + ["batchnorm"])


def _tiny_model():
    config = ModelConfig(image_size=8, channels=1, z_dim=3, c_dim=4,
                         conv_channels=(3,), gen_channels=(4,), fc_dim=6,
                         rec_fc_dim=5, attr_groups=(("slot1", 2), ("slot2", 2)))
    return ViGAN.build(config, seed=5, dtype=np.float64)


def _fd_over_params(model, names, loss_fn, coords_per_tensor=3, h=1e-5, seed=0):
    """Compare backward() against central differences on sampled coordinates."""
    tape, loss = loss_fn(model)
    grads = backward(tape, loss)
    by_name = {n: grads[nid] for n, nid in tape.param_ids.items()}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names:
        p = model.store.param(name)
        k = min(coords_per_tensor, p.size)
        for ci in rng.choice(p.size, size=k, replace=False):
            orig = float(p.flat[ci])
            p.flat[ci] = orig + h
            _, lp = loss_fn(model)
            p.flat[ci] = orig - h
            _, lm = loss_fn(model)
            p.flat[ci] = orig
            num = (float(lp.value) - float(lm.value)) / (2 * h)
            ana = float(by_name[name].flat[ci])
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


def composed_loss_checks(seed: int = 0) -> list[CheckResult]:
    """End-to-end FD checks for the four composed objectives on a tiny model."""
    rng = np.random.default_rng(seed)
    model = _tiny_model()
    B, zd, cd = 2, 3, 4
    x = rng.uniform(-0.9, 0.9, (B, 1, 8, 8))
    c = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=np.float64)
    eps = rng.standard_normal((B, zd))
    z_p = rng.standard_normal((B, zd))
    c_p = c[::-1].copy()
    w = LossWeights(1.0, 1.0)

    def enc_loss(m):
        tape = Tape()
        xv, cv = tape.constant(x), tape.constant(c)
        enc = m.encode(xv, "train")
        x_rec = m.generate(m.reparameterize(enc, eps), cv, "train")
        f_real = m.discriminate(xv, "train").features
        f_rec = m.discriminate(x_rec, "train").features
        return tape, compose_enc_loss(kl_prior(enc.mu, enc.logvar),
                                      recon_feature_loss(f_real, f_rec))

    def gen_loss(m):
        tape = Tape()
        xv, cv = tape.constant(x), tape.constant(c)
        enc = m.encode(xv, "train")
        x_rec = m.generate(m.reparameterize(enc, eps), cv, "train")
        f_real = m.discriminate(xv, "train").features
        d_rec, q_rec = m.discriminate_and_recognize(x_rec, "train")
        x_gen = m.generate(tape.constant(z_p), tape.constant(c_p), "train")
        d_gen, q_gen = m.discriminate_and_recognize(x_gen, "train")
        return tape, compose_gen_loss(
            gen_adv_loss(d_rec.p_real), recog_loss(c, q_rec),
            gen_adv_loss(d_gen.p_real), recog_loss(c_p, q_gen),
            recon_feature_loss(f_real, d_rec.features), w)

    def rec_loss(m):
        tape = Tape()
        q = m.recognize(tape.constant(x), "train")
        return tape, recog_loss(c, q)

    def dis_loss_fn(m):
        tape = Tape()
        xv, cv = tape.constant(x), tape.constant(c)
        enc = m.encode(xv, "train")
        x_rec = m.generate(m.reparameterize(enc, eps), cv, "train")
        x_gen = m.generate(tape.constant(z_p), tape.constant(c_p), "train")
        return tape, dis_loss(m.discriminate(xv, "train").p_real,
                              m.discriminate(x_gen, "train").p_real,
                              m.discriminate(x_rec, "train").p_real)

    store = model.store
    cases = [
        ("loss_enc_composed", enc_loss, store.names("enc/")),
        ("loss_gen_composed", gen_loss, store.names("gen/")),
        ("loss_recog", rec_loss, store.names("rec/")),
        ("loss_dis", dis_loss_fn, store.names("dis/")),
    ]
    return [CheckResult(name, _fd_over_params(model, names, fn, seed=seed),
                        END_TO_END_TOL)
            for name, fn, names in cases]


def run_suite(module: str = "all", points: int = 25) -> list[CheckResult]:
    results = []
    names = op_names() if module in ("all", "ops") else [module]
    if module in ("all", "ops") or module in op_names():
        for name in names:
            results.append(check_op(name, points=points))
    if module in ("all", "losses"):
        results.extend(composed_loss_checks())
    if not results:
        raise ValueError(f"unknown gradcheck module {module!r}; known: "
                         f"{', '.join(op_names() + ['losses', 'ops', 'all'])}")
    return results
