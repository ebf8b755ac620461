"""Loss terms and their composition into the four minimized objectives.

All losses are scalar Vars, averaged over the batch. Probabilities arriving
here are already clamped to (1e-7, 1 - 1e-7) by the model heads, so every
log stays finite. The discriminator's fake term uses -log(1 - D(fake)),
which is bounded below and decreasing in D like the raw log D form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Var


@dataclass(frozen=True)
class LossWeights:
    """Relative weight of reconstruction (lambda1) and recognition (lambda2)."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class LossReport:
    l_prior: float
    l_recon: float
    l_recog: float
    l_gen_adv: float
    l_dis: float
    l_enc: float
    l_gen: float

    def finite(self) -> bool:
        return all(np.isfinite(v) for v in vars(self).values())

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in vars(self).items()}


def kl_prior(mu: Var, logvar: Var) -> Var:
    """KL(N(mu, exp(logvar)) || N(0, I)), mean over the batch."""
    batch = mu.shape[0]
    term = T.sub(T.add(T.mul(mu, mu), T.exp(logvar)), logvar) - 1.0
    return T.reduce_sum(term) * (0.5 / batch)


def recon_feature_loss(f_real: Var, f_rec: Var) -> Var:
    """Gaussian NLL in feature space: batch mean of 0.5 * sum_i (d_i)^2.

    Summing over feature dimensions (not averaging) keeps the term on the
    log-likelihood scale, which is what lets the encoder pay the KL price
    of an informative posterior instead of collapsing to the prior.
    f_real is detached: reconstruction never trains the feature extractor.
    """
    if f_real.shape != f_rec.shape:
        raise ShapeError(f"feature shapes differ: {list(f_real.shape)} vs "
                         f"{list(f_rec.shape)}")
    d = T.sub(T.detach(f_real), f_rec)
    return T.reduce_sum(T.mul(d, d)) * (0.5 / f_real.shape[0])


def recog_loss(c_true, q: Var) -> Var:
    """Bernoulli NLL of attributes, summed over attributes, batch mean."""
    batch = q.shape[0]
    c = q.tape.constant(np.asarray(c_true if not isinstance(c_true, Var) else c_true.value,
                                   dtype=q.dtype))
    if c.shape != q.shape:
        raise ShapeError(f"attribute shapes differ: {list(c.shape)} vs {list(q.shape)}")
    ll = T.add(T.mul(c, T.log(q)), T.mul(1.0 - c, T.log(1.0 - q)))
    return T.reduce_sum(ll) * (-1.0 / batch)


def gen_adv_loss(p_fake: Var) -> Var:
    """Non-saturating generator objective: mean of -log D(fake)."""
    return T.reduce_sum(T.log(p_fake)) * (-1.0 / p_fake.shape[0])


def dis_loss(p_real: Var, p_fake_gen: Var, p_fake_rec: Var) -> Var:
    """Real vs the two fake sets (sampled and reconstructed)."""
    t_real = T.reduce_sum(T.log(p_real)) * (-1.0 / p_real.shape[0])
    t_gen = T.reduce_sum(T.log(1.0 - p_fake_gen)) * (-1.0 / p_fake_gen.shape[0])
    t_rec = T.reduce_sum(T.log(1.0 - p_fake_rec)) * (-1.0 / p_fake_rec.shape[0])
    return T.add(T.add(t_real, t_gen), t_rec)


def compose_enc_loss(l_prior: Var, l_recon: Var) -> Var:
    return T.add(l_prior, l_recon)


def compose_gen_loss(adv_rec: Var, recog_rec: Var, adv_gen: Var, recog_gen: Var,
                     l_recon: Var, w: LossWeights) -> Var:
    rec_path = T.add(adv_rec, recog_rec * w.lambda2)
    gen_path = T.add(adv_gen, recog_gen * w.lambda2)
    return T.add(T.add(rec_path, gen_path), l_recon * w.lambda1)
