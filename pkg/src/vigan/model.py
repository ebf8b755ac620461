"""The four networks: encoder, generator, discriminator, recognizer.

The discriminator and recognizer share a convolutional trunk (owned by the
discriminator's parameter namespace); the recognizer contributes only its
head. The encoder ends in two parallel linear heads for the posterior mean
and log-variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .layers import (LayerSpec, ParamStore, _apply_row, dense_forward, init_params,
                     layer_name, sequential_forward)
from .tensor import ShapeError, Var

PROB_EPS = 1e-7  # probability clamp: keeps every -log term finite


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    channels: int = 1
    z_dim: int = 32
    c_dim: int = 8
    conv_channels: tuple = (16, 32, 64)
    gen_channels: tuple = (64, 32, 16)  # dense fan-out first, then deconv widths
    fc_dim: int = 128
    rec_fc_dim: int = 128
    leaky_slope: float = 0.2
    logvar_min: float = -8.0
    logvar_max: float = 8.0
    # one-hot groups as (name, size) pairs covering a prefix of c_dim;
    # trailing indices are free [0,1] attributes
    attr_groups: tuple = (("slot1", 4), ("slot2", 4))

    def __post_init__(self):
        if self.z_dim < 1 or self.c_dim < 1:
            raise ValueError("z_dim and c_dim must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.image_size % (2 ** len(self.conv_channels)) != 0:
            raise ValueError(
                f"image_size {self.image_size} is not a multiple of "
                f"2^{len(self.conv_channels)}"
            )
        n_up = self._n_upsamples()
        if len(self.gen_channels) != n_up:
            raise ValueError(
                f"gen_channels needs {n_up} entries for image_size "
                f"{self.image_size}, got {len(self.gen_channels)}"
            )
        if sum(size for _, size in self.attr_groups) > self.c_dim:
            raise ValueError("attr_groups exceed c_dim")
        for _, size in self.attr_groups:
            if size < 2:
                raise ValueError("one-hot groups need at least 2 classes")

    def _n_upsamples(self) -> int:
        n, size = 0, self.image_size
        while size > 4:
            size //= 2
            n += 1
        return n

    @property
    def trunk_spatial(self) -> int:
        return self.image_size // (2 ** len(self.conv_channels))

    @property
    def feature_dim(self) -> int:
        return self.conv_channels[-1] * self.trunk_spatial ** 2

    def group_slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, size in self.attr_groups:
            out[name] = slice(start, start + size)
            start += size
        return out


def paper_config(channels: int = 3, c_dim: int = 40) -> ModelConfig:
    """Full-scale configuration: 64x64 images, z=256."""
    groups = (("slot1", 10), ("slot2", 10)) if c_dim == 20 else ()
    return ModelConfig(image_size=64, channels=channels, z_dim=256, c_dim=c_dim,
                       conv_channels=(64, 128, 256), gen_channels=(448, 256, 128, 64),
                       fc_dim=512, rec_fc_dim=128, attr_groups=groups)


@dataclass
class EncoderOutput:
    mu: Var
    logvar: Var


@dataclass
class DiscriminatorOutput:
    p_real: Var     # clamped to (PROB_EPS, 1 - PROB_EPS)
    features: Var   # flattened final trunk activations, before any head


def _conv_trunk_specs(config: ModelConfig, in_channels: int) -> list[LayerSpec]:
    specs = []
    prev = in_channels
    for i, ch in enumerate(config.conv_channels):
        specs.append(LayerSpec("conv", prev, ch, kernel=4, stride=2, pad=1,
                               activation="leaky_relu", batchnorm=i > 0,
                               alpha=config.leaky_slope))
        prev = ch
    return specs


def network_specs(config: ModelConfig) -> dict[str, list[LayerSpec]]:
    flat = config.feature_dim
    enc_trunk = _conv_trunk_specs(config, config.channels) + [
        LayerSpec("dense", flat, config.fc_dim, activation="leaky_relu",
                  batchnorm=True, alpha=config.leaky_slope),
    ]
    g0 = config.gen_channels[0]
    gen = [LayerSpec("dense", config.z_dim + config.c_dim, g0 * 4 * 4,
                     activation="relu", batchnorm=True)]
    widths = list(config.gen_channels[1:]) + [config.channels]
    prev = g0
    for i, ch in enumerate(widths):
        last = i == len(widths) - 1
        gen.append(LayerSpec("deconv", prev, ch, kernel=4, stride=2, pad=1,
                             activation="tanh" if last else "relu",
                             batchnorm=i == 0 and not last))
        prev = ch
    return {
        "enc_trunk": enc_trunk,
        "enc_mu": [LayerSpec("dense", config.fc_dim, config.z_dim)],
        "enc_logvar": [LayerSpec("dense", config.fc_dim, config.z_dim)],
        "gen": gen,
        "dis_trunk": _conv_trunk_specs(config, config.channels),
        "dis_head": [LayerSpec("dense", flat, 1)],
        "rec_head": [
            LayerSpec("dense", flat, config.rec_fc_dim, activation="leaky_relu",
                      batchnorm=True, alpha=config.leaky_slope),
            LayerSpec("dense", config.rec_fc_dim, config.c_dim),
        ],
    }


class ViGAN:
    """Parameter bundle plus the forward graphs for all four networks."""

    def __init__(self, config: ModelConfig, store: ParamStore):
        self.config = config
        self.store = store
        self.specs = network_specs(config)

    @classmethod
    def build(cls, config: ModelConfig, seed, dtype=np.float32) -> "ViGAN":
        specs = network_specs(config)
        seeds = np.random.SeedSequence(seed).spawn(7)
        store = ParamStore()
        init_params(specs["enc_trunk"], seeds[0], "enc/trunk/", dtype, store)
        init_params(specs["enc_mu"], seeds[1], "enc/mu/", dtype, store)
        init_params(specs["enc_logvar"], seeds[2], "enc/logvar/", dtype, store)
        init_params(specs["gen"], seeds[3], "gen/", dtype, store)
        init_params(specs["dis_trunk"], seeds[4], "dis/trunk/", dtype, store)
        init_params(specs["dis_head"], seeds[5], "dis/head/", dtype, store)
        init_params(specs["rec_head"], seeds[6], "rec/", dtype, store)
        return cls(config, store)

    # --- forward graphs -----------------------------------------------------

    def _check_image(self, x: Var) -> None:
        want = (self.config.channels, self.config.image_size, self.config.image_size)
        if len(x.shape) != 4 or x.shape[1:] != want:
            raise ShapeError(f"expected image batch [B, {', '.join(map(str, want))}], "
                             f"got {list(x.shape)}")

    def encode(self, x: Var, mode: str) -> EncoderOutput:
        self._check_image(x)
        h = sequential_forward(x, self.specs["enc_trunk"], self.store, "enc/trunk/", mode)
        mu = dense_forward(h, self.store, "enc/mu/00_dense")
        logvar = dense_forward(h, self.store, "enc/logvar/00_dense")
        logvar = T.clamp(logvar, self.config.logvar_min, self.config.logvar_max)
        return EncoderOutput(mu=mu, logvar=logvar)

    def reparameterize(self, out: EncoderOutput, eps: np.ndarray) -> Var:
        """z = mu + exp(logvar/2) * eps, with caller-supplied noise."""
        eps_v = out.mu.tape.constant(np.asarray(eps, dtype=out.mu.dtype))
        std = T.exp(out.logvar * 0.5)
        return T.add(out.mu, T.mul(std, eps_v))

    def generate(self, z: Var, c: Var, mode: str) -> Var:
        cfg = self.config
        if z.shape[1:] != (cfg.z_dim,) or c.shape[1:] != (cfg.c_dim,):
            raise ShapeError(
                f"generate wants z[B, {cfg.z_dim}] and c[B, {cfg.c_dim}], "
                f"got {list(z.shape)} and {list(c.shape)}"
            )
        h = T.concat(z, c, axis=1)
        specs = self.specs["gen"]
        h = sequential_forward(h, specs[:1], self.store, "gen/", mode)
        h = T.reshape(h, (h.shape[0], cfg.gen_channels[0], 4, 4))
        # remaining rows keep their list indices in the parameter names
        for i, spec in enumerate(specs[1:], start=1):
            h = _apply_row(h, spec, self.store, layer_name("gen/", i, spec.kind), mode)
        return h

    def trunk_features(self, x: Var, mode: str, track_stats: bool = True) -> Var:
        self._check_image(x)
        h = sequential_forward(x, self.specs["dis_trunk"], self.store, "dis/trunk/",
                               mode, track_stats=track_stats)
        return T.reshape(h, (h.shape[0], self.config.feature_dim))

    def discriminate(self, x: Var, mode: str, features: Optional[Var] = None,
                     track_stats: bool = True) -> DiscriminatorOutput:
        f = features if features is not None else self.trunk_features(
            x, mode, track_stats=track_stats)
        logit = dense_forward(f, self.store, "dis/head/00_dense")
        p = T.clamp(T.sigmoid(logit), PROB_EPS, 1.0 - PROB_EPS)
        return DiscriminatorOutput(p_real=p, features=f)

    def recognize(self, x: Var, mode: str, features: Optional[Var] = None,
                  track_stats: bool = True) -> Var:
        f = features if features is not None else self.trunk_features(
            x, mode, track_stats=track_stats)
        h = sequential_forward(f, self.specs["rec_head"], self.store, "rec/", mode,
                               track_stats=track_stats)
        return T.clamp(T.sigmoid(h), PROB_EPS, 1.0 - PROB_EPS)

    def discriminate_and_recognize(self, x: Var, mode: str, track_stats: bool = True):
        """Both heads over one shared trunk evaluation."""
        f = self.trunk_features(x, mode, track_stats=track_stats)
        return (self.discriminate(x, mode, features=f),
                self.recognize(x, mode, features=f, track_stats=track_stats))


def validate_attributes(c: np.ndarray, config: ModelConfig, atol: float = 1e-6) -> None:
    """Check range and one-hot group sums; raises ValueError on violation."""
    c = np.asarray(c)
    if c.ndim != 2 or c.shape[1] != config.c_dim:
        raise ValueError(f"attributes must be [B, {config.c_dim}], got {list(c.shape)}")
    if np.any(c < -atol) or np.any(c > 1 + atol):
        raise ValueError("attribute values must lie in [0, 1]")
    for name, sl in config.group_slices().items():
        sums = c[:, sl].sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-4):
            raise ValueError(f"one-hot group {name!r} does not sum to 1")
