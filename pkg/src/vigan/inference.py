"""Checkpoint-backed inference used by both the CLI and the HTTP API.

Editing is deterministic: the latent code is the posterior mean (zero noise),
so the CLI triptych and the API response are byte-identical for the same
inputs. For uploaded images the editable attribute state starts from the
recognizer's probabilities snapped to valid one-hot groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint
from .data import decode_png, encode_png
from .model import ModelConfig, ViGAN
from .tensor import Tape
from .train import model_config_from_dict, model_from_bundle


@dataclass
class ModelBundle:
    model: ViGAN
    step: int

    @property
    def config(self) -> ModelConfig:
        return self.model.config


def load_model(path) -> ModelBundle:
    bundle = load_checkpoint(path)
    return ModelBundle(model=model_from_bundle(bundle), step=bundle.step)


def encode_image(mb: ModelBundle, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(posterior mean z, recognizer probabilities c_hat) for one image."""
    tape = Tape()
    x = tape.constant(image[None].astype(np.float32))
    enc = mb.model.encode(x, "eval")
    q = mb.model.recognize(x, "eval")
    return enc.mu.value[0].copy(), q.value[0].copy()


def encode_posterior_sample(mb: ModelBundle, image: np.ndarray,
                            seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Like encode_image but draws z from the posterior with seeded noise."""
    tape = Tape()
    x = tape.constant(image[None].astype(np.float32))
    enc = mb.model.encode(x, "eval")
    q = mb.model.recognize(x, "eval")
    eps = np.random.default_rng(seed).standard_normal(
        enc.mu.shape).astype(np.float32)
    z = mb.model.reparameterize(enc, eps)
    return z.value[0].copy(), q.value[0].copy()


def generate_image(mb: ModelBundle, c: np.ndarray, z: np.ndarray) -> np.ndarray:
    tape = Tape()
    img = mb.model.generate(tape.constant(z[None].astype(np.float32)),
                            tape.constant(c[None].astype(np.float32)), "eval")
    return img.value[0].copy()


def snap_groups(c_hat: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Project probabilities onto a valid attribute vector: one-hot per group,
    free attributes clipped to [0, 1]."""
    c = np.clip(np.asarray(c_hat, dtype=np.float32).copy(), 0.0, 1.0)
    for sl in config.group_slices().values():
        winner = int(np.argmax(c[sl]))
        c[sl] = 0.0
        c[sl.start + winner] = 1.0
    return c


def apply_attribute_set(c: np.ndarray, set_spec: dict, config: ModelConfig) -> np.ndarray:
    """Overwrite attributes: group name -> class index, or index -> value."""
    c = c.copy()
    slices = config.group_slices()
    for key, value in set_spec.items():
        key_str = str(key)
        if key_str in slices:
            sl = slices[key_str]
            cls = int(value)
            if not 0 <= cls < sl.stop - sl.start:
                raise ValueError(f"class {cls} out of range for group {key_str!r} "
                                 f"({sl.stop - sl.start} classes)")
            c[sl] = 0.0
            c[sl.start + cls] = 1.0
            continue
        try:
            idx = int(key_str)
        except ValueError:
            raise ValueError(f"unknown attribute group {key_str!r}; known: "
                             f"{sorted(slices)}") from None
        if not 0 <= idx < config.c_dim:
            raise ValueError(f"attribute index {idx} out of range (c_dim "
                             f"{config.c_dim})")
        v = float(value)
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"attribute value {v} outside [0, 1]")
        c[idx] = v
    return c


def edit_image(mb: ModelBundle, image: np.ndarray, set_spec: dict,
               base_attributes: np.ndarray | None = None,
               seed: int | None = None):
    """(reconstruction, edited image, base c, effective c) for one image.

    base_attributes overrides the snapped recognizer estimate (used when the
    source is a dataset sample with known labels). By default the latent is
    the posterior mean (deterministic); a seed draws it from the posterior
    instead.
    """
    if seed is None:
        z, c_hat = encode_image(mb, image)
    else:
        z, c_hat = encode_posterior_sample(mb, image, seed)
    c_base = (base_attributes.astype(np.float32) if base_attributes is not None
              else snap_groups(c_hat, mb.config))
    c_eff = apply_attribute_set(c_base, set_spec, mb.config)
    recon = generate_image(mb, c_base, z)
    edited = generate_image(mb, c_eff, z)
    return recon, edited, c_base, c_eff


def render_grid(images: np.ndarray, separator: int = 2,
                cols: int | None = None) -> np.ndarray:
    """Tile [N, C, H, W] images row-major into one [C, H', W'] canvas.

    cols defaults to ceil(sqrt(N)); empty trailing cells and separators take
    the background value -1.
    """
    n, C, H, W = images.shape
    cols = cols if cols is not None else int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    height = rows * H + (rows - 1) * separator
    width = cols * W + (cols - 1) * separator
    canvas = np.full((C, height, width), -1.0, dtype=np.float32)
    for i in range(n):
        r, c = divmod(i, cols)
        top = r * (H + separator)
        left = c * (W + separator)
        canvas[:, top:top + H, left:left + W] = images[i]
    return canvas


def sample_grid_png(mb: ModelBundle, n: int, seed: int, pool: np.ndarray) -> bytes:
    """n prior samples tiled into one PNG (z ~ N(0,I), c from the pool)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, mb.config.z_dim)).astype(np.float32)
    c = pool[rng.integers(len(pool), size=n)]
    imgs = []
    for i in range(n):
        imgs.append(generate_image(mb, c[i], z[i]))
    return encode_png(render_grid(np.stack(imgs)))


def triptych_png(original: np.ndarray, recon: np.ndarray, edited: np.ndarray) -> bytes:
    """Single row: original | reconstruction | edited."""
    return encode_png(render_grid(np.stack([original, recon, edited]), cols=3))


def decode_image_payload(data: bytes, config: ModelConfig) -> np.ndarray:
    """PNG bytes -> model-shaped image, validating geometry."""
    img = decode_png(data)
    want = (config.channels, config.image_size, config.image_size)
    if img.shape != want:
        raise ValueError(f"image must be {want[1]}x{want[2]} with {want[0]} "
                         f"channel(s), got {list(img.shape)}")
    return img
