"""Synthetic two-glyph dataset, PNG codec, and attribute-folder loading.

Each sample is a square image in [-1, 1] (background -1, strokes +1) with
one glyph placed uniformly at random wholly inside the left half and one
inside the right half. Attributes are the concatenated one-hot classes of
the two slots. Glyph bitmaps are fixed procedural stroke patterns, one per
class, so the dataset is fully self-contained.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

MAX_GLYPH_CLASSES = 10


@dataclass(frozen=True)
class GlyphDatasetConfig:
    grid_size: int = 32
    glyph_size: int = 12
    classes_per_slot: int = 4
    n_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.classes_per_slot < 2:
            raise ValueError("classes_per_slot must be >= 2")
        if self.classes_per_slot > MAX_GLYPH_CLASSES:
            raise ValueError(f"at most {MAX_GLYPH_CLASSES} glyph classes are defined")
        if 2 * self.glyph_size > self.grid_size:
            raise ValueError(
                f"glyph size {self.glyph_size} does not fit the half-grid of a "
                f"{self.grid_size} grid"
            )


@dataclass
class Sample:
    image: np.ndarray      # [C, H, W] float32 in [-1, 1]
    attributes: np.ndarray  # [c_dim] float32


def glyph_bitmap(cls: int, size: int) -> np.ndarray:
    """Fixed stroke pattern for one class: [size, size] in {-1, +1}."""
    if not 0 <= cls < MAX_GLYPH_CLASSES:
        raise ValueError(f"glyph class {cls} out of range")
    t = max(1, size // 6)
    g = np.full((size, size), -1.0, dtype=np.float32)
    mid = (size - t) // 2
    if cls == 0:    # box outline
        g[:t, :] = 1; g[-t:, :] = 1; g[:, :t] = 1; g[:, -t:] = 1
    elif cls == 1:  # vertical bar
        g[:, mid:mid + t] = 1
    elif cls == 2:  # X
        for i in range(size):
            lo = max(0, i - t + 1)
            g[i, lo:i + 1] = 1
            g[i, max(0, size - 1 - i - t + 1):size - i] = 1
    elif cls == 3:  # three horizontal bars
        g[:t, :] = 1; g[mid:mid + t, :] = 1; g[-t:, :] = 1
    elif cls == 4:  # plus
        g[mid:mid + t, :] = 1; g[:, mid:mid + t] = 1
    elif cls == 5:  # main diagonal
        for i in range(size):
            g[i, max(0, i - t + 1):i + 1] = 1
    elif cls == 6:  # T
        g[:t, :] = 1; g[:, mid:mid + t] = 1
    elif cls == 7:  # L
        g[:, :t] = 1; g[-t:, :] = 1
    elif cls == 8:  # diamond outline
        c = (size - 1) / 2.0
        ii, jj = np.indices((size, size))
        d = np.abs(ii - c) + np.abs(jj - c)
        g[(d <= c) & (d > c - 1.5 * t)] = 1
    elif cls == 9:  # opposing corner blocks
        h = size // 2
        g[:h, :h] = 1; g[h:, h:] = 1
    return g


def one_hot(cls: int, n: int) -> np.ndarray:
    v = np.zeros(n, dtype=np.float32)
    v[cls] = 1.0
    return v


def generate_two_glyph(config: GlyphDatasetConfig) -> list[Sample]:
    rng = np.random.default_rng(config.seed)
    size, g = config.grid_size, config.glyph_size
    half = size // 2
    bitmaps = [glyph_bitmap(c, g) for c in range(config.classes_per_slot)]
    samples = []
    for _ in range(config.n_samples):
        c1 = int(rng.integers(config.classes_per_slot))
        c2 = int(rng.integers(config.classes_per_slot))
        r1 = int(rng.integers(0, size - g + 1))
        col1 = int(rng.integers(0, half - g + 1))
        r2 = int(rng.integers(0, size - g + 1))
        col2 = int(rng.integers(half, size - g + 1))
        img = np.full((1, size, size), -1.0, dtype=np.float32)
        img[0, r1:r1 + g, col1:col1 + g] = np.maximum(
            img[0, r1:r1 + g, col1:col1 + g], bitmaps[c1])
        img[0, r2:r2 + g, col2:col2 + g] = np.maximum(
            img[0, r2:r2 + g, col2:col2 + g], bitmaps[c2])
        attrs = np.concatenate([one_hot(c1, config.classes_per_slot),
                                one_hot(c2, config.classes_per_slot)])
        samples.append(Sample(image=img, attributes=attrs))
    return samples


# --- PNG codec ----------------------------------------------------------------

def image_to_bytes(image: np.ndarray) -> np.ndarray:
    """[-1, 1] -> u8 via the linear map with round-half-up."""
    arr = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor((arr + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def bytes_to_image(arr: np.ndarray) -> np.ndarray:
    """u8 -> [-1, 1] float32, the inverse linear map."""
    return (np.asarray(arr, dtype=np.float32) / 127.5) - 1.0


def encode_png(image: np.ndarray) -> bytes:
    """[C, H, W] in [-1, 1] -> PNG bytes (grayscale for C=1, RGB for C=3)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise ValueError(f"expected [C, H, W] with C in (1, 3), got {list(image.shape)}")
    u8 = image_to_bytes(image)
    if image.shape[0] == 1:
        pil = Image.fromarray(u8[0], mode="L")
    else:
        pil = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    """PNG bytes -> [C, H, W] float32 in [-1, 1]."""
    try:
        pil = Image.open(io.BytesIO(data))
        pil.load()
    except Exception as e:
        raise ValueError(f"malformed PNG: {e}") from None
    if pil.mode == "L":
        u8 = np.asarray(pil, dtype=np.uint8)[None]
    else:
        u8 = np.asarray(pil.convert("RGB"), dtype=np.uint8).transpose(2, 0, 1)
    return bytes_to_image(u8)


# --- attribute-folder format ---------------------------------------------------

def export_folder(samples: list[Sample], directory) -> None:
    """images/NNNN.png plus attributes.csv with header id,a_0,...,a_{k-1}."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    c_dim = len(samples[0].attributes)
    with open(directory / "attributes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"a_{k}" for k in range(c_dim)])
        for i, s in enumerate(samples):
            writer.writerow([i] + [repr(float(a)) for a in s.attributes])
            (directory / "images" / f"{i:04d}.png").write_bytes(encode_png(s.image))


def _prepare(image: np.ndarray, image_size: int | None) -> np.ndarray:
    """Center-crop to square and resize, keeping native channel count."""
    if image_size is None:
        return image
    C, H, W = image.shape
    side = min(H, W)
    top, left = (H - side) // 2, (W - side) // 2
    image = image[:, top:top + side, left:left + side]
    if side == image_size:
        return image
    u8 = image_to_bytes(image)
    resized = np.empty((C, image_size, image_size), dtype=np.uint8)
    for ch in range(C):
        pil = Image.fromarray(u8[ch], mode="L").resize((image_size, image_size),
                                                       Image.BILINEAR)
        resized[ch] = np.asarray(pil)
    return bytes_to_image(resized)


def load_folder(directory, image_size: int | None = None) -> list[Sample]:
    directory = Path(directory)
    csv_path = directory / "attributes.csv"
    if not csv_path.exists():
        raise FileNotFoundError(f"missing {csv_path}")
    samples = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or any(
                h != f"a_{k}" for k, h in enumerate(header[1:])):
            raise ValueError(f"malformed attributes.csv header: {header}")
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"row {row[:1]} has {len(row)} fields, "
                                 f"expected {len(header)}")
            sid = int(row[0])
            attrs = np.array([float(v) for v in row[1:]], dtype=np.float32)
            if np.any(attrs < 0) or np.any(attrs > 1):
                raise ValueError(f"attribute out of [0, 1] in row {sid}")
            img_path = directory / "images" / f"{sid:04d}.png"
            if not img_path.exists():
                raise FileNotFoundError(f"missing image for row {sid}: {img_path}")
            image = _prepare(decode_png(img_path.read_bytes()), image_size)
            samples.append(Sample(image=image, attributes=attrs))
    return samples


def build_dataset(descriptor: dict) -> tuple[list[Sample], list[Sample]]:
    """(train, heldout) from a config descriptor.

    two_glyph descriptors draw the held-out set from an offset seed so the
    splits are disjoint by construction; folder descriptors split off the
    trailing `heldout` rows.
    """
    desc = dict(descriptor)
    kind = desc.pop("type", None)
    if kind == "two_glyph":
        heldout_n = int(desc.pop("heldout", 0))
        cfg = GlyphDatasetConfig(**desc)
        train = generate_two_glyph(cfg)
        heldout = []
        if heldout_n:
            hcfg = GlyphDatasetConfig(grid_size=cfg.grid_size, glyph_size=cfg.glyph_size,
                                      classes_per_slot=cfg.classes_per_slot,
                                      n_samples=heldout_n, seed=cfg.seed + 1_000_003)
            heldout = generate_two_glyph(hcfg)
        return train, heldout
    if kind == "folder":
        heldout_n = int(desc.pop("heldout", 0))
        samples = load_folder(desc.pop("path"), desc.pop("image_size", None))
        if desc:
            raise ValueError(f"unknown folder descriptor keys: {sorted(desc)}")
        if heldout_n:
            return samples[:-heldout_n], samples[-heldout_n:]
        return samples, []
    raise ValueError(f"unknown dataset type {kind!r}")
