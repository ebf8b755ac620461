"""Binary checkpoint container for named f32 tensors plus JSON metadata.

Layout: magic "VIGN", u32 LE version (=1), u64 LE header length, JSON header
(tensor names/dtypes/shapes/offsets, configs, step, optimizer scalars, RNG
state), raw little-endian f32 payload in header order, and a trailing CRC32
of everything prior. Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VIGN"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint failures."""


class CorruptCheckpointError(CheckpointError):
    """CRC mismatch or truncated/malformed container."""


class CheckpointVersionError(CheckpointError):
    """Container version not supported by this build."""


class ConfigMismatchError(CheckpointError):
    """Checkpoint was produced under a different configuration."""


@dataclass
class CheckpointBundle:
    model_config: dict
    train_config: dict | None
    step: int
    rng_state: dict
    adam: dict            # net -> {lr, beta1, beta2, eps, t, grad_clip}
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def _le32(value: int) -> bytes:
    return struct.pack("<I", value)


def serialize(bundle: CheckpointBundle) -> bytes:
    names = sorted(bundle.tensors)
    entries = []
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(bundle.tensors[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": "f32",
                        "shape": [int(s) for s in arr.shape],
                        "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = {
        "adam": bundle.adam,
        "model_config": bundle.model_config,
        "rng_state": bundle.rng_state,
        "step": int(bundle.step),
        "tensors": entries,
        "train_config": bundle.train_config,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + _le32(VERSION) + struct.pack("<Q", len(header_bytes))
    body += header_bytes + b"".join(payloads)
    return body + _le32(zlib.crc32(body))


def deserialize(data: bytes) -> CheckpointBundle:
    if len(data) < 20 or data[:4] != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    crc_stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != crc_stored:
        raise CorruptCheckpointError("CRC mismatch: checkpoint is corrupt")
    version = struct.unpack("<I", data[4:8])[0]
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {VERSION}")
    header_len = struct.unpack("<Q", data[8:16])[0]
    header_end = 16 + header_len
    try:
        header = json.loads(data[16:header_end])
    except json.JSONDecodeError as e:
        raise CorruptCheckpointError(f"malformed header: {e}") from None
    payload = data[header_end:-4]
    tensors = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CorruptCheckpointError(f"tensor {entry['name']!r} payload truncated")
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr
    return CheckpointBundle(
        model_config=header["model_config"],
        train_config=header["train_config"],
        step=header["step"],
        rng_state=header["rng_state"],
        adam=header["adam"],
        tensors=tensors,
    )


def save_checkpoint(bundle: CheckpointBundle, path) -> None:
    path = Path(path)
    try:
        path.write_bytes(serialize(bundle))
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path, expect_model_config: dict | None = None) -> CheckpointBundle:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    bundle = deserialize(data)
    if expect_model_config is not None and bundle.model_config != expect_model_config:
        raise ConfigMismatchError(
            f"checkpoint model config does not match: {bundle.model_config} "
            f"vs expected {expect_model_config}"
        )
    return bundle
