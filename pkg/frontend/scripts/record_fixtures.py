"""Record API fixtures for the frontend tests from a live primary server.

Trains a tiny checkpoint on a folder dataset whose attribute vector has two
one-hot groups plus two free binary attributes, serves it in-process, issues
the canonical requests, and freezes request/response pairs as JSON under
test/fixtures/. Rerun after API changes: python3 scripts/record_fixtures.py
"""

import base64
import json
import sys
import urllib.request
from pathlib import Path

import numpy as np

from vigan.data import (GlyphDatasetConfig, Sample, encode_png, export_folder,
                        generate_two_glyph)
from vigan.inference import ModelBundle
from vigan.losses import LossWeights
from vigan.model import ModelConfig
from vigan.server import start_background
from vigan.train import Trainer, TrainConfig, build_dataset

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def make_dataset(tmp: Path):
    rng = np.random.default_rng(3)
    glyphs = generate_two_glyph(GlyphDatasetConfig(
        grid_size=16, glyph_size=6, classes_per_slot=4, n_samples=24, seed=2))
    widened = []
    for s in glyphs:
        extra = rng.integers(0, 2, size=2).astype(np.float32)
        widened.append(Sample(image=s.image,
                              attributes=np.concatenate([s.attributes, extra])))
    export_folder(widened, tmp)
    return widened


def call(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(f"{base}{path}", data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def main():
    tmp = Path("/tmp/vigan_fixture_ds")
    tmp.mkdir(exist_ok=True)
    samples = make_dataset(tmp)
    config = TrainConfig(
        batch_size=4, total_steps=3, seed=5, weights=LossWeights(0.3, 5.0),
        model=ModelConfig(image_size=16, channels=1, z_dim=8, c_dim=10,
                          conv_channels=(4, 8), gen_channels=(8, 8), fc_dim=16,
                          rec_fc_dim=16, attr_groups=(("slot1", 4), ("slot2", 4))),
        optimizer={}, checkpoint_every=0, eval_every=0,
        dataset={"type": "folder", "path": str(tmp)},
    )
    train_set, _ = build_dataset(config.dataset)
    trainer = Trainer(config, train_set)
    trainer.run(None)
    server, _ = start_background(ModelBundle(model=trainer.model, step=trainer.step))
    base = f"http://127.0.0.1:{server.server_address[1]}"

    image_b64 = base64.b64encode(encode_png(samples[0].image)).decode("ascii")
    recorded = {}

    def record(name, method, path, body=None):
        status, payload = call(base, method, path, body)
        recorded[name] = {"method": method, "path": path, "request": body,
                          "status": status, "response": payload}

    record("model_info", "GET", "/model/info")
    record("encode_sample0", "POST", "/encode", {"image": image_b64})
    record("edit_identity", "POST", "/edit", {"image": image_b64, "set": {}})

    # accumulate edits the way the session does: each body carries every
    # change made so far
    record("edit_slot1_2", "POST", "/edit",
           {"image": image_b64, "set": {"slot1": 2}})
    record("edit_then_toggle8", "POST", "/edit",
           {"image": image_b64, "set": {"slot1": 2, "8": 1}})
    record("edit_toggle8_only", "POST", "/edit",
           {"image": image_b64, "set": {"8": 1}})
    record("edit_slot2_0", "POST", "/edit",
           {"image": image_b64, "set": {"slot2": 0}})
    record("edit_invalid_class", "POST", "/edit",
           {"image": image_b64, "set": {"slot1": 9}})
    record("generate_seed7", "POST", "/generate",
           {"c": [1, 0, 0, 0, 0, 1, 0, 0, 0.0, 1.0], "seed": 7})
    record("encode_bad_image", "POST", "/encode", {"image": "@@@"})

    server.shutdown()
    server.server_close()

    FIXTURES.mkdir(parents=True, exist_ok=True)
    for name, data in recorded.items():
        (FIXTURES / f"{name}.json").write_text(json.dumps(data, indent=2) + "\n")
    (FIXTURES / "source_image.json").write_text(json.dumps(
        {"image": image_b64,
         "attributes": [float(v) for v in samples[0].attributes]}, indent=2) + "\n")
    print(f"recorded {len(recorded) + 1} fixtures into {FIXTURES}")


if __name__ == "__main__":
    sys.exit(main())
