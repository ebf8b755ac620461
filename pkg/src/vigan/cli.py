"""Command-line entry points: train, sample, edit, gradcheck, dataset, serve.

Exit codes: 0 success, 1 check failure (gradcheck), 2 usage/config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .data import (GlyphDatasetConfig, build_dataset, encode_png, export_folder,
                   generate_two_glyph)
from .gradsuite import op_names, run_suite
from .inference import (ModelBundle, decode_image_payload, edit_image, load_model,
                        render_grid, sample_grid_png, triptych_png)
from .train import Trainer, make_trainer, train_config_from_dict


class UsageError(Exception):
    pass


def _load_train_config(path: Path):
    try:
        text = path.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
    try:
        return train_config_from_dict(raw)
    except (ValueError, TypeError) as e:
        raise UsageError(f"{path}: {e}") from e


def _write_sample_grid(trainer: Trainer, out: Path, step: int) -> None:
    mb = ModelBundle(model=trainer.model, step=step)
    png = sample_grid_png(mb, n=16, seed=trainer.config.seed + step, pool=trainer.pool)
    (out / f"samples_{step:06d}.png").write_bytes(png)


def cmd_train(args) -> int:
    config = _load_train_config(Path(args.config))
    out = Path(args.out)
    if args.resume:
        try:
            bundle = load_checkpoint(args.resume)
        except CheckpointError as e:
            raise UsageError(str(e)) from e
        train_set, heldout = build_dataset(config.dataset)
        trainer = Trainer.from_bundle(bundle, config, train_set, heldout=heldout)
    else:
        trainer = make_trainer(config)
    trainer.run(out, sample_grid_fn=_write_sample_grid)
    print(f"trained to step {trainer.step}; outputs in {out}")
    return 0


def cmd_sample(args) -> int:
    mb = load_model(args.ckpt)
    pool = _pool_from_checkpoint(mb, args.ckpt)
    png = sample_grid_png(mb, n=args.n, seed=args.seed, pool=pool)
    Path(args.out).write_bytes(png)
    print(f"wrote {args.out}")
    return 0


def _pool_from_checkpoint(mb: ModelBundle, ckpt_path) -> np.ndarray:
    bundle = load_checkpoint(ckpt_path)
    if bundle.train_config and "dataset" in bundle.train_config:
        train_set, _ = build_dataset(bundle.train_config["dataset"])
        return np.stack([s.attributes for s in train_set]).astype(np.float32)
    raise UsageError("checkpoint carries no dataset descriptor; cannot sample "
                     "attribute vectors")


def _parse_set_args(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--set expects group=class or index=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            out[key] = float(value) if "." in value else int(value)
        except ValueError:
            raise UsageError(f"--set value {value!r} is not a number") from None
    return out


def cmd_edit(args) -> int:
    mb = load_model(args.ckpt)
    set_spec = _parse_set_args(args.set or [])
    base_attrs = None
    if args.dataset_index is not None:
        bundle = load_checkpoint(args.ckpt)
        if not bundle.train_config or "dataset" not in bundle.train_config:
            raise UsageError("checkpoint carries no dataset descriptor")
        train_set, _ = build_dataset(bundle.train_config["dataset"])
        if not 0 <= args.dataset_index < len(train_set):
            raise UsageError(f"--dataset-index {args.dataset_index} out of range "
                             f"(dataset has {len(train_set)} samples)")
        sample = train_set[args.dataset_index]
        image = sample.image
        base_attrs = sample.attributes
    elif args.infile:
        try:
            image = decode_image_payload(Path(args.infile).read_bytes(), mb.config)
        except (OSError, ValueError) as e:
            raise UsageError(str(e)) from e
    else:
        raise UsageError("provide --in or --dataset-index")
    try:
        recon, edited, _, c_eff = edit_image(mb, image, set_spec,
                                             base_attributes=base_attrs,
                                             seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from e
    Path(args.out).write_bytes(triptych_png(image, recon, edited))
    print(f"wrote {args.out} (c_effective: {[round(float(v), 3) for v in c_eff]})")
    return 0


def cmd_gradcheck(args) -> int:
    try:
        results = run_suite(args.module, points=args.points)
    except ValueError as e:
        raise UsageError(str(e)) from e
    width = max(len(r.name) for r in results)
    failed = False
    for r in results:
        flag = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  worst {r.worst_error:.3e}  tol {r.tolerance:.0e}  {flag}")
        failed = failed or not r.passed
    if failed:
        worst = max((r for r in results if not r.passed), key=lambda r: r.worst_error)
        print(f"gradcheck FAILED: {worst.name} at {worst.worst_error:.3e}")
        return 1
    print("gradcheck passed")
    return 0


def cmd_dataset(args) -> int:
    cfg = GlyphDatasetConfig(grid_size=args.grid, glyph_size=args.glyph,
                             classes_per_slot=args.classes, n_samples=args.n,
                             seed=args.seed)
    samples = generate_two_glyph(cfg)
    out = Path(args.out)
    export_folder(samples, out)
    preview = render_grid(np.stack([s.image for s in samples[:16]]))
    (out / "preview.png").write_bytes(encode_png(preview))
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve
    serve(args.ckpt, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vigan",
                                     description="attribute-conditioned image "
                                                 "generation and editing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="tile prior samples into a PNG grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("edit", help="edit attributes of an image; writes a triptych")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--dataset-index", type=int, default=None)
    p.add_argument("--set", action="append", metavar="GROUP=CLASS",
                   help="attribute assignment; repeatable")
    p.add_argument("--seed", type=int, default=None,
                   help="sample the latent from the posterior instead of its mean")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_edit)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--module", default="all",
                   help=f"all, ops, losses, or one of: {', '.join(op_names())}")
    p.add_argument("--points", type=int, default=25)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("dataset", help="generate the two-glyph dataset to a folder")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--glyph", type=int, default=12)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
