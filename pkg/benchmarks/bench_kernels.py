"""Compare the compiled and numpy patch kernels plus a full train step.

Run:  python3 benchmarks/bench_kernels.py
The compiled backend must be built (pip install -e .); the numpy fallback is
always available. Geometries mirror the desk and paper-scale layer shapes.
"""

import os
import time

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from vigan._kernels import backends, conv_out_size

CASES = [
    ("desk conv1   32x32x1 k4s2", (32, 1, 32, 32), 8, 4, 2, 1),
    ("desk conv2   16x16x8 k4s2", (32, 8, 16, 16), 16, 4, 2, 1),
    ("desk deconv  8x8x32 k4s2", (32, 32, 8, 8), 16, 4, 2, 1),
    ("paper conv1  64x64x3 k4s2", (16, 3, 64, 64), 64, 4, 2, 1),
    ("paper conv2  32x32x64 k4s2", (8, 64, 32, 32), 128, 4, 2, 1),
]


def bench(fn, repeat=20):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1e3


def main():
    impls = backends()
    print(f"backends available: {', '.join(impls)}")
    rng = np.random.default_rng(0)
    header = f"{'case':<28}" + "".join(f"{n + ' im2col':>16}{n + ' col2im':>16}"
                                       for n in impls)
    print(header)
    print("-" * len(header))
    for name, xshape, F, k, stride, pad in CASES:
        x = rng.standard_normal(xshape).astype(np.float32)
        B, C, H, W = xshape
        oh = conv_out_size(H, k, stride, pad)
        cols_shape = (B, oh * oh, C * k * k)
        cols = rng.standard_normal(cols_shape).astype(np.float32)
        row = f"{name:<28}"
        for impl in impls.values():
            t_gather = bench(lambda: impl.im2col(x, k, k, stride, pad))
            t_scatter = bench(lambda: impl.col2im(cols, C, H, W, k, k, stride, pad))
            row += f"{t_gather:>13.3f} ms{t_scatter:>13.3f} ms"
        print(row)

    print()
    print("full train step (desk config, batch 32):")
    from vigan.losses import LossWeights
    from vigan.model import ModelConfig
    from vigan.train import TrainConfig, make_trainer

    config = TrainConfig(
        batch_size=32, total_steps=1, seed=0, weights=LossWeights(0.3, 5.0),
        model=ModelConfig(conv_channels=(8, 16), gen_channels=(64, 32, 16),
                          fc_dim=64),
        optimizer={}, checkpoint_every=0, eval_every=0,
        dataset={"type": "two_glyph", "grid_size": 32, "glyph_size": 12,
                 "classes_per_slot": 4, "n_samples": 256, "seed": 0},
    )
    trainer = make_trainer(config)
    batch = trainer._batch(0)
    t = bench(lambda: trainer.train_step(batch), repeat=10)
    from vigan._kernels import BACKEND
    print(f"  active backend: {BACKEND}; {t:.0f} ms/step")


if __name__ == "__main__":
    main()
