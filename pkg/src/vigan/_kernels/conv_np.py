"""Pure-numpy patch gather/scatter, used when the compiled kernels are absent.

The kh*kw python loop touches whole strided slabs per iteration, so it stays
vectorized; it is slower than the compiled path mainly on small images where
slab overhead dominates.
"""

import numpy as np


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def deconv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + k


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """[B,C,H,W] -> [B, oh*ow, C*kh*kw] patch matrix (zero padding)."""
    B, C, H, W = x.shape
    oh = conv_out_size(H, kh, stride, pad)
    ow = conv_out_size(W, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((B, C, kh, kw, oh, ow), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = x[:, :, ki : ki + stride * oh : stride,
                                   kj : kj + stride * ow : stride]
    return np.ascontiguousarray(cols.transpose(0, 4, 5, 1, 2, 3)).reshape(
        B, oh * ow, C * kh * kw
    )


def col2im(cols: np.ndarray, C: int, H: int, W: int, kh: int, kw: int,
           stride: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add [B, oh*ow, C*kh*kw] back to [B,C,H,W]."""
    B = cols.shape[0]
    oh = conv_out_size(H, kh, stride, pad)
    ow = conv_out_size(W, kw, stride, pad)
    c6 = cols.reshape(B, oh, ow, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for ki in range(kh):
        for kj in range(kw):
            out[:, :, ki : ki + stride * oh : stride,
                kj : kj + stride * ow : stride] += c6[:, :, ki, kj]
    if pad:
        out = out[:, :, pad : pad + H, pad : pad + W]
    return np.ascontiguousarray(out)
