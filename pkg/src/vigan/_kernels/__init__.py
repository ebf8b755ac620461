"""Convolution patch kernels: compiled extension when built, numpy otherwise.

Set VIGAN_FORCE_NUMPY=1 to skip the extension (used by the benchmark and the
backend-equivalence tests). `BACKEND` names the active implementation.
"""

import os

import numpy as np

from .conv_np import conv_out_size, deconv_out_size  # noqa: F401
from . import conv_np

try:
    from . import _conv_cy
except ImportError:
    _conv_cy = None

_force_numpy = bool(os.environ.get("VIGAN_FORCE_NUMPY"))
BACKEND = "numpy" if (_conv_cy is None or _force_numpy) else "cython"


def _im2col_cy(x, kh, kw, stride, pad):
    B, C, H, W = x.shape
    oh = conv_out_size(H, kh, stride, pad)
    ow = conv_out_size(W, kw, stride, pad)
    out = np.empty((B, oh * ow, C * kh * kw), dtype=x.dtype)
    _conv_cy.im2col(np.ascontiguousarray(x), kh, kw, stride, pad, out)
    return out


def _col2im_cy(cols, C, H, W, kh, kw, stride, pad):
    out = np.zeros((cols.shape[0], C, H, W), dtype=cols.dtype)
    _conv_cy.col2im(np.ascontiguousarray(cols), kh, kw, stride, pad, out)
    return out


if BACKEND == "cython":
    im2col = _im2col_cy
    col2im = _col2im_cy
else:
    im2col = conv_np.im2col
    col2im = conv_np.col2im


def backends() -> dict:
    """Importable implementations keyed by name, for benchmarks and tests."""
    found = {"numpy": conv_np}
    if _conv_cy is not None:
        found["cython"] = type(
            "CyBackend", (), {"im2col": staticmethod(_im2col_cy),
                              "col2im": staticmethod(_col2im_cy)}
        )
    return found
