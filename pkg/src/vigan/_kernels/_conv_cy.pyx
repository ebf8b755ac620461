# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled patch gather/scatter kernels backing conv2d and deconv2d.

Layouts match the numpy fallback exactly: images are [B, C, H, W] and
column buffers are [B, out_h*out_w, C*kh*kw]. The matmuls stay in BLAS;
only the gather (im2col) and scatter-add (col2im) loops live here.
"""

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad,
           real[:, :, ::1] out):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t oh = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (W + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, ki, kj, ii, jj, p, k
    for b in range(B):
        for i in range(oh):
            for j in range(ow):
                p = i * ow + j
                for c in range(C):
                    for ki in range(kh):
                        ii = i * stride + ki - pad
                        for kj in range(kw):
                            jj = j * stride + kj - pad
                            k = (c * kh + ki) * kw + kj
                            if 0 <= ii < H and 0 <= jj < W:
                                out[b, p, k] = x[b, c, ii, jj]
                            else:
                                out[b, p, k] = 0
    return None


def col2im(real[:, :, ::1] cols, int kh, int kw, int stride, int pad,
           real[:, :, :, ::1] out):
    # out must be zero-initialized; accumulates overlapping patches.
    cdef Py_ssize_t B = out.shape[0], C = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t oh = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (W + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, ki, kj, ii, jj, p, k
    for b in range(B):
        for i in range(oh):
            for j in range(ow):
                p = i * ow + j
                for c in range(C):
                    for ki in range(kh):
                        ii = i * stride + ki - pad
                        if ii < 0 or ii >= H:
                            continue
                        for kj in range(kw):
                            jj = j * stride + kj - pad
                            if jj < 0 or jj >= W:
                                continue
                            k = (c * kh + ki) * kw + kj
                            out[b, c, ii, jj] += cols[b, p, k]
    return None
