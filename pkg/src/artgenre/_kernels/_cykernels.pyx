# Compiled core for the convolution kernels that dominate the pixel-descent
# inner loop. Semantics match artgenre._kernels.numpy_backend exactly.
#
# Loops run one (out_map, in_map, tap) shift at a time so the innermost loop
# is a contiguous row accumulation the C compiler can vectorize.

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()


cdef void _corr3x3(double[:, ::1] x, double[:, ::1] y, double[:, ::1] k,
                   Py_ssize_t h, Py_ssize_t wd) noexcept nogil:
    # y += 3x3 cross-correlation of x; interior unrolled, borders tap-checked
    cdef Py_ssize_t i, j, u, v, ii, jj
    cdef double k00 = k[0, 0], k01 = k[0, 1], k02 = k[0, 2]
    cdef double k10 = k[1, 0], k11 = k[1, 1], k12 = k[1, 2]
    cdef double k20 = k[2, 0], k21 = k[2, 1], k22 = k[2, 2]
    cdef double acc

    for i in range(1, h - 1):
        for j in range(1, wd - 1):
            acc = (k00 * x[i - 1, j - 1] + k01 * x[i - 1, j] + k02 * x[i - 1, j + 1]
                   + k10 * x[i, j - 1] + k11 * x[i, j] + k12 * x[i, j + 1]
                   + k20 * x[i + 1, j - 1] + k21 * x[i + 1, j] + k22 * x[i + 1, j + 1])
            y[i, j] += acc
    for i in range(h):
        for j in range(wd):
            if 0 < i < h - 1 and 0 < j < wd - 1:
                continue
            acc = 0.0
            for u in range(3):
                ii = i + u - 1
                if ii < 0 or ii >= h:
                    continue
                for v in range(3):
                    jj = j + v - 1
                    if jj < 0 or jj >= wd:
                        continue
                    acc += k[u, v] * x[ii, jj]
            y[i, j] += acc


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    """Stride-1, same-size, zero-padded cross-correlation."""
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t m, ch, u, v, i, j, i0, i1, j0, j1, di, dj
    cdef double wt, bias

    out = np.empty((o, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] y = out

    with nogil:
        for m in range(o):
            bias = b[m]
            for i in range(h):
                for j in range(wd):
                    y[m, i, j] = bias
            if kh == 3 and kw == 3 and h >= 2 and wd >= 2:
                for ch in range(c):
                    _corr3x3(x[ch], y[m], w[m, ch], h, wd)
                continue
            for ch in range(c):
                for u in range(kh):
                    di = u - ph
                    i0 = -di if di < 0 else 0
                    i1 = h - di if di > 0 else h
                    for v in range(kw):
                        dj = v - pw
                        j0 = -dj if dj < 0 else 0
                        j1 = wd - dj if dj > 0 else wd
                        wt = w[m, ch, u, v]
                        if wt == 0.0:
                            continue
                        for i in range(i0, i1):
                            for j in range(j0, j1):
                                y[m, i, j] += wt * x[ch, i + di, j + dj]
    return out


def conv2d_backward_input(double[:, :, ::1] gy, double[:, :, :, ::1] w):
    """Gradient of conv2d_forward with respect to its input."""
    cdef Py_ssize_t o = gy.shape[0], h = gy.shape[1], wd = gy.shape[2]
    cdef Py_ssize_t c = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t m, ch, u, v, i, j, i0, i1, j0, j1, di, dj
    cdef double wt

    out = np.zeros((c, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    flipped = np.ascontiguousarray(np.asarray(w)[:, :, ::-1, ::-1])
    cdef double[:, :, :, ::1] wf = flipped

    # gx[ch, i, j] = sum_{m,u,v} w[m, ch, u, v] * gy[m, i + ph - u, j + pw - v]
    with nogil:
        if kh == 3 and kw == 3 and h >= 2 and wd >= 2:
            for ch in range(c):
                for m in range(o):
                    _corr3x3(gy[m], gx[ch], wf[m, ch], h, wd)
        else:
            _backward_generic(gy, w, gx, o, c, h, wd, kh, kw)
    return out


cdef void _backward_generic(double[:, :, ::1] gy, double[:, :, :, ::1] w,
                            double[:, :, ::1] gx, Py_ssize_t o, Py_ssize_t c,
                            Py_ssize_t h, Py_ssize_t wd, Py_ssize_t kh,
                            Py_ssize_t kw) noexcept nogil:
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t m, ch, u, v, i, j, i0, i1, j0, j1, di, dj
    cdef double wt

    for ch in range(c):
        for m in range(o):
            for u in range(kh):
                di = ph - u
                i0 = -di if di < 0 else 0
                i1 = h - di if di > 0 else h
                for v in range(kw):
                    dj = pw - v
                    j0 = -dj if dj < 0 else 0
                    j1 = wd - dj if dj > 0 else wd
                    wt = w[m, ch, u, v]
                    if wt == 0.0:
                        continue
                    for i in range(i0, i1):
                        for j in range(j0, j1):
                            gx[ch, i, j] += wt * gy[m, i + di, j + dj]
