"""Vectorized fallback implementations of the hot convolution kernels."""

import numpy as np


def conv2d_forward(x, w, b):
    """Stride-1, same-size, zero-padded cross-correlation.

    Args:
        x: input maps, shape (in_maps, h, w).
        w: kernel bank, shape (out_maps, in_maps, kh, kw); kh and kw odd.
        b: per-output-map bias, shape (out_maps,).

    Returns:
        Output maps of shape (out_maps, h, w).
    """
    _, _, kh, kw = w.shape
    c, h, wd = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    s0, s1, s2 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(c, kh, kw, h, wd), strides=(s0, s1, s2, s1, s2), writeable=False
    )
    y = np.tensordot(w, cols, axes=([1, 2, 3], [0, 1, 2]))
    return y + b[:, None, None]


def conv2d_backward_input(gy, w):
    """Gradient of conv2d_forward with respect to its input.

    Equivalent to a full correlation of gy with the spatially flipped
    kernels, summed over output maps. gy has shape (out_maps, h, w); the
    result has shape (in_maps, h, w).
    """
    _, _, kh, kw = w.shape
    o, h, wd = gy.shape
    ph, pw = kh // 2, kw // 2
    gp = np.pad(gy, ((0, 0), (ph, ph), (pw, pw)))
    s0, s1, s2 = gp.strides
    cols = np.lib.stride_tricks.as_strided(
        gp, shape=(o, kh, kw, h, wd), strides=(s0, s1, s2, s1, s2), writeable=False
    )
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1])
    return np.tensordot(wf, cols, axes=([0, 2, 3], [0, 1, 2]))
