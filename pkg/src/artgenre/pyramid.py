"""Gaussian/Laplacian pyramid construction and exact reconstruction.

Levels halve by ceil(n/2) per axis; level k therefore has dimensions
(ceil(w / 2^k), ceil(h / 2^k)). The smoothing kernel is the separable
5-tap binomial [1, 4, 6, 4, 1] / 16 with mirror-reflected borders (edge
sample not duplicated). Upsampling zero-inserts and applies the same
kernel scaled x2 per axis, which makes reconstruct an exact inverse of
build up to float rounding.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .image import Image

_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

_MAGIC = b"LPYR"


def _mirror_indices(n, pad):
    # Reflect indices without repeating the edge sample; degenerate axes clamp.
    idx = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def _smooth_axis(arr, axis, gain=1.0):
    n = arr.shape[axis]
    ap = np.take(arr, _mirror_indices(n, 2), axis=axis)
    out = np.zeros_like(arr)
    sl = [slice(None)] * arr.ndim
    for k in range(5):
        sl[axis] = slice(k, k + n)
        out += (_KERNEL[k] * gain) * ap[tuple(sl)]
    return out


def _downsample(arr):
    s = _smooth_axis(_smooth_axis(arr, 1), 2)
    return s[:, ::2, ::2]


def _upsample(arr, target_h, target_w):
    c, h, w = arr.shape
    if h != -(-target_h // 2) or w != -(-target_w // 2):
        raise ValueError(
            f"inconsistent level dimensions: {h}x{w} cannot upsample to {target_h}x{target_w}"
        )
    z = np.zeros((c, target_h, target_w), dtype=np.float64)
    z[:, ::2, ::2] = arr
    return _smooth_axis(_smooth_axis(z, 1, gain=2.0), 2, gain=2.0)


def max_levels(width: int, height: int) -> int:
    """Largest supported pyramid depth for an image of the given size."""
    return int(math.floor(math.log2(min(width, height)))) + 1


@dataclass(frozen=True)
class LaplacianPyramid:
    """Band-pass levels (finest first) plus the coarsest low-pass residual."""

    bands: tuple
    residual: Image

    @property
    def levels(self) -> int:
        return len(self.bands) + 1


def build_laplacian_pyramid(img: Image, levels: int) -> LaplacianPyramid:
    """Decompose img into levels-1 band-pass images and a low-pass residual."""
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    cap = max_levels(img.width, img.height)
    if levels > cap:
        raise ValueError(
            f"levels {levels} exceeds maximum {cap} for a {img.width}x{img.height} image"
        )
    gauss = [img.data]
    for _ in range(levels - 1):
        gauss.append(_downsample(gauss[-1]))
    bands = []
    for k in range(levels - 1):
        up = _upsample(gauss[k + 1], gauss[k].shape[1], gauss[k].shape[2])
        bands.append(Image(gauss[k] - up))
    return LaplacianPyramid(bands=tuple(bands), residual=Image(gauss[-1]))


def reconstruct(pyr: LaplacianPyramid) -> Image:
    """Exact inverse of build_laplacian_pyramid (within float rounding)."""
    cur = pyr.residual.data
    for band in reversed(pyr.bands):
        if band.channels != cur.shape[0]:
            raise ValueError("inconsistent level dimensions: channel mismatch")
        cur = _upsample(cur, band.height, band.width) + band.data
    return Image(cur)


def write_pyramid(pyr: LaplacianPyramid, path) -> None:
    """Serialize to a little-endian binary container (bands finest first, then residual)."""
    from ._util import atomic_write_bytes

    parts = [_MAGIC, struct.pack("<II", 1, pyr.levels)]
    for img in list(pyr.bands) + [pyr.residual]:
        c, h, w = img.data.shape
        parts.append(struct.pack("<III", c, h, w))
        parts.append(np.ascontiguousarray(img.data).tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_pyramid(path) -> LaplacianPyramid:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a pyramid container")
    version, levels = struct.unpack_from("<II", blob, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported container version {version}")
    off = 12
    images = []
    for _ in range(levels):
        c, h, w = struct.unpack_from("<III", blob, off)
        off += 12
        count = c * h * w
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(c, h, w)
        off += count * 8
        images.append(Image(arr.copy()))
    return LaplacianPyramid(bands=tuple(images[:-1]), residual=images[-1])
