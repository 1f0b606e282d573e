"""Channel-planar float image container with color, resampling and file I/O."""

import io

import numpy as np
from PIL import Image as _PILImage

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class Image:
    """Float64 raster stored planar as (channels, height, width).

    Values are nominally in [0, 1]; pyramid band levels may carry negative
    samples. All samples must be finite. Instances are treated as
    immutable: operations return new images and never mutate inputs.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ValueError(f"expected (c, h, w) with 1 or 3 channels, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError("empty image")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite samples")
        self.data = arr

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def __repr__(self):
        return f"Image({self.channels}x{self.height}x{self.width})"


def to_grayscale(img: Image) -> Image:
    """Collapse RGB to luma with weights 0.299/0.587/0.114; identity on 1-channel input."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise ValueError(f"unsupported channel count {img.channels}")
    r, g, b = img.data
    y = GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b
    return Image(y[np.newaxis])


def resize_bilinear(img: Image, width: int, height: int) -> Image:
    """Resample to (width, height) with half-pixel-centered bilinear interpolation."""
    if width < 1 or height < 1:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    src = img.data
    sx = (np.arange(width) + 0.5) * (img.width / width) - 0.5
    sy = (np.arange(height) + 0.5) * (img.height / height) - 0.5
    sx = np.clip(sx, 0.0, img.width - 1)
    sy = np.clip(sy, 0.0, img.height - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = sx - x0
    fy = sy - y0

    rows0 = src[:, y0, :]
    rows1 = src[:, y1, :]
    rows = rows0 * (1.0 - fy)[None, :, None] + rows1 * fy[None, :, None]
    out = rows[:, :, x0] * (1.0 - fx)[None, None, :] + rows[:, :, x1] * fx[None, None, :]
    return Image(out)


def load_image(path) -> Image:
    """Read an 8-bit PNG/JPEG as float64 via v/255; grayscale stays 1-channel."""
    with _PILImage.open(path) as pimg:
        if pimg.mode == "L":
            arr = np.asarray(pimg, dtype=np.float64) / 255.0
            return Image(arr[np.newaxis])
        rgb = pimg.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return Image(np.moveaxis(arr, 2, 0))


def encode_png(img: Image) -> bytes:
    """Quantize to 8 bits (clamp to [0,1], round half up) and encode as PNG."""
    q = np.floor(np.clip(img.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pimg = _PILImage.fromarray(q[0], mode="L")
    else:
        pimg = _PILImage.fromarray(np.moveaxis(q, 0, 2), mode="RGB")
    buf = io.BytesIO()
    pimg.save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: Image, path) -> None:
    """Write a PNG atomically (temp file in the target directory, then rename)."""
    from ._util import atomic_write_bytes

    atomic_write_bytes(path, encode_png(img))
