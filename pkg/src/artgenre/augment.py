"""Training-set enlargement: horizontal flips and small rotations."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .image import Image, load_image, save_png
from .manifest import check_unique_paths

ROTATE_DEGREES = (3.0, 6.0, 9.0, 12.0)  # allowed magnitudes, either direction
MAX_ROTATE = 15.0


@dataclass(frozen=True)
class AugmentOp:
    kind: str  # "hflip" | "rotate"
    degrees: float = 0.0

    def __post_init__(self):
        if self.kind == "hflip":
            return
        if self.kind != "rotate":
            raise ValueError(f"unknown augment op {self.kind!r}")
        if abs(self.degrees) not in ROTATE_DEGREES:
            raise ValueError(f"rotation must be one of +/-{ROTATE_DEGREES}, got {self.degrees}")

    @property
    def name(self) -> str:
        if self.kind == "hflip":
            return "hflip"
        return f"rot{self.degrees:g}"

    def apply(self, img: Image) -> Image:
        if self.kind == "hflip":
            return hflip(img)
        return rotate(img, self.degrees)


def parse_ops(spec: str):
    """Parse a comma-separated op list like 'hflip,rot3,rot-6'."""
    ops = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "hflip":
            ops.append(AugmentOp("hflip"))
        elif token.startswith("rot"):
            ops.append(AugmentOp("rotate", degrees=float(token[3:])))
        else:
            raise ValueError(f"unknown augment op {token!r}")
    return tuple(ops)


def hflip(img: Image) -> Image:
    """Reverse columns; an involution."""
    return Image(img.data[:, :, ::-1].copy())


def _fold_reflect(coords, n):
    # Mirror continuous coordinates into [0, n-1] without repeating the edge.
    if n == 1:
        return np.zeros_like(coords)
    period = 2.0 * (n - 1)
    t = np.abs(coords) % period
    return np.where(t > n - 1, period - t, t)


def rotate(img: Image, degrees: float) -> Image:
    """Rotate about the center (positive = counterclockwise), bilinear sampling.

    Samples falling outside the frame reflect back in, so no fill wedges
    appear; output dimensions equal input dimensions.
    """
    if abs(degrees) > MAX_ROTATE:
        raise ValueError(f"|degrees| must be <= {MAX_ROTATE}, got {degrees}")
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)

    ys, xs = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    sx = cos * xs + sin * ys + cx
    sy = -sin * xs + cos * ys + cy
    sx = _fold_reflect(sx, w)
    sy = _fold_reflect(sy, h)

    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0

    src = img.data
    top = src[:, y0, x0] * (1 - fx) + src[:, y0, x1] * fx
    bottom = src[:, y1, x0] * (1 - fx) + src[:, y1, x1] * fx
    return Image(top * (1 - fy) + bottom * fy)


def _augmented_name(path: str, op_name: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    digest = hashlib.md5(path.encode("utf-8")).hexdigest()[:8]
    return f"{stem}__{op_name}__{digest}.png"


def augment_manifest(rows, ops, out_dir, image_root=".", workers=None):
    """Write augmented copies of every training row; test rows pass through untouched.

    Returns (new_rows, errors) where errors is a list of (path, message)
    for files that failed to load or write; successful rows inherit the
    source labels and carry the op name as provenance.
    """
    os.makedirs(out_dir, exist_ok=True)
    tasks = []
    for row in rows:
        if row.split != "train":
            continue
        for op in ops:
            tasks.append((row, op))

    def run(task):
        row, op = task
        src = os.path.join(image_root, row.path)
        try:
            out_name = _augmented_name(row.path, op.name)
            out_path = os.path.join(out_dir, out_name)
            save_png(op.apply(load_image(src)), out_path)
            return replace(row, path=out_path, provenance=op.name), None
        except Exception as exc:  # noqa: BLE001 - collected per file
            return None, (row.path, str(exc))

    errors = []
    new_rows = list(rows)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for produced, err in pool.map(run, tasks):
            if err is not None:
                errors.append(err)
            else:
                new_rows.append(produced)
    check_unique_paths(new_rows)
    return new_rows, errors
