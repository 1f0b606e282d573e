"""Pyramidal HoG and LBP descriptors over spatial grids.

Both descriptors partition the image into k x k cells for every grid
level (default 1x1, 2x2, 4x4), histogram per cell, L1-normalize with a
small epsilon, and concatenate coarse-to-fine. Cell boundaries use
banker's rounding so mirrored images produce mirrored cells.
"""

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .image import Image, to_grayscale

LBP_BINS = 59  # 58 uniform 8-bit codes + 1 catch-all

_FEAT_MAGIC = b"AGFT"


@dataclass(frozen=True)
class DescriptorConfig:
    grid_levels: tuple = (1, 2, 4)
    hog_bins: int = 9
    norm_eps: float = 1e-6

    def __post_init__(self):
        if not self.grid_levels:
            raise ValueError("grid_levels must be nonempty")
        if self.hog_bins < 2:
            raise ValueError("hog_bins must be >= 2")

    def fingerprint(self) -> bytes:
        blob = json.dumps(
            {"grid": list(self.grid_levels), "bins": self.hog_bins, "eps": self.norm_eps},
            sort_keys=True,
        )
        return hashlib.md5(blob.encode()).digest()[:8]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    descriptor_id: str  # "phog" | "plbp"
    fingerprint: bytes


def phog_length(cfg: DescriptorConfig) -> int:
    return cfg.hog_bins * sum(k * k for k in cfg.grid_levels)


def plbp_length(cfg: DescriptorConfig) -> int:
    return LBP_BINS * sum(k * k for k in cfg.grid_levels)


def _cell_bounds(n, k):
    # np.round is half-to-even, so bounds of mirrored images mirror exactly.
    return np.round(np.arange(k + 1) * (n / k)).astype(int)


def _check_size(img, cfg, descriptor):
    k_max = max(cfg.grid_levels)
    if min(img.height, img.width) < max(8, k_max):
        raise ValueError(
            f"{descriptor}: image {img.width}x{img.height} too small for the finest {k_max}x{k_max} grid"
        )


def _normalize_cells(vectors, eps):
    out = []
    for v in vectors:
        out.append(v / (v.sum() + eps))
    return np.concatenate(out)


def phog(img: Image, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    """Gradient-orientation histograms per grid cell, magnitude weighted.

    Gradients come from centered differences with replicated borders;
    orientations are unsigned in [0, 180) and each pixel's magnitude is
    split linearly between the two nearest bin centers (circular wrap).
    """
    _check_size(img, cfg, "phog")
    a = to_grayscale(img).data[0]
    h, w = a.shape

    gx = np.empty_like(a)
    gx[:, 1:-1] = a[:, 2:] - a[:, :-2]
    gx[:, 0] = a[:, 1] - a[:, 0]
    gx[:, -1] = a[:, -1] - a[:, -2]
    gy = np.empty_like(a)
    gy[1:-1, :] = a[2:, :] - a[:-2, :]
    gy[0, :] = a[1, :] - a[0, :]
    gy[-1, :] = a[-1, :] - a[-2, :]

    mag = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0

    # Bin centers sit at k * (180 / bins) so axis-aligned gradients vote
    # into a single bin; reflection then permutes bins by k -> -k mod bins.
    bins = cfg.hog_bins
    bin_width = 180.0 / bins
    pos = theta / bin_width
    low = np.floor(pos)
    frac = pos - low
    bin_lo = (low.astype(np.int64)) % bins
    bin_hi = (bin_lo + 1) % bins
    # per-pixel vote planes, shape (bins, h, w)
    votes = np.zeros((bins, h, w))
    flat_lo = bin_lo.ravel()
    flat_hi = bin_hi.ravel()
    rows, cols = np.divmod(np.arange(h * w), w)
    np.add.at(votes, (flat_lo, rows, cols), (mag * (1.0 - frac)).ravel())
    np.add.at(votes, (flat_hi, rows, cols), (mag * frac).ravel())

    cells = []
    for k in cfg.grid_levels:
        ys = _cell_bounds(h, k)
        xs = _cell_bounds(w, k)
        for r in range(k):
            for c in range(k):
                cells.append(votes[:, ys[r] : ys[r + 1], xs[c] : xs[c + 1]].sum(axis=(1, 2)))
    return FeatureVector(
        values=_normalize_cells(cells, cfg.norm_eps),
        descriptor_id="phog",
        fingerprint=cfg.fingerprint(),
    )


# Neighbor offsets in circular order; bit i of an LBP code is set when the
# center dominates the pixel at offset i (ties, center == neighbor, set it).
_LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def _uniform_lut():
    lut = np.full(256, LBP_BINS - 1, dtype=np.int64)
    uniform = []
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            uniform.append(code)
    for rank, code in enumerate(uniform):
        lut[code] = rank
    return lut


_LUT = _uniform_lut()


def plbp(img: Image, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    """Uniform-pattern LBP histograms (59 bins) per grid cell.

    The 1-pixel image margin is excluded; cells still partition the full
    image, so a border cell only contributes its interior pixels.
    """
    _check_size(img, cfg, "plbp")
    a = to_grayscale(img).data[0]
    h, w = a.shape

    center = a[1 : h - 1, 1 : w - 1]
    code = np.zeros(center.shape, dtype=np.int64)
    for bit, (dy, dx) in enumerate(_LBP_OFFSETS):
        neigh = a[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        code |= (center >= neigh).astype(np.int64) << bit
    binned = _LUT[code]  # interior-indexed plane

    cells = []
    for k in cfg.grid_levels:
        ys = _cell_bounds(h, k)
        xs = _cell_bounds(w, k)
        for r in range(k):
            for c in range(k):
                y0, y1 = max(ys[r], 1), min(ys[r + 1], h - 1)
                x0, x1 = max(xs[c], 1), min(xs[c + 1], w - 1)
                if y0 >= y1 or x0 >= x1:
                    cells.append(np.zeros(LBP_BINS))
                    continue
                patch = binned[y0 - 1 : y1 - 1, x0 - 1 : x1 - 1]
                cells.append(np.bincount(patch.ravel(), minlength=LBP_BINS).astype(np.float64))
    return FeatureVector(
        values=_normalize_cells(cells, cfg.norm_eps),
        descriptor_id="plbp",
        fingerprint=cfg.fingerprint(),
    )


def extract(img: Image, descriptor: str, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    if descriptor == "phog":
        return phog(img, cfg)
    if descriptor == "plbp":
        return plbp(img, cfg)
    raise ValueError(f"unknown descriptor {descriptor!r}")


def write_feature_matrix(path, matrix, descriptor_id: str, fingerprint: bytes = b"") -> None:
    """Binary matrix container: magic, version, rows, cols, descriptor id, fingerprint."""
    from ._util import atomic_write_bytes

    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    desc = descriptor_id.encode("ascii")[:8].ljust(8, b"\0")
    fp = fingerprint[:8].ljust(8, b"\0")
    header = _FEAT_MAGIC + struct.pack("<III", 1, matrix.shape[0], matrix.shape[1]) + desc + fp
    atomic_write_bytes(path, header + matrix.tobytes())


def read_feature_matrix(path):
    """Returns (matrix, descriptor_id)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _FEAT_MAGIC:
        raise ValueError(f"{path}: not a feature matrix file")
    version, rows, cols = struct.unpack_from("<III", blob, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    desc = blob[16:24].rstrip(b"\0").decode("ascii")
    data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=32).reshape(rows, cols)
    return data.copy(), desc
