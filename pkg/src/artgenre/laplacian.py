"""Multi-scale gradient-histogram style transfer.

Each pyramid band of the subject is remapped toward the magnitude
distribution of the corresponding reference band: coefficients keep their
sign about an anchor value while the magnitude passes through the
subject-CDF / inverse-reference-CDF composition. Band levels anchor at 0
(they are zero-mean by construction); the residual anchors at its own
mean so overall brightness is kept while contrast spread is matched.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .image import Image, to_grayscale
from .pyramid import LaplacianPyramid, build_laplacian_pyramid, reconstruct

COLOR_MODES = ("per_channel", "luminance")


@dataclass(frozen=True)
class TransferParams:
    levels: int = 7
    iterations: int = 10
    bins: int = 256
    color_mode: str = "per_channel"

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.color_mode not in COLOR_MODES:
            raise ValueError(f"color_mode must be one of {COLOR_MODES}")


@dataclass(frozen=True)
class CoefficientHistogram:
    """Binned magnitude distribution over [lo, hi] with a piecewise-linear CDF."""

    lo: float
    hi: float
    counts: np.ndarray
    total: int

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @classmethod
    def from_samples(cls, samples, bins: int):
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise ValueError("cannot build a histogram from an empty level")
        lo = 0.0
        hi = float(samples.max())
        if hi <= lo:
            counts = np.zeros(bins, dtype=np.int64)
            counts[0] = samples.size
            return cls(lo=lo, hi=lo, counts=counts, total=int(samples.size))
        width = (hi - lo) / bins
        idx = np.minimum(((samples - lo) / width).astype(np.int64), bins - 1)
        counts = np.bincount(idx, minlength=bins).astype(np.int64)
        return cls(lo=lo, hi=hi, counts=counts, total=int(samples.size))

    def _cum(self):
        # CDF values at the bin edges: 0 at lo, 1 at hi.
        c = np.concatenate(([0.0], np.cumsum(self.counts, dtype=np.float64)))
        return c / self.total

    def cdf(self, values):
        """Evaluate the piecewise-linear CDF at the given magnitudes."""
        values = np.asarray(values, dtype=np.float64)
        if self.hi <= self.lo:
            return np.where(values >= self.lo, 1.0, 0.0)
        width = (self.hi - self.lo) / self.bin_count
        idx = np.clip(((values - self.lo) / width).astype(np.int64), 0, self.bin_count - 1)
        cum = self._cum()
        frac = (values - (self.lo + idx * width)) / width
        u = cum[idx] + np.clip(frac, 0.0, 1.0) * self.counts[idx] / self.total
        return np.clip(u, 0.0, 1.0)

    def quantile(self, u):
        """Invert the CDF; ties over empty bins resolve to the lower bin edge."""
        u = np.asarray(u, dtype=np.float64)
        if self.hi <= self.lo:
            return np.full_like(u, self.lo)
        width = (self.hi - self.lo) / self.bin_count
        cum = self._cum()
        j = np.searchsorted(cum, u, side="left")
        j = np.clip(j, 0, self.bin_count)
        exact = cum[j] <= u  # u sits exactly on an edge value
        out = np.empty_like(u)
        edges = self.lo + j * width
        out[exact] = edges[exact]
        inner = ~exact
        bi = j[inner] - 1
        slope = self.counts[bi] / self.total
        out[inner] = self.lo + bi * width + (u[inner] - cum[bi]) / slope * width
        return out


def level_histogram(level: Image, bins: int, anchor: float = 0.0) -> CoefficientHistogram:
    """Histogram of |coefficient - anchor| over one pyramid level."""
    return CoefficientHistogram.from_samples(np.abs(level.data - anchor), bins)


def match_level(
    subject: Image,
    reference_hist: CoefficientHistogram,
    iterations: int,
    anchor: float = 0.0,
) -> Image:
    """Remap subject coefficients so their magnitudes about the anchor follow reference_hist.

    The sign about the anchor is preserved; magnitudes move through the
    subject's own CDF composed with the inverse reference CDF. The subject
    CDF is re-estimated every iteration on the remapped values.
    """
    if reference_hist.total <= 0:
        raise ValueError("reference histogram is empty")
    vals = subject.data
    # A level whose coefficients all equal the anchor (up to rounding dust
    # far below 8-bit quantization) must stay constant; rank-based matching
    # would otherwise amplify the dust to reference magnitudes.
    if float(np.abs(vals - anchor).max()) <= 1e-12:
        return Image(np.full_like(vals, anchor))
    bins = reference_hist.bin_count
    for _ in range(iterations):
        mag = np.abs(vals - anchor)
        own = CoefficientHistogram.from_samples(mag, bins)
        matched = reference_hist.quantile(own.cdf(mag))
        vals = anchor + np.sign(vals - anchor) * matched
    return Image(vals)


def _transfer_planes(subject: Image, reference: Image, params: TransferParams) -> np.ndarray:
    spyr = build_laplacian_pyramid(subject, params.levels)
    rpyr = build_laplacian_pyramid(reference, params.levels)
    bands = []
    for sband, rband in zip(spyr.bands, rpyr.bands):
        ref_hist = level_histogram(rband, params.bins, anchor=0.0)
        bands.append(match_level(sband, ref_hist, params.iterations, anchor=0.0))
    r_anchor = float(rpyr.residual.data.mean())
    s_anchor = float(spyr.residual.data.mean())
    ref_hist = level_histogram(rpyr.residual, params.bins, anchor=r_anchor)
    residual = match_level(spyr.residual, ref_hist, params.iterations, anchor=s_anchor)
    return reconstruct(LaplacianPyramid(bands=tuple(bands), residual=residual)).data


def _match_channels(subject: Image, reference: Image):
    # A grayscale image extends to RGB by replication when paired with one.
    if subject.channels == reference.channels:
        return subject, reference
    if subject.channels == 1:
        return Image(np.repeat(subject.data, 3, axis=0)), reference
    return subject, Image(np.repeat(reference.data, 3, axis=0))


def laplacian_style_transfer(
    subject: Image,
    reference: Image,
    params: TransferParams = TransferParams(),
    clamp: bool = True,
) -> Image:
    """Match every subject pyramid level to the reference's magnitude statistics.

    Returns the reconstructed image, clamped to [0, 1] unless clamp=False
    (reconstruction may overshoot the nominal range).
    """
    if params.color_mode == "luminance":
        luma_s = to_grayscale(subject)
        luma_r = to_grayscale(reference)
        out_luma = _transfer_planes(luma_s, luma_r, params)
        chroma = subject.data - luma_s.data  # broadcast over channels
        out = out_luma + chroma
    else:
        subject, reference = _match_channels(subject, reference)
        planes = [
            _transfer_planes(
                Image(subject.data[c : c + 1]), Image(reference.data[c : c + 1]), params
            )
            for c in range(subject.channels)
        ]
        out = np.concatenate(planes, axis=0)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return Image(out)


def batch_transfer(subjects, reference, params=TransferParams(), workers=None):
    """Stylize many subjects against one reference, fanned out over a thread pool."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: laplacian_style_transfer(s, reference, params), subjects))
