"""Independent reference implementations shared by the test modules.

Everything here is deliberately brute force (explicit loops, exhaustive
enumeration, sorting) so it cannot share a bug with the library paths it
checks.
"""

import itertools

import numpy as np

from artgenre.descriptors import LBP_BINS
from artgenre.image import to_grayscale

LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def cell_bounds(n, k):
    return np.round(np.arange(k + 1) * (n / k)).astype(int)


def reference_phog(img, cfg):
    """Per-pixel brute-force pyramidal orientation histograms."""
    a = to_grayscale(img).data[0]
    h, w = a.shape
    bins = cfg.hog_bins
    bin_width = 180.0 / bins
    cells_all = []
    for k in cfg.grid_levels:
        ys, xs = cell_bounds(h, k), cell_bounds(w, k)
        hist = np.zeros((k, k, bins))
        for y in range(h):
            for x in range(w):
                gx = a[y, min(x + 1, w - 1)] - a[y, max(x - 1, 0)]
                gy = a[min(y + 1, h - 1), x] - a[max(y - 1, 0), x]
                mag = np.hypot(gx, gy)
                theta = np.degrees(np.arctan2(gy, gx)) % 180.0
                pos = theta / bin_width
                lo = int(np.floor(pos))
                frac = pos - lo
                r = np.searchsorted(ys, y, side="right") - 1
                c = np.searchsorted(xs, x, side="right") - 1
                hist[r, c, lo % bins] += mag * (1 - frac)
                hist[r, c, (lo + 1) % bins] += mag * frac
        for r in range(k):
            for c in range(k):
                cells_all.append(hist[r, c] / (hist[r, c].sum() + cfg.norm_eps))
    return np.concatenate(cells_all)


def reference_plbp(img, cfg):
    """Per-pixel brute-force pyramidal uniform-pattern histograms."""
    a = to_grayscale(img).data[0]
    h, w = a.shape
    uniform = []
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        if sum(bits[i] != bits[(i + 1) % 8] for i in range(8)) <= 2:
            uniform.append(code)
    index_of = {code: i for i, code in enumerate(uniform)}
    cells_all = []
    for k in cfg.grid_levels:
        ys, xs = cell_bounds(h, k), cell_bounds(w, k)
        hist = np.zeros((k, k, LBP_BINS))
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                code = 0
                for bit, (dy, dx) in enumerate(LBP_OFFSETS):
                    if a[y, x] >= a[y + dy, x + dx]:
                        code |= 1 << bit
                r = np.searchsorted(ys, y, side="right") - 1
                c = np.searchsorted(xs, x, side="right") - 1
                hist[r, c, index_of.get(code, LBP_BINS - 1)] += 1
        for r in range(k):
            for c in range(k):
                cells_all.append(hist[r, c] / (hist[r, c].sum() + cfg.norm_eps))
    return np.concatenate(cells_all)


def exhaustive_dual_max(kmat, y, c_reg):
    """Exact SVM dual maximum: enumerate every {0, C, free} active-set pattern."""
    n = len(y)
    q = (y[:, None] * y[None, :]) * kmat
    best = None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        alpha = np.array([0.0 if p == 0 else c_reg for p in pattern])
        free = [i for i, p in enumerate(pattern) if p == 2]
        m = len(free)
        mat = np.zeros((m + 1, m + 1))
        rhs = np.zeros(m + 1)
        for a, i in enumerate(free):
            for b, j in enumerate(free):
                mat[a, b] = q[i, j]
            mat[a, m] = y[i]
            rhs[a] = 1.0 - sum(q[i, j] * alpha[j] for j in range(n) if pattern[j] != 2)
        for b, j in enumerate(free):
            mat[m, b] = y[j]
        rhs[m] = -sum(y[j] * alpha[j] for j in range(n) if pattern[j] != 2)
        if m:
            try:
                sol = np.linalg.solve(mat, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[free] = sol[:m]
        if np.any(alpha < -1e-9) or np.any(alpha > c_reg + 1e-9):
            continue
        if abs(float(y @ alpha)) > 1e-7:
            continue
        obj = float(alpha.sum() - 0.5 * alpha @ q @ alpha)
        if best is None or obj > best:
            best = obj
    return best


def sort_matched(subject_vals, reference_vals):
    """Exact rank-based matching: subject values take equal-quantile reference values."""
    order = np.argsort(subject_vals, kind="stable")
    ref_sorted = np.sort(reference_vals)
    quantiles = (np.arange(len(subject_vals)) + 0.5) / len(subject_vals)
    picks = np.interp(
        quantiles, (np.arange(len(ref_sorted)) + 0.5) / len(ref_sorted), ref_sorted
    )
    out = np.empty_like(subject_vals)
    out[order] = picks
    return out


def emd_1d(a, b):
    """Optimal-transport distance between equal-size 1-D samples."""
    a = np.sort(np.ravel(a))
    b = np.sort(np.ravel(b))
    assert a.size == b.size
    return float(np.abs(a - b).mean())
