"""Desk-scale synthetic corpus with class-specific texture statistics.

Each class owns a fixed dictionary of quadrant-grating prototypes; every
image is a jittered, noisy render of one prototype. Small training sets
miss prototypes entirely, so injecting extra in-distribution images
genuinely raises recognition, which is what the end-to-end experiment
needs to observe. Used by the acceptance tests and `experiment synth`.
"""

import os

import numpy as np

from .image import Image, save_png
from .manifest import ManifestRow, write_manifest

CLASS_NAMES = ("quadrille", "strata", "tessel")
PROTOTYPES_PER_CLASS = 12
_THETA_JITTER = 4.0  # degrees
_FREQ_JITTER = 0.4
_PIXEL_NOISE = 0.12


def class_prototypes(class_index: int, corpus_seed: int = 0):
    """The fixed prototype dictionary of one class: (quadrant angles, frequency) pairs."""
    rng = np.random.default_rng(100_003 * (corpus_seed + 1) + class_index)
    protos = []
    for _ in range(PROTOTYPES_PER_CLASS):
        thetas = rng.uniform(0.0, 180.0, size=4)
        freq = rng.uniform(3.0, 9.0)
        protos.append((thetas, freq))
    return protos


def render_prototype(proto, size: int, rng) -> Image:
    """One noisy sample of a prototype: per-quadrant gratings plus pixel noise."""
    thetas, freq = proto
    img = np.full((size, size), 0.5)
    half = size // 2
    ys, xs = np.meshgrid(np.arange(half), np.arange(half), indexing="ij")
    for q, (y0, x0) in enumerate(((0, 0), (0, half), (half, 0), (half, half))):
        theta = np.deg2rad(thetas[q] + rng.normal(0.0, _THETA_JITTER))
        f = freq + rng.normal(0.0, _FREQ_JITTER)
        axis = (xs * np.cos(theta) + ys * np.sin(theta)) / half
        phase = rng.uniform(0.0, 2.0 * np.pi)
        img[y0 : y0 + half, x0 : x0 + half] += 0.25 * np.sin(2.0 * np.pi * f * axis + phase)
    img += rng.normal(0.0, _PIXEL_NOISE, size=img.shape)
    return Image(np.clip(img, 0.0, 1.0)[np.newaxis])


def generate_corpus(
    out_dir,
    per_class_base: int = 60,
    per_class_source: int = 120,
    size: int = 64,
    seed: int = 0,
):
    """Write base (painting-domain) and injectable (photo-domain) images plus manifests.

    Returns (base_manifest_path, source_manifest_path).
    """
    rng = np.random.default_rng(seed)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    base_rows, source_rows = [], []
    for ci, class_name in enumerate(CLASS_NAMES):
        protos = class_prototypes(ci, corpus_seed=seed)
        for i in range(per_class_base):
            proto = protos[rng.integers(len(protos))]
            rel = os.path.join("images", f"{class_name}_base_{i:04d}.png")
            save_png(render_prototype(proto, size, rng), os.path.join(out_dir, rel))
            base_rows.append(ManifestRow(path=rel, genre=class_name, domain="painting"))
        for i in range(per_class_source):
            proto = protos[rng.integers(len(protos))]
            rel = os.path.join("images", f"{class_name}_src_{i:04d}.png")
            save_png(render_prototype(proto, size, rng), os.path.join(out_dir, rel))
            source_rows.append(ManifestRow(path=rel, genre=class_name, domain="normal_photo"))

    base_path = os.path.join(out_dir, "base_manifest.tsv")
    source_path = os.path.join(out_dir, "source_manifest.tsv")
    write_manifest(base_rows, base_path)
    write_manifest(source_rows, source_path)
    return base_path, source_path
