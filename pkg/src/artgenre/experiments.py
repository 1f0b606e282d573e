"""Manifest split logic and the train-set composition operators.

All operations are pure (rows in, rows out), seeded, and never touch the
test split once assigned; callers can assert test-set purity on every
emitted manifest.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .manifest import check_unique_paths


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_train_test(rows, ratio: float = 0.8, seed: int = 0):
    """Stratified per-genre split; train gets round(ratio * n) rows of each class.

    A class with fewer than two rows cannot stratify: it goes entirely to
    train with a warning.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    by_genre = {}
    for i, row in enumerate(rows):
        by_genre.setdefault(row.genre, []).append(i)
    assignment = {}
    for genre in sorted(by_genre):
        idx = np.array(by_genre[genre])
        if len(idx) < 2:
            warnings.warn(f"class {genre!r} has {len(idx)} row(s); assigning all to train")
            for i in idx:
                assignment[i] = "train"
            continue
        perm = rng.permutation(len(idx))
        n_train = _round_half_up(ratio * len(idx))
        for j, i in enumerate(idx[perm]):
            assignment[i] = "train" if j < n_train else "test"
    return [row.with_split(assignment[i]) for i, row in enumerate(rows)]


def holdout_by_style(rows, styles):
    """Every row whose style is in styles goes to test; all others train."""
    styles = set(styles)
    known = {row.style for row in rows}
    unknown = styles - known
    if unknown:
        raise ValueError(f"style(s) not present in manifest: {sorted(unknown)}")
    return [row.with_split("test" if row.style in styles else "train") for row in rows]


def cap_per_class(rows, cap: int | None, seed: int = 0):
    """Keep at most cap train rows per genre (seeded uniform subsample); test rows untouched."""
    if cap is None:
        return list(rows)
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    rng = np.random.default_rng(seed)
    train_by_genre = {}
    for i, row in enumerate(rows):
        if row.split == "train":
            train_by_genre.setdefault(row.genre, []).append(i)
    keep = set()
    for genre in sorted(train_by_genre):
        idx = train_by_genre[genre]
        if len(idx) <= cap:
            keep.update(idx)
        else:
            chosen = rng.choice(len(idx), size=cap, replace=False)
            keep.update(idx[c] for c in chosen)
    return [row for i, row in enumerate(rows) if row.split != "train" or i in keep]


@dataclass(frozen=True)
class AdditionReport:
    added_per_class: dict
    added_total: int
    paintings_in_train: int

    @property
    def added_image_ratio(self) -> float:
        """Injected rows over painting train rows, in percent."""
        if self.paintings_in_train == 0:
            return 0.0
        return 100.0 * self.added_total / self.paintings_in_train


def add_domain_images(rows, source_rows, class_counts, seed: int = 0):
    """Append up to class_counts[genre] source rows per class into the train split.

    Sources short of the request contribute everything they have (with a
    warning). Returns (rows, AdditionReport).
    """
    rng = np.random.default_rng(seed)
    paintings_in_train = sum(1 for r in rows if r.split == "train" and r.domain == "painting")
    by_genre = {}
    for row in source_rows:
        by_genre.setdefault(row.genre, []).append(row)
    out = list(rows)
    added_per_class = {}
    for genre in sorted(class_counts):
        want = class_counts[genre]
        pool = by_genre.get(genre, [])
        if len(pool) < want:
            warnings.warn(
                f"source has {len(pool)} rows for class {genre!r}, requested {want}; adding all"
            )
            chosen = list(range(len(pool)))
        else:
            chosen = sorted(rng.choice(len(pool), size=want, replace=False))
        added_per_class[genre] = len(chosen)
        for i in chosen:
            out.append(pool[i].with_split("train"))
    check_unique_paths(out)
    report = AdditionReport(
        added_per_class=added_per_class,
        added_total=sum(added_per_class.values()),
        paintings_in_train=paintings_in_train,
    )
    return out, report
