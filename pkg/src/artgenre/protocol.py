"""The domain-transfer experiment runner.

For each training cap and each injection source (plus a no-injection
baseline) the runner splits the painting manifest, caps the train side,
optionally injects source-domain rows, trains the configured pipeline and
evaluates on the untouched test split. Repeating over several seeds gives
the run-to-run deviation that decides whether an improvement is real.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import descriptors
from .classify import LabeledDataset, predict_scores, train_rbf_svm, train_softmax
from .experiments import add_domain_images, cap_per_class, split_train_test
from .image import load_image
from .manifest import read_manifest
from .metrics import confusion_matrix, stochastic_stats, topk_accuracy

DEFAULT_CAPS = (250, 500, 1000, 5000, None)  # None means "all"
DEFAULT_TRANSFER_CLASSES = {"Cityscape": 2903, "Landscape": 4467, "Portrait": 4002}


@dataclass(frozen=True)
class ProtocolConfig:
    base_manifest: str
    sources: dict = field(default_factory=dict)  # domain label -> manifest path
    caps: tuple = DEFAULT_CAPS
    transfer_classes: dict = field(default_factory=lambda: dict(DEFAULT_TRANSFER_CLASSES))
    descriptor: str = "phog"
    classifier: str = "softmax"
    classifier_params: dict = field(default_factory=dict)
    split_ratio: float = 0.8
    seeds: tuple = (0,)
    split_seed: int | None = None  # pin the split across seeds; None reuses each run seed
    topk: tuple = (1,)
    image_root: str = "."

    def __post_init__(self):
        caps = tuple(self.caps)
        numeric = [c for c in caps if c is not None]
        if any(c <= 0 for c in numeric):
            raise ValueError("caps must be positive")
        if list(numeric) != sorted(numeric):
            raise ValueError("caps must be ascending")
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "seeds", tuple(self.seeds))
        # top-1 drives every derived table row, so it is always evaluated
        object.__setattr__(self, "topk", tuple(sorted({1, *self.topk})))
        if self.classifier not in ("softmax", "svm"):
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.descriptor not in ("phog", "plbp"):
            raise ValueError(f"unknown descriptor {self.descriptor!r}")

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        caps = tuple(None if c in (None, "all", "All") else int(c) for c in raw.get("caps", DEFAULT_CAPS))
        return cls(
            base_manifest=raw["base_manifest"],
            sources=dict(raw.get("sources", {})),
            caps=caps,
            transfer_classes=dict(raw.get("transfer_classes", DEFAULT_TRANSFER_CLASSES)),
            descriptor=raw.get("descriptor", "phog"),
            classifier=raw.get("classifier", "softmax"),
            classifier_params=dict(raw.get("classifier_params", {})),
            split_ratio=float(raw.get("split_ratio", 0.8)),
            seeds=tuple(int(s) for s in raw.get("seeds", [0])),
            split_seed=None if raw.get("split_seed") is None else int(raw["split_seed"]),
            topk=tuple(int(k) for k in raw.get("topk", [1])),
            image_root=raw.get("image_root", os.path.dirname(os.path.abspath(path)) or "."),
        )


def _cap_name(cap):
    return "All" if cap is None else str(cap)


class _FeatureStore:
    """Descriptor vectors per manifest path, extracted once and shared across cells."""

    def __init__(self, descriptor, image_root, workers=None):
        self.descriptor = descriptor
        self.image_root = image_root
        self.workers = workers
        self._cache = {}

    def ensure(self, paths):
        missing = [p for p in dict.fromkeys(paths) if p not in self._cache]
        if not missing:
            return

        def compute(path):
            img = load_image(os.path.join(self.image_root, path))
            return descriptors.extract(img, self.descriptor).values

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for path, vec in zip(missing, pool.map(compute, missing)):
                self._cache[path] = vec

    def matrix(self, paths):
        self.ensure(paths)
        return np.array([self._cache[p] for p in paths])


def _train_and_eval(rows, store, classes, config, seed):
    class_of = {name: i for i, name in enumerate(classes)}
    train_rows = [r for r in rows if r.split == "train"]
    test_rows = [r for r in rows if r.split == "test"]
    if not train_rows or not test_rows:
        raise ValueError("protocol cell needs both train and test rows")
    x_train = store.matrix([r.path for r in train_rows])
    y_train = np.array([class_of[r.genre] for r in train_rows])
    x_test = store.matrix([r.path for r in test_rows])
    y_test = np.array([class_of[r.genre] for r in test_rows])

    ds = LabeledDataset(x_train, y_train, tuple(classes))
    params = dict(config.classifier_params)
    if config.classifier == "softmax":
        model = train_softmax(
            ds,
            l2=float(params.get("l2", 1e-4)),
            epochs=int(params.get("epochs", 200)),
            seed=seed,
        )
    else:
        model = train_rbf_svm(
            ds, c_reg=float(params.get("c_reg", 1.0)), gamma=float(params.get("gamma", 0.5))
        )
    scores = predict_scores(model, x_test)
    accs = {k: topk_accuracy(scores, y_test, k) for k in config.topk}
    preds = np.argmax(scores, axis=1)
    conf = confusion_matrix(preds, y_test, len(classes))
    return accs, conf


@dataclass
class ProtocolReport:
    classes: tuple
    caps: tuple
    domains: tuple  # injection sources, baseline "none" first
    seeds: tuple
    accuracy: dict  # (domain, cap_name) -> list of top-1 accuracies per seed
    added_ratio: dict  # (domain, cap_name) -> added-image ratio percent
    errors: dict  # (domain, cap_name) -> message

    def mean_accuracy(self, domain, cap) -> float | None:
        runs = self.accuracy.get((domain, _cap_name(cap)))
        return None if not runs else stochastic_stats(runs)[0]

    def std_accuracy(self, domain, cap) -> float | None:
        runs = self.accuracy.get((domain, _cap_name(cap)))
        if not runs:
            return None
        return stochastic_stats(runs)[1]

    def improvement(self, domain, cap) -> float | None:
        """Mean accuracy minus the baseline's, in percentage points."""
        ours = self.mean_accuracy(domain, cap)
        base = self.mean_accuracy("none", cap)
        if ours is None or base is None:
            return None
        return 100.0 * (ours - base)

    def avg_improvement(self, domain) -> float | None:
        vals = [self.improvement(domain, cap) for cap in self.caps]
        vals = [v for v in vals if v is not None]
        return None if not vals else sum(vals) / len(vals)

    def best_improvement(self, cap) -> float | None:
        vals = [self.improvement(d, cap) for d in self.domains if d != "none"]
        vals = [v for v in vals if v is not None]
        return None if not vals else max(vals)

    def to_dict(self):
        cells = {}
        for (domain, cap_name), runs in sorted(self.accuracy.items()):
            mean, std = stochastic_stats(runs)
            cells[f"{domain}/{cap_name}"] = {
                "runs": runs,
                "mean": mean,
                "std": std,
                "added_ratio": self.added_ratio.get((domain, cap_name)),
            }
        for key, msg in sorted(self.errors.items()):
            cells[f"{key[0]}/{key[1]}"] = {"error": msg}
        return {
            "classes": list(self.classes),
            "caps": [_cap_name(c) for c in self.caps],
            "domains": list(self.domains),
            "seeds": list(self.seeds),
            "cells": cells,
            "avg_improvement": {
                d: self.avg_improvement(d) for d in self.domains if d != "none"
            },
            "best_improvement": {
                _cap_name(c): self.best_improvement(c) for c in self.caps
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def format_table(self) -> str:
        """Human-readable recognition-rate table (percent, two decimals)."""
        cap_names = [_cap_name(c) for c in self.caps]
        header = ["Method"] + cap_names + ["Avg. improv."]
        rows = []
        for domain in self.domains:
            cells = []
            for cap in self.caps:
                mean = self.mean_accuracy(domain, cap)
                if mean is None:
                    cells.append("err")
                    continue
                std = self.std_accuracy(domain, cap)
                cell = f"{100 * mean:.2f}"
                if std is not None:
                    cell += f" +/-{100 * std:.2f}"
                cells.append(cell)
            avg = self.avg_improvement(domain)
            rows.append([domain] + cells + ["--" if avg is None else f"{avg:.2f}"])
        best = []
        ratios = []
        for cap in self.caps:
            b = self.best_improvement(cap)
            best.append("--" if b is None else f"{b:.2f}")
            cell_ratios = {
                self.added_ratio.get((d, _cap_name(cap)))
                for d in self.domains
                if d != "none" and (d, _cap_name(cap)) in self.added_ratio
            }
            if not cell_ratios:
                ratios.append("--")
            elif len(cell_ratios) == 1:
                ratios.append(f"{cell_ratios.pop():.2f}")
            else:
                ratios.append("/".join(f"{r:.2f}" for r in sorted(cell_ratios)))
        rows.append(["Best-improvement"] + best + ["--"])
        rows.append(["Added image ratio[%]"] + ratios + ["--"])

        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*header)] + [fmt.format(*r) for r in rows]
        return "\n".join(lines) + "\n"


def run_protocol(config: ProtocolConfig, workers=None) -> ProtocolReport:
    """Run every (cap, source) cell across the configured seeds."""
    base_rows = read_manifest(config.base_manifest)
    source_rows = {}
    source_errors = {}
    for domain, path in config.sources.items():
        try:
            source_rows[domain] = read_manifest(path)
        except OSError as exc:
            source_errors[domain] = str(exc)

    classes = tuple(sorted({r.genre for r in base_rows}))
    unknown = set(config.transfer_classes) - set(classes)
    if unknown:
        raise ValueError(f"transfer classes not in the manifest's genres: {sorted(unknown)}")
    store = _FeatureStore(config.descriptor, config.image_root, workers=workers)
    domains = ("none",) + tuple(sorted(config.sources))

    accuracy = {}
    added_ratio = {}
    errors = dict()
    for domain, msg in source_errors.items():
        for cap in config.caps:
            errors[(domain, _cap_name(cap))] = msg

    # one feature pass up front; cells then only read the shared cache
    all_paths = [r.path for r in base_rows]
    for rows in source_rows.values():
        all_paths.extend(r.path for r in rows)
    store.ensure(all_paths)

    tasks = []
    for seed in config.seeds:
        split_seed = seed if config.split_seed is None else config.split_seed
        split = split_train_test(base_rows, ratio=config.split_ratio, seed=split_seed)
        for cap in config.caps:
            capped = cap_per_class(split, cap, seed=seed)
            for domain in domains:
                if domain != "none" and domain not in source_rows:
                    continue
                tasks.append((seed, cap, domain, capped))

    def run_cell(task):
        seed, cap, domain, capped = task
        key = (domain, _cap_name(cap))
        try:
            rows = capped
            ratio = None
            if domain != "none":
                rows, report = add_domain_images(
                    capped, source_rows[domain], config.transfer_classes, seed=seed
                )
                ratio = report.added_image_ratio
            accs, _ = _train_and_eval(rows, store, classes, config, seed)
            return key, accs[1], ratio, None
        except (OSError, ValueError) as exc:
            return key, None, None, str(exc)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_cell, tasks))
    for key, acc, ratio, error in results:
        if error is not None:
            errors[key] = error
            continue
        accuracy.setdefault(key, []).append(acc)
        if ratio is not None:
            added_ratio[key] = ratio

    return ProtocolReport(
        classes=classes,
        caps=config.caps,
        domains=domains,
        seeds=config.seeds,
        accuracy=accuracy,
        added_ratio=added_ratio,
        errors=errors,
    )
