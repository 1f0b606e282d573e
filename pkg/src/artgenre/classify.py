"""Classifiers over feature vectors.

Two backends share one prediction interface: multinomial logistic
regression trained by full-batch descent with backtracking (the fast
default), and a one-vs-rest RBF-kernel SVM trained by sequential minimal
optimization with cross-validated grid search. Feature standardization
(train-set mean/variance) is baked into every trained model.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_MODEL_MAGIC = b"AGCM"
_KIND_SOFTMAX, _KIND_SVM = 1, 2
_MAX_HALVINGS = 20


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) ints in [0, n_classes)
    class_names: tuple

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or y.ndim != 1 or f.shape[0] != y.shape[0]:
            raise ValueError("features and labels disagree")
        if not np.isfinite(f).all():
            raise ValueError("non-finite features")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise ValueError("label out of range")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _standardize_fit(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


# ---------------------------------------------------------------------------
# Softmax (multinomial logistic regression)


@dataclass(frozen=True)
class SoftmaxModel:
    weights: np.ndarray  # (d + 1, C); last row is the bias
    mean: np.ndarray
    std: np.ndarray
    class_names: tuple


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_softmax(
    ds: LabeledDataset, l2: float = 1e-4, epochs: int = 200, seed: int = 0, init_scale: float = 0.0
) -> SoftmaxModel:
    """Full-batch descent on the regularized cross-entropy; backtracking keeps it non-increasing.

    Weights start at zero (zero epochs therefore predict uniformly); seed
    only matters when init_scale > 0.
    """
    if ds.n_classes < 2 or len(np.unique(ds.labels)) < 2:
        raise ValueError("training needs at least 2 classes present")
    n, d = ds.features.shape
    c = ds.n_classes
    mean, std = _standardize_fit(ds.features)
    x = np.hstack([(ds.features - mean) / std, np.ones((n, 1))])
    onehot = np.zeros((n, c))
    onehot[np.arange(n), ds.labels] = 1.0

    w = np.zeros((d + 1, c))
    if init_scale > 0:
        w = np.random.default_rng(seed).standard_normal((d + 1, c)) * init_scale

    def loss_grad(wm):
        p = _softmax(x @ wm)
        ll = -np.log(np.maximum(p[np.arange(n), ds.labels], 1e-300)).mean()
        reg = 0.5 * l2 * float(np.sum(wm[:-1] ** 2))
        g = x.T @ (p - onehot) / n
        g[:-1] += l2 * wm[:-1]
        return ll + reg, g

    loss, grad = loss_grad(w)
    step = 1.0
    for _ in range(epochs):
        for halving in range(_MAX_HALVINGS + 1):
            cand = w - step * grad
            cand_loss, cand_grad = loss_grad(cand)
            if np.isfinite(cand_loss) and cand_loss <= loss:
                w, loss, grad = cand, cand_loss, cand_grad
                if halving == 0:
                    step *= 1.3
                break
            step *= 0.5
    return SoftmaxModel(weights=w, mean=mean, std=std, class_names=ds.class_names)


# ---------------------------------------------------------------------------
# RBF-kernel SVM trained by sequential minimal optimization


@dataclass(frozen=True)
class SvmBinary:
    sv_indices: np.ndarray  # rows of the training-feature store
    coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float


@dataclass(frozen=True)
class SvmModel:
    train_features: np.ndarray  # standardized training rows
    per_class: tuple  # SvmBinary per class, one-vs-rest
    gamma: float
    c_reg: float
    mean: np.ndarray
    std: np.ndarray
    class_names: tuple


def rbf_kernel(a, b, gamma):
    """exp(-gamma * ||a_i - b_j||^2) for all row pairs."""
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _smo(kmat, y, c_reg, tol=1e-3, eps=1e-12, max_rounds=10000):
    """Platt-style SMO on a precomputed kernel matrix; returns (alphas, bias).

    Decision values follow u_i = sum_j alpha_j y_j K_ij + b.
    """
    n = len(y)
    alphas = np.zeros(n)
    bias = 0.0
    errors = -y.astype(np.float64)  # u - y with u == 0 initially

    def take_step(i1, i2):
        nonlocal bias
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - c_reg), min(c_reg, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(c_reg, c_reg + a2 - a1)
        if lo >= hi:
            return False
        k11, k12, k22 = kmat[i1, i1], kmat[i1, i2], kmat[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # Degenerate curvature: evaluate the objective at both clip ends.
            f1 = y1 * (e1 + bias) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 + bias) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - eps:
                a2_new = lo
            elif obj_lo > obj_hi + eps:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < eps * (a2_new + a2 + eps):
            return False
        a1_new = a1 + s * (a2 - a2_new)

        b1 = bias - e1 - y1 * (a1_new - a1) * k11 - y2 * (a2_new - a2) * k12
        b2 = bias - e2 - y1 * (a1_new - a1) * k12 - y2 * (a2_new - a2) * k22
        if 0 < a1_new < c_reg:
            new_bias = b1
        elif 0 < a2_new < c_reg:
            new_bias = b2
        else:
            new_bias = 0.5 * (b1 + b2)

        delta = (
            y1 * (a1_new - a1) * kmat[i1] + y2 * (a2_new - a2) * kmat[i2] + (new_bias - bias)
        )
        errors[:] += delta
        alphas[i1], alphas[i2] = a1_new, a2_new
        bias = new_bias
        errors[i1] = _decision(i1) - y1
        errors[i2] = _decision(i2) - y2
        return True

    def _decision(i):
        return float(alphas @ (y * kmat[i])) + bias

    def examine(i2):
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if (r2 < -tol and a2 < c_reg) or (r2 > tol and a2 > 0):
            nonbound = np.flatnonzero((alphas > 0) & (alphas < c_reg))
            if len(nonbound) > 1:
                i1 = int(nonbound[np.argmax(np.abs(errors[nonbound] - e2))])
                if take_step(i1, i2):
                    return True
            for i1 in nonbound:
                if take_step(int(i1), i2):
                    return True
            for i1 in range(n):
                if take_step(i1, i2):
                    return True
        return False

    examine_all = True
    changed = 0
    for _ in range(max_rounds):
        changed = 0
        targets = range(n) if examine_all else np.flatnonzero((alphas > 0) & (alphas < c_reg))
        for i in targets:
            changed += examine(int(i))
        if examine_all:
            examine_all = False
        elif changed == 0:
            examine_all = True
            targets = range(n)
            changed = sum(examine(i) for i in targets)
            if changed == 0:
                break
    return alphas, bias


def dual_objective(kmat, y, alphas):
    """SVM dual value: sum(alpha) - 0.5 * alpha' (yy' * K) alpha."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ kmat @ ay)


def kkt_residual(kmat, y, alphas, bias, c_reg):
    """Maximum violation of the optimality conditions."""
    u = kmat @ (alphas * y) + bias
    margins = y * u
    res = 0.0
    for i in range(len(y)):
        if alphas[i] <= 0:
            res = max(res, 1.0 - margins[i])
        elif alphas[i] >= c_reg:
            res = max(res, margins[i] - 1.0)
        else:
            res = max(res, abs(1.0 - margins[i]))
    return res


def train_rbf_svm(ds: LabeledDataset, c_reg: float, gamma: float, tol: float = 1e-3) -> SvmModel:
    """One-vs-rest RBF SVM; each binary subproblem runs SMO to the KKT tolerance."""
    if not np.isfinite(ds.features).all():
        raise ValueError("non-finite features")
    if len(np.unique(ds.labels)) < 2:
        raise ValueError("training needs at least 2 classes present")
    mean, std = _standardize_fit(ds.features)
    x = (ds.features - mean) / std
    kmat = rbf_kernel(x, x, gamma)

    per_class = []
    for c in range(ds.n_classes):
        y = np.where(ds.labels == c, 1.0, -1.0)
        if np.all(y == y[0]):
            # Degenerate slice: constant decision with the majority sign.
            per_class.append(
                SvmBinary(sv_indices=np.array([], dtype=np.int64), coef=np.array([]), bias=float(y[0]))
            )
            continue
        alphas, bias = _smo(kmat, y, c_reg, tol=tol)
        sv = np.flatnonzero(alphas > 1e-12)
        per_class.append(SvmBinary(sv_indices=sv, coef=alphas[sv] * y[sv], bias=bias))
    return SvmModel(
        train_features=x,
        per_class=tuple(per_class),
        gamma=gamma,
        c_reg=c_reg,
        mean=mean,
        std=std,
        class_names=ds.class_names,
    )


# ---------------------------------------------------------------------------
# Prediction


def predict_scores(model, features) -> np.ndarray:
    """Per-class score rows: probabilities for softmax, margins for the SVM."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != len(model.mean):
        raise ValueError(f"feature length {x.shape[1]} does not match model ({len(model.mean)})")
    z = (x - model.mean) / model.std
    if isinstance(model, SoftmaxModel):
        return _softmax(np.hstack([z, np.ones((len(z), 1))]) @ model.weights)
    scores = np.empty((len(z), len(model.per_class)))
    for c, binary in enumerate(model.per_class):
        if len(binary.sv_indices) == 0:
            scores[:, c] = binary.bias
            continue
        k = rbf_kernel(z, model.train_features[binary.sv_indices], model.gamma)
        scores[:, c] = k @ binary.coef + binary.bias
    return scores


def predict_topk(model, features, k: int) -> np.ndarray:
    """Top-k class ids per row, descending score, ties broken by class id."""
    scores = predict_scores(model, features)
    c = scores.shape[1]
    if not 1 <= k <= c:
        raise ValueError(f"k must be in [1, {c}], got {k}")
    order = np.argsort(-scores, axis=1, kind="stable")  # stable: ties fall to lower class id
    return order[:, :k]


def predict_labels(model, features) -> np.ndarray:
    return predict_topk(model, features, 1)[:, 0]


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridSearchSpec:
    c_grid: tuple = tuple(float(2.0**e) for e in range(-5, 16, 2))
    gamma_grid: tuple = tuple(float(2.0**e) for e in range(-15, 4, 2))
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.c_grid or not self.gamma_grid:
            raise ValueError("grids must be nonempty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


def _stratified_folds(ds: LabeledDataset, folds: int, seed: int):
    """Fold ids per row, derived from content so row order does not matter.

    Rows are sorted by (label, feature bytes) before the seeded per-class
    round-robin; identical rows are interchangeable.
    """
    keys = tuple(ds.features[:, j] for j in range(ds.features.shape[1] - 1, -1, -1))
    order = np.lexsort(keys + (ds.labels,))
    fold_of = np.empty(len(order), dtype=np.int64)
    for attempt in range(5):
        rng = np.random.default_rng(seed + attempt)
        for c in np.unique(ds.labels):
            rows = order[ds.labels[order] == c]
            perm = rng.permutation(len(rows))
            fold_of[rows[perm]] = np.arange(len(rows)) % folds
        present = np.unique(ds.labels)
        ok = all(
            np.array_equal(np.unique(ds.labels[fold_of == f]), present) for f in range(folds)
        )
        if ok:
            return fold_of
    raise ValueError(f"could not build {folds} folds containing every class (5 attempts)")


def grid_search(ds: LabeledDataset, spec: GridSearchSpec = GridSearchSpec(), workers=None):
    """Cross-validated (C, gamma) selection; ties prefer smaller C, then smaller gamma.

    Returns (c_reg, gamma, cv_accuracy).
    """
    fold_of = _stratified_folds(ds, spec.folds, spec.seed)

    def cv_accuracy(point):
        c_reg, gamma = point
        hits = 0
        for f in range(spec.folds):
            tr = fold_of != f
            te = ~tr
            sub = LabeledDataset(ds.features[tr], ds.labels[tr], ds.class_names)
            model = train_rbf_svm(sub, c_reg, gamma)
            pred = predict_labels(model, ds.features[te])
            hits += int((pred == ds.labels[te]).sum())
        return hits / len(ds.labels)

    points = [(c, g) for c in sorted(spec.c_grid) for g in sorted(spec.gamma_grid)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        accs = list(pool.map(cv_accuracy, points))
    best = 0
    for i in range(1, len(points)):
        if accs[i] > accs[best]:
            best = i
    return points[best][0], points[best][1], accs[best]


# ---------------------------------------------------------------------------
# Model file I/O (versioned binary)


def _pack_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return struct.pack("<I", a.size) + a.tobytes()


def _unpack_array(blob, off):
    (n,) = struct.unpack_from("<I", blob, off)
    off += 4
    a = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
    return a, off + n * 8


def save_model(model, path) -> None:
    from ._util import atomic_write_bytes

    parts = [_MODEL_MAGIC, struct.pack("<I", 1)]
    names = "\t".join(model.class_names).encode("utf-8")
    if isinstance(model, SoftmaxModel):
        parts.append(struct.pack("<B", _KIND_SOFTMAX))
        parts.append(struct.pack("<I", len(names)) + names)
        parts.append(struct.pack("<II", *model.weights.shape))
        parts.append(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        parts.append(_pack_array(model.mean))
        parts.append(_pack_array(model.std))
    elif isinstance(model, SvmModel):
        parts.append(struct.pack("<B", _KIND_SVM))
        parts.append(struct.pack("<I", len(names)) + names)
        parts.append(struct.pack("<dd", model.gamma, model.c_reg))
        parts.append(struct.pack("<II", *model.train_features.shape))
        parts.append(np.ascontiguousarray(model.train_features, dtype="<f8").tobytes())
        parts.append(_pack_array(model.mean))
        parts.append(_pack_array(model.std))
        parts.append(struct.pack("<I", len(model.per_class)))
        for binary in model.per_class:
            idx = np.ascontiguousarray(binary.sv_indices, dtype="<i8")
            parts.append(struct.pack("<Id", len(idx), binary.bias))
            parts.append(idx.tobytes())
            parts.append(np.ascontiguousarray(binary.coef, dtype="<f8").tobytes())
    else:
        raise TypeError(f"cannot save model of type {type(model).__name__}")
    atomic_write_bytes(path, b"".join(parts))


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported model version {version}")
    (kind,) = struct.unpack_from("<B", blob, 8)
    off = 9
    (name_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    class_names = tuple(blob[off : off + name_len].decode("utf-8").split("\t"))
    off += name_len
    if kind == _KIND_SOFTMAX:
        r, c = struct.unpack_from("<II", blob, off)
        off += 8
        w = np.frombuffer(blob, dtype="<f8", count=r * c, offset=off).reshape(r, c).copy()
        off += r * c * 8
        mean, off = _unpack_array(blob, off)
        std, off = _unpack_array(blob, off)
        return SoftmaxModel(weights=w, mean=mean, std=std, class_names=class_names)
    if kind == _KIND_SVM:
        gamma, c_reg = struct.unpack_from("<dd", blob, off)
        off += 16
        r, d = struct.unpack_from("<II", blob, off)
        off += 8
        feats = np.frombuffer(blob, dtype="<f8", count=r * d, offset=off).reshape(r, d).copy()
        off += r * d * 8
        mean, off = _unpack_array(blob, off)
        std, off = _unpack_array(blob, off)
        (n_cls,) = struct.unpack_from("<I", blob, off)
        off += 4
        per_class = []
        for _ in range(n_cls):
            n_sv, bias = struct.unpack_from("<Id", blob, off)
            off += 12
            idx = np.frombuffer(blob, dtype="<i8", count=n_sv, offset=off).copy()
            off += n_sv * 8
            coef = np.frombuffer(blob, dtype="<f8", count=n_sv, offset=off).copy()
            off += n_sv * 8
            per_class.append(SvmBinary(sv_indices=idx, coef=coef, bias=bias))
        return SvmModel(
            train_features=feats,
            per_class=tuple(per_class),
            gamma=gamma,
            c_reg=c_reg,
            mean=mean,
            std=std,
            class_names=class_names,
        )
    raise ValueError(f"{path}: unknown model kind {kind}")
