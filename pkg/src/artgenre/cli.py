"""Single entry point exposing every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage error, 2 runtime failure. All outputs are
written atomically (temp file + rename), so failures never leave partial
files behind.
"""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import augment as augment_mod
from . import classify as classify_mod
from . import descriptors as desc_mod
from ._util import atomic_write_text
from .image import Image, load_image, resize_bilinear, save_png
from .laplacian import TransferParams, laplacian_style_transfer
from .manifest import read_manifest, write_manifest
from .metrics import MetricsReport, confusion_matrix, topk_accuracy
from .neural import StyleConfig, neural_style_transfer
from .protocol import ProtocolConfig, run_protocol
from .pyramid import build_laplacian_pyramid, read_pyramid, reconstruct, write_pyramid


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _common(parser):
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument(
        "--threads", type=int, default=None, help="worker pool width (default: logical cores)"
    )
    parser.add_argument("--verbose", action="store_true")
    return parser


def _build_parser():
    root = _Parser(prog="artgenre", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    stylize = sub.add_parser("stylize", help="style transfer").add_subparsers(
        dest="method", required=True
    )
    lap = _common(stylize.add_parser("laplacian", help="pyramid gradient-histogram transfer"))
    lap.add_argument("--subject", required=True)
    lap.add_argument("--reference", required=True)
    lap.add_argument("--levels", type=int, default=7)
    lap.add_argument("--iterations", type=int, default=10)
    lap.add_argument("--bins", type=int, default=256)
    lap.add_argument("--color-mode", choices=("per_channel", "luminance"), default="per_channel")
    lap.add_argument("--out", required=True)

    neu = _common(stylize.add_parser("neural", help="pixel-descent transfer"))
    neu.add_argument("--subject", required=True)
    neu.add_argument("--reference", required=True)
    neu.add_argument("--net", default="builtin", help="network file, or 'builtin'")
    neu.add_argument("--alpha", type=float, default=1.0)
    neu.add_argument("--beta", type=float, default=1000.0)
    neu.add_argument("--iters", type=int, default=100)
    neu.add_argument("--step", type=float, default=1.0)
    neu.add_argument("--size", type=int, default=224, help="working resolution")
    neu.add_argument("--out", required=True)
    neu.add_argument("--loss-log", default=None, help="CSV of the loss trajectory")

    pyr = sub.add_parser("pyramid", help="multi-scale decomposition").add_subparsers(
        dest="action", required=True
    )
    pb = _common(pyr.add_parser("build"))
    pb.add_argument("--image", required=True)
    pb.add_argument("--levels", type=int, default=7)
    pb.add_argument("--out", required=True)
    pr = _common(pyr.add_parser("reconstruct"))
    pr.add_argument("--pyramid", required=True)
    pr.add_argument("--out", required=True)

    feat = sub.add_parser("features", help="descriptor extraction").add_subparsers(
        dest="action", required=True
    )
    fx = _common(feat.add_parser("extract"))
    fx.add_argument("--descriptor", choices=("phog", "plbp"), required=True)
    fx.add_argument("--manifest", required=True)
    fx.add_argument("--split", choices=("train", "test", "all"), default="all")
    fx.add_argument("--image-root", default=None, help="default: manifest directory")
    fx.add_argument("--out", required=True)

    cls = sub.add_parser("classify", help="train / predict / search").add_subparsers(
        dest="action", required=True
    )
    ct = _common(cls.add_parser("train"))
    ct.add_argument("--features", required=True)
    ct.add_argument("--labels", required=True)
    ct.add_argument("--model", required=True)
    ct.add_argument("--classifier", choices=("softmax", "svm"), default="softmax")
    ct.add_argument("--l2", type=float, default=1e-4)
    ct.add_argument("--epochs", type=int, default=200)
    ct.add_argument("--c-reg", type=float, default=1.0)
    ct.add_argument("--gamma", type=float, default=0.5)
    cp = _common(cls.add_parser("predict"))
    cp.add_argument("--features", required=True)
    cp.add_argument("--labels", default=None, help="optional; prints accuracy when given")
    cp.add_argument("--model", required=True)
    cp.add_argument("--out", required=True, help="score matrix output")
    cg = _common(cls.add_parser("gridsearch"))
    cg.add_argument("--features", required=True)
    cg.add_argument("--labels", required=True)
    cg.add_argument("--model", default=None, help="optionally refit on the best point")
    cg.add_argument("--folds", type=int, default=5)
    cg.add_argument("--c-grid", default=None, help="comma-separated C values")
    cg.add_argument("--gamma-grid", default=None, help="comma-separated gamma values")
    cg.add_argument("--out", default=None, help="JSON result file")

    aug = _common(sub.add_parser("augment", help="flips and small rotations"))
    aug.add_argument("--manifest", required=True)
    aug.add_argument("--ops", required=True, help="e.g. hflip,rot3,rot-3")
    aug.add_argument("--out-dir", required=True)
    aug.add_argument("--out-manifest", required=True)
    aug.add_argument("--image-root", default=None)

    exp = sub.add_parser("experiment", help="domain-transfer protocol").add_subparsers(
        dest="action", required=True
    )
    er = _common(exp.add_parser("run"))
    er.add_argument("--config", required=True)
    er.add_argument("--out", required=True, help="output directory")
    es = _common(exp.add_parser("synth", help="generate the desk-scale synthetic corpus"))
    es.add_argument("--out-dir", required=True)
    es.add_argument("--per-class-base", type=int, default=60)
    es.add_argument("--per-class-source", type=int, default=120)
    es.add_argument("--size", type=int, default=64)

    met = sub.add_parser("metrics", help="evaluation reports").add_subparsers(
        dest="action", required=True
    )
    mr = _common(met.add_parser("report"))
    mr.add_argument("--scores", required=True, help="score matrix file")
    mr.add_argument("--labels", required=True)
    mr.add_argument("--kmax", type=int, default=5)
    mr.add_argument("--out", default=None, help="JSON report file")

    return root


# ---------------------------------------------------------------------------
# Label sidecar files: '# classes:' header, then one class id per row.


def _write_labels(path, labels, class_names):
    lines = ["# classes:" + "\t".join(class_names)]
    lines.extend(str(int(v)) for v in labels)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_labels(path):
    class_names = None
    ids = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# classes:"):
                class_names = tuple(line[len("# classes:") :].split("\t"))
            elif line and not line.startswith("#"):
                ids.append(int(line))
    if class_names is None:
        raise ValueError(f"{path}: missing '# classes:' header")
    return np.array(ids, dtype=np.int64), class_names


def _load_dataset(features_path, labels_path):
    matrix, _ = desc_mod.read_feature_matrix(features_path)
    labels, class_names = _read_labels(labels_path)
    return classify_mod.LabeledDataset(matrix, labels, class_names)


# ---------------------------------------------------------------------------
# Handlers


def _run_stylize_laplacian(args):
    params = TransferParams(
        levels=args.levels,
        iterations=args.iterations,
        bins=args.bins,
        color_mode=args.color_mode,
    )
    out = laplacian_style_transfer(load_image(args.subject), load_image(args.reference), params)
    save_png(out, args.out)
    if args.verbose:
        print(f"wrote {args.out}")


def _run_stylize_neural(args):
    if args.net == "builtin":
        from .convnet import builtin_network

        net = builtin_network(in_channels=3, seed=args.seed)
    else:
        from .convnet import load_network

        net = load_network(args.net)
    size = net.input_size or (args.size, args.size)

    def prepare(path):
        img = resize_bilinear(load_image(path), size[1], size[0])
        if img.channels == 1 and net.in_channels == 3:
            img = Image(np.repeat(img.data, 3, axis=0))
        if img.channels != net.in_channels:
            raise ValueError(f"network expects {net.in_channels}-channel input")
        return img

    subject = prepare(args.subject)
    reference = prepare(args.reference)
    config = StyleConfig(
        alpha=args.alpha,
        beta=args.beta,
        iterations=args.iters,
        step_size=args.step,
        init_seed=args.seed,
    )
    result = neural_style_transfer(subject, reference, net, config)
    save_png(result.image, args.out)
    if args.loss_log:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(result.loss_trajectory):
            writer.writerow([i, repr(float(loss))])
        atomic_write_text(args.loss_log, buf.getvalue())
    if args.verbose:
        print(f"wrote {args.out}")


def _run_pyramid_build(args):
    pyr = build_laplacian_pyramid(load_image(args.image), args.levels)
    write_pyramid(pyr, args.out)
    if args.verbose:
        print(f"wrote {args.out} ({pyr.levels} levels)")


def _run_pyramid_reconstruct(args):
    img = reconstruct(read_pyramid(args.pyramid))
    save_png(Image(np.clip(img.data, 0.0, 1.0)), args.out)
    if args.verbose:
        print(f"wrote {args.out}")


def _run_features_extract(args):
    rows = read_manifest(args.manifest)
    if args.split != "all":
        rows = [r for r in rows if r.split == args.split]
    if not rows:
        raise ValueError("no manifest rows selected")
    root = args.image_root or os.path.dirname(os.path.abspath(args.manifest)) or "."
    cfg = desc_mod.DescriptorConfig()
    class_names = tuple(sorted({r.genre for r in rows}))
    class_of = {name: i for i, name in enumerate(class_names)}

    from concurrent.futures import ThreadPoolExecutor

    def compute(row):
        return desc_mod.extract(load_image(os.path.join(root, row.path)), args.descriptor, cfg)

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        vectors = list(pool.map(compute, rows))
    matrix = np.array([v.values for v in vectors])
    desc_mod.write_feature_matrix(args.out, matrix, args.descriptor, cfg.fingerprint())
    _write_labels(args.out + ".labels", [class_of[r.genre] for r in rows], class_names)
    if args.verbose:
        print(f"wrote {args.out} ({matrix.shape[0]}x{matrix.shape[1]}) and {args.out}.labels")


def _run_classify_train(args):
    ds = _load_dataset(args.features, args.labels)
    if args.classifier == "softmax":
        model = classify_mod.train_softmax(ds, l2=args.l2, epochs=args.epochs, seed=args.seed)
    else:
        model = classify_mod.train_rbf_svm(ds, c_reg=args.c_reg, gamma=args.gamma)
    classify_mod.save_model(model, args.model)
    if args.verbose:
        print(f"wrote {args.model}")


def _run_classify_predict(args):
    matrix, _ = desc_mod.read_feature_matrix(args.features)
    model = classify_mod.load_model(args.model)
    scores = classify_mod.predict_scores(model, matrix)
    desc_mod.write_feature_matrix(args.out, scores, "scores")
    if args.labels:
        labels, _ = _read_labels(args.labels)
        acc = topk_accuracy(scores, labels, 1)
        print(f"top-1 accuracy: {100 * acc:.2f}%")
    if args.verbose:
        print(f"wrote {args.out}")


def _parse_grid(text):
    return tuple(float(v) for v in text.split(",")) if text else None


def _run_classify_gridsearch(args):
    ds = _load_dataset(args.features, args.labels)
    kwargs = {"folds": args.folds, "seed": args.seed}
    c_grid = _parse_grid(args.c_grid)
    gamma_grid = _parse_grid(args.gamma_grid)
    if c_grid:
        kwargs["c_grid"] = c_grid
    if gamma_grid:
        kwargs["gamma_grid"] = gamma_grid
    spec = classify_mod.GridSearchSpec(**kwargs)
    c_reg, gamma, acc = classify_mod.grid_search(ds, spec, workers=args.threads)
    print(f"selected C={c_reg:g} gamma={gamma:g} (cv accuracy {100 * acc:.2f}%)")
    if args.out:
        atomic_write_text(
            args.out,
            json.dumps({"c_reg": c_reg, "gamma": gamma, "cv_accuracy": acc}, sort_keys=True)
            + "\n",
        )
    if args.model:
        model = classify_mod.train_rbf_svm(ds, c_reg=c_reg, gamma=gamma)
        classify_mod.save_model(model, args.model)


def _run_augment(args):
    rows = read_manifest(args.manifest)
    ops = augment_mod.parse_ops(args.ops)
    root = args.image_root or os.path.dirname(os.path.abspath(args.manifest)) or "."
    new_rows, errors = augment_mod.augment_manifest(
        rows, ops, args.out_dir, image_root=root, workers=args.threads
    )
    write_manifest(new_rows, args.out_manifest)
    for path, message in errors:
        print(f"warning: {path}: {message}", file=sys.stderr)
    if args.verbose:
        print(f"wrote {args.out_manifest} ({len(new_rows)} rows, {len(errors)} failures)")


def _run_experiment(args):
    config = ProtocolConfig.from_file(args.config)
    report = run_protocol(config, workers=args.threads)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "report.json"), report.to_json())
    atomic_write_text(os.path.join(args.out, "report.txt"), report.format_table())
    print(report.format_table(), end="")
    for key, message in sorted(report.errors.items()):
        print(f"warning: cell {key[0]}/{key[1]}: {message}", file=sys.stderr)


def _run_experiment_synth(args):
    from .synthetic import generate_corpus

    base, source = generate_corpus(
        args.out_dir,
        per_class_base=args.per_class_base,
        per_class_source=args.per_class_source,
        size=args.size,
        seed=args.seed,
    )
    print(base)
    print(source)


def _run_metrics_report(args):
    scores, _ = desc_mod.read_feature_matrix(args.scores)
    labels, class_names = _read_labels(args.labels)
    kmax = min(args.kmax, scores.shape[1])
    topk = {k: topk_accuracy(scores, labels, k) for k in range(1, kmax + 1)}
    preds = np.argmax(scores, axis=1)
    report = MetricsReport(topk=topk, confusion=confusion_matrix(preds, labels, len(class_names)))
    for k in sorted(topk):
        print(f"top-{k}: {100 * topk[k]:.2f}%")
    if args.out:
        atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


_HANDLERS = {
    ("stylize", "laplacian"): _run_stylize_laplacian,
    ("stylize", "neural"): _run_stylize_neural,
    ("pyramid", "build"): _run_pyramid_build,
    ("pyramid", "reconstruct"): _run_pyramid_reconstruct,
    ("features", "extract"): _run_features_extract,
    ("classify", "train"): _run_classify_train,
    ("classify", "predict"): _run_classify_predict,
    ("classify", "gridsearch"): _run_classify_gridsearch,
    ("augment", None): _run_augment,
    ("experiment", "run"): _run_experiment,
    ("experiment", "synth"): _run_experiment_synth,
    ("metrics", "report"): _run_metrics_report,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if getattr(args, "threads", None) is None:
        args.threads = os.cpu_count()
    key = (args.command, getattr(args, "method", None) or getattr(args, "action", None))
    handler = _HANDLERS[key]
    try:
        handler(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"artgenre: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
