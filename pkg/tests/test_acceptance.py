"""Acceptance suite: one test per release criterion.

Each test pins the documented tolerance and runtime budget and prints a
PASS line (visible under `pytest -s` or `-v`) so the criteria can be
checked off one by one.
"""

import json
import time

import numpy as np
import pytest
from oracles import emd_1d, exhaustive_dual_max, reference_phog, reference_plbp

from artgenre.classify import (
    LabeledDataset,
    _smo,
    dual_objective,
    kkt_residual,
    predict_labels,
    rbf_kernel,
    train_rbf_svm,
)
from artgenre.cli import main as cli_main
from artgenre.convnet import Conv, FeatureNetwork, Pool, Relu, builtin_network
from artgenre.descriptors import DescriptorConfig, phog, plbp
from artgenre.experiments import add_domain_images
from artgenre.image import Image
from artgenre.laplacian import TransferParams, laplacian_style_transfer, level_histogram, match_level
from artgenre.manifest import ManifestRow
from artgenre.metrics import stochastic_stats, topk_accuracy
from artgenre.neural import StyleConfig, StyleObjective, gram, neural_style_transfer
from artgenre.pyramid import build_laplacian_pyramid, max_levels, reconstruct
from artgenre.synthetic import CLASS_NAMES, generate_corpus


class Budget:
    def __init__(self, seconds):
        self.limit = seconds
        self.start = time.perf_counter()

    def check(self):
        elapsed = time.perf_counter() - self.start
        assert elapsed < self.limit, f"runtime {elapsed:.1f}s exceeded budget {self.limit}s"
        return elapsed


def _report(number, name, budget):
    elapsed = budget.check()
    print(f"ACCEPTANCE {number:02d} ({name}): PASS [{elapsed:.2f}s]")


def test_c01_pyramid_identity():
    budget = Budget(10)
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        w = int(rng.integers(17, 225))
        h = int(rng.integers(17, 225))
        levels = int(rng.integers(2, min(7, max_levels(w, h)) + 1))
        channels = 1 if rng.random() < 0.5 else 3
        img = Image(rng.random((channels, h, w)))
        rec = reconstruct(build_laplacian_pyramid(img, levels))
        worst = max(worst, float(np.abs(rec.data - img.data).max()))
    assert worst <= 1e-6
    _report(1, "pyramid identity", budget)


def test_c02_laplacian_self_transfer_fixed_point():
    budget = Budget(10)
    rng = np.random.default_rng(102)
    params = TransferParams()  # 7 levels, 10 iterations, 256 bins
    for i in range(20):
        channels = 1 if i % 2 else 3
        img = Image(rng.random((channels, 64, 64)))
        out = laplacian_style_transfer(img, img, params, clamp=False)
        assert np.abs(out.data - img.data).max() <= 2.0 / 256
    _report(2, "self-transfer fixed point", budget)


def test_c03_histogram_matching_convergence():
    budget = Budget(30)
    rng = np.random.default_rng(103)
    ys, xs = np.meshgrid(np.arange(64) / 63, np.arange(64) / 63, indexing="ij")
    fixtures = []
    for k in range(4):
        smooth = 0.5 + 0.3 * np.sin((3 + k) * np.pi * xs) * np.cos(2 * np.pi * ys)
        subject = Image(np.clip(smooth + 0.05 * rng.standard_normal((64, 64)), 0, 1)[None])
        texture = 0.5 + 0.45 * np.sign(np.sin((12 + k) * np.pi * xs) * np.sin(11 * np.pi * ys))
        reference = Image(np.clip(texture + 0.1 * rng.standard_normal((64, 64)), 0, 1)[None])
        fixtures.append((subject, reference))
    for subject, reference in fixtures:
        sp = build_laplacian_pyramid(subject, 4)
        rp = build_laplacian_pyramid(reference, 4)
        for k in range(3):
            hist = level_histogram(rp.bands[k], 256)
            matched = match_level(sp.bands[k], hist, iterations=10)
            before = emd_1d(np.abs(sp.bands[k].data), np.abs(rp.bands[k].data))
            after = emd_1d(np.abs(matched.data), np.abs(rp.bands[k].data))
            assert after <= 0.1 * before, f"band {k}: {after:.5f} > 0.1 * {before:.5f}"
    _report(3, "histogram-matching convergence", budget)


def test_c04_neural_gradient_check():
    budget = Budget(60)
    rng = np.random.default_rng(104)
    net = builtin_network(in_channels=3, seed=7)
    s = Image(rng.random((3, 16, 16)))
    r = Image(rng.random((3, 16, 16)))
    x = rng.random((3, 16, 16))
    objective = StyleObjective(net, s, r, StyleConfig(alpha=1.0, beta=1000.0))
    _, grad = objective.loss_and_grad(x)
    h = 1e-4
    coords = {
        (int(rng.integers(3)), int(rng.integers(16)), int(rng.integers(16))) for _ in range(200)
    }
    checked = 0
    for c, i, j in sorted(coords):
        if checked == 100:
            break
        checked += 1
        xp = x.copy()
        xp[c, i, j] += h
        xm = x.copy()
        xm[c, i, j] -= h
        fd = (objective.loss(xp) - objective.loss(xm)) / (2 * h)
        a = grad[c, i, j]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        assert rel <= 1e-4, f"coordinate ({c},{i},{j}): relative error {rel:.2e}"
    assert checked == 100
    _report(4, "analytic gradient vs finite differences", budget)


def test_c05_loss_semantics():
    budget = Budget(5)
    from artgenre.neural import content_loss, extract_features, style_layer_loss, style_loss

    net = builtin_network(in_channels=3, seed=7)
    rng = np.random.default_rng(105)
    img = Image(rng.random((3, 16, 16)))
    stack = extract_features(net, img, (0, 3))

    assert content_loss(stack, stack, 3) == 0.0
    assert style_loss(stack, stack, net, StyleConfig()) == 0.0
    for lid in (0, 3):
        g = gram(stack, lid)
        assert np.abs(g - g.T).max() <= 1e-9
        assert np.linalg.eigvalsh(g).min() >= -1e-8 * np.trace(g)
    assert style_layer_loss(np.array([[2.0]]), np.array([[0.0]]), 1, 1) == pytest.approx(1.0)
    _report(5, "loss semantics", budget)


def test_c06_optimizer_contract():
    budget = Budget(120)
    rng = np.random.default_rng(106)

    def conv(o, i, gen):
        return Conv(gen.standard_normal((o, i, 3, 3)) * np.sqrt(2 / (i * 9)),
                    gen.standard_normal(o) * 0.01)

    gen = np.random.default_rng(7)
    net = FeatureNetwork(
        [conv(8, 3, gen), Relu(), Pool("avg"), conv(16, 8, gen), Relu(), Pool("avg")]
    )
    ys, xs = np.meshgrid(np.arange(16) / 15, np.arange(16) / 15, indexing="ij")
    subject = Image(
        np.clip(
            np.stack(
                [
                    0.5 + 0.4 * np.sin(2 * np.pi * xs),
                    0.5 + 0.4 * np.cos(2 * np.pi * ys),
                    0.3 + 0.5 * xs * ys,
                ]
            ),
            0,
            1,
        )
    )
    reference = Image(rng.random((3, 16, 16)))
    config = StyleConfig(alpha=1.0, beta=0.0, iterations=200, init_seed=11)
    result = neural_style_transfer(subject, reference, net, config)
    traj = result.loss_trajectory
    assert np.all(np.diff(traj) <= 0), "trajectory must be non-increasing"
    assert traj[-1] < 0.01 * traj[0], f"final/initial = {traj[-1] / traj[0]:.4f}"
    _report(6, "optimizer contract", budget)


def test_c07_descriptor_oracles():
    budget = Budget(10)
    rng = np.random.default_rng(107)
    cfg = DescriptorConfig()
    for _ in range(3):
        img = Image(rng.random((1, 16, 16)))
        ours_hog = phog(img, cfg).values
        ours_lbp = plbp(img, cfg).values
        assert len(ours_hog) == 189
        assert len(ours_lbp) == 1239
        np.testing.assert_allclose(ours_hog, reference_phog(img, cfg), atol=1e-12)
        np.testing.assert_allclose(ours_lbp, reference_plbp(img, cfg), atol=1e-12)

    img = Image(rng.random((1, 16, 16)))
    flipped = Image(img.data[:, :, ::-1].copy())
    a = phog(img, cfg).values
    b = phog(flipped, cfg).values
    bins = cfg.hog_bins
    expected = np.empty_like(a)
    off = 0
    for k in cfg.grid_levels:
        for r in range(k):
            for c in range(k):
                src = off + (r * k + (k - 1 - c)) * bins
                dst = off + (r * k + c) * bins
                expected[dst : dst + bins] = a[src : src + bins][(-np.arange(bins)) % bins]
        off += k * k * bins
    np.testing.assert_allclose(b, expected, atol=1e-12)
    _report(7, "descriptor oracles", budget)


def test_c08_svm_correctness():
    budget = Budget(30)
    rng = np.random.default_rng(108)
    for _ in range(6):
        n = int(rng.integers(4, 9))
        x = rng.standard_normal((n, 2))
        y = np.where(rng.random(n) > 0.5, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        kmat = rbf_kernel(x, x, 0.7)
        alphas, bias = _smo(kmat, y, 5.0)
        assert abs(dual_objective(kmat, y, alphas) - exhaustive_dual_max(kmat, y, 5.0)) <= 1e-3
        assert kkt_residual(kmat, y, alphas, bias, 5.0) <= 1e-3

    feats = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    labels = np.array([0, 1, 1, 0])
    ds = LabeledDataset(feats, labels, ("even", "odd"))
    model = train_rbf_svm(ds, c_reg=10.0, gamma=1.0)
    assert (predict_labels(model, feats) == labels).all()
    _report(8, "svm correctness", budget)


def test_c09_metric_laws():
    budget = Budget(5)
    rng = np.random.default_rng(109)
    for _ in range(20):
        n, c = int(rng.integers(5, 40)), int(rng.integers(2, 8))
        scores = rng.random((n, c))
        labels = rng.integers(0, c, size=n)
        accs = [topk_accuracy(scores, labels, k) for k in range(1, c + 1)]
        assert all(a <= b for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0

    scores = np.array([[0.9, 0.05, 0.05], [0.2, 0.1, 0.7], [0.3, 0.6, 0.1]])
    labels = np.array([0, 1, 0])
    assert topk_accuracy(scores, labels, 1) == pytest.approx(1 / 3)
    assert topk_accuracy(scores, labels, 2) == pytest.approx(2 / 3)
    assert topk_accuracy(scores, labels, 3) == pytest.approx(1.0)

    mean, std = stochastic_stats([0.60, 0.62])
    assert mean == pytest.approx(0.61)
    assert std == pytest.approx(0.01414, abs=1e-5)
    _report(9, "metric laws", budget)


def test_c10_protocol_arithmetic():
    budget = Budget(1)
    counts = {"Cityscape": 2903, "Landscape": 4467, "Portrait": 4002}
    base = [
        ManifestRow(path=f"paint_{i}.png", genre="Cityscape", domain="painting", split="train")
        for i in range(5984)
    ]
    source = []
    for genre, n in counts.items():
        source.extend(
            ManifestRow(path=f"src_{genre}_{i}.png", genre=genre, domain="artist_photo")
            for i in range(n)
        )
    _, report = add_domain_images(base, source, counts)
    assert report.added_total == 11372
    assert abs(report.added_image_ratio - 190.04) <= 0.01
    _report(10, "protocol arithmetic", budget)


@pytest.fixture(scope="module")
def desk_corpus(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("desk")
    base, source = generate_corpus(
        tmp, per_class_base=60, per_class_source=120, size=64, seed=0
    )
    return tmp, base, source


def _experiment_config(tmp, base, source):
    return {
        "base_manifest": str(base),
        "sources": {"normal_photo": str(source)},
        "caps": [20],
        "transfer_classes": {name: 120 for name in CLASS_NAMES},
        "descriptor": "phog",
        "classifier": "softmax",
        "classifier_params": {"epochs": 300, "l2": 1e-4},
        "seeds": [0, 1, 2, 3, 4],
        "split_seed": 0,
        "image_root": str(tmp),
    }


def test_c11_end_to_end_desk_experiment(desk_corpus, tmp_path):
    budget = Budget(600)
    tmp, base, source = desk_corpus
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(_experiment_config(tmp, base, source)))
    out_dir = tmp_path / "results"
    assert cli_main(["experiment", "run", "--config", str(config_path), "--out", str(out_dir)]) == 0

    payload = json.loads((out_dir / "report.json").read_text())
    baseline = payload["cells"]["none/20"]
    variant = payload["cells"]["normal_photo/20"]
    assert len(baseline["runs"]) == 5 and len(variant["runs"]) == 5
    improvements = [v - b for v, b in zip(variant["runs"], baseline["runs"])]
    mean_improvement = float(np.mean(improvements))
    margin = baseline["std"]  # run-to-run deviation of the repeated baseline
    assert mean_improvement >= margin, (
        f"mean improvement {100 * mean_improvement:.2f}pp "
        f"below stochastic margin {100 * margin:.2f}pp"
    )
    _report(11, "end-to-end desk experiment", budget)


def test_c12_determinism_byte_identical(desk_corpus, tmp_path):
    budget = Budget(600)
    tmp, base, source = desk_corpus

    # experiment runs: identical report bytes
    config_path = tmp_path / "config.json"
    config = _experiment_config(tmp, base, source)
    config["seeds"] = [0, 1]
    config_path.write_text(json.dumps(config))
    outs = []
    for tag in ("a", "b"):
        out_dir = tmp_path / f"run_{tag}"
        assert cli_main(
            ["experiment", "run", "--config", str(config_path), "--out", str(out_dir)]
        ) == 0
        outs.append((out_dir / "report.json").read_bytes())
    assert outs[0] == outs[1]

    # stylize runs: identical image bytes
    rng = np.random.default_rng(112)
    from artgenre.image import save_png

    subject = tmp_path / "s.png"
    reference = tmp_path / "r.png"
    save_png(Image(rng.random((3, 64, 64))), subject)
    save_png(Image(rng.random((3, 64, 64))), reference)
    pngs = []
    for tag in ("a", "b"):
        out = tmp_path / f"styl_{tag}.png"
        assert cli_main(
            [
                "stylize",
                "laplacian",
                "--subject",
                str(subject),
                "--reference",
                str(reference),
                "--levels",
                "4",
                "--out",
                str(out),
            ]
        ) == 0
        pngs.append(out.read_bytes())
    assert pngs[0] == pngs[1]

    # neural runs with the same seed: identical image bytes
    neural_pngs = []
    for tag in ("a", "b"):
        out = tmp_path / f"neural_{tag}.png"
        assert cli_main(
            [
                "stylize",
                "neural",
                "--subject",
                str(subject),
                "--reference",
                str(reference),
                "--size",
                "16",
                "--iters",
                "10",
                "--seed",
                "9",
                "--out",
                str(out),
            ]
        ) == 0
        neural_pngs.append(out.read_bytes())
    assert neural_pngs[0] == neural_pngs[1]
    _report(12, "determinism", budget)
