"""Acceptance gate: one test (and one PASS/FAIL summary line) per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session. Tolerances are pinned as constants below.

Substitutes used at desk scale (details in the decisions ledger):
  * Fashion-MNIST is replaced by 10 Gaussian classes in a 16-dim subspace
    embedded in 784 features (2000 train / 1000 test samples);
  * the generalization and early-stopping runs use scikit-learn's 8x8
    handwritten digits, loaded through the CSV reader and the CLI.
"""
from __future__ import annotations

import json
import time

import numpy as np
import pytest
import yaml

from relu_probe.boolrank import boolean_rank_exact, support
from relu_probe.cli import main as cli_main
from relu_probe.data import DatasetSource, load_dataset
from relu_probe.linalg import pca_compress
from relu_probe.nmf import NMFOptions, nmf_compress, nmf_factorize
from relu_probe.nn import LayerSpec as L
from relu_probe.nn import TrainConfig, build_network, gradient_check, preset, randomize_labels, train
from relu_probe.probe import (
    CompressionMethod,
    compress_activation,
    deep_block,
    default_k_grid,
    k_sweep,
    mean_auc,
    multi_class_batch,
    single_class_batches,
)

# -- pinned tolerances ---------------------------------------------------------
GRAD_TOL = 1e-4
GRAD_NETS = 20
GRAD_SECONDS = 60.0
MONO_SLACK = 1e-10
MONO_MATRICES = 50
RECOVERY_RESID = 1e-3
RECOVERY_TRIALS = 50
RECOVERY_NEEDED = 45
RECOVERY_OPTS = NMFOptions(max_iters=20000, tol=0.0, restarts=5)
PCA_SLACK = 1e-8
PCA_MATRICES = 20
BOOL_MATRICES = 200
SEP_GAP = 0.05
SEP_TRAIN_ACC = 0.99
SEP_SECONDS = 15 * 60.0
SEEDS = (0, 1, 2)
CORR_MAX_R = -0.3
CORR_NETS = 8
STOP_WINDOW = 3
STOP_SEEDS_NEEDED = 2
RESIDUAL_KS = (1, 2, 4, 8)

# probe solver settings for the trained-network criteria (runtime budget)
PROBE_NMF = NMFOptions(max_iters=200, restarts=2)


def _record(log, name, passed, detail):
    log.append((name, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


# -- 1 -------------------------------------------------------------------------

def _random_small_net(rng):
    """Conv/pool/conv stack then dense layers; every layer kind appears across draws."""
    c_in = int(rng.integers(1, 3))
    side = int(rng.integers(6, 9))
    specs = [L(str(rng.choice(["conv", "conv+relu"])), int(rng.integers(1, 4)), 3, 1, 1)]
    specs.append(L("maxpool", None, 2, None, int(rng.integers(1, 3))))
    if rng.random() < 0.5:
        specs.append(L("conv+relu", int(rng.integers(1, 3)), 2, 0, 1))
    specs.append(L(str(rng.choice(["linear", "linear+relu"])), int(rng.integers(2, 5))))
    specs.append(L("linear", int(rng.integers(2, 4))))
    return specs, (c_in, side, side)


def test_c1_gradient_correctness(acceptance_log):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, kinds = 0.0, set()
    for i in range(GRAD_NETS):
        specs, shape = _random_small_net(rng)
        kinds |= {s.kind for s in specs}
        net = build_network(specs, shape, seed=i)
        for p in net.params:
            if "b" in p:
                p["b"] = rng.normal(0, 0.1, size=p["b"].shape)
        x = rng.standard_normal((3,) + shape)
        y = rng.integers(0, net.num_classes, size=3)
        worst = max(worst, gradient_check(net, x, y))
    elapsed = time.perf_counter() - start
    ok = worst < GRAD_TOL and elapsed < GRAD_SECONDS and len(kinds) == 5
    _record(acceptance_log, "C1 gradient correctness", ok,
            f"max rel err {worst:.2e} (< {GRAD_TOL}), {len(kinds)}/5 layer kinds, {elapsed:.1f}s")
    assert ok


# -- 2 -------------------------------------------------------------------------

def test_c2_nmf_monotonicity(acceptance_log):
    rng = np.random.default_rng(7)
    worst = -np.inf
    for i in range(MONO_MATRICES):
        a = rng.random((100, 64))
        res = nmf_factorize(a, int(rng.integers(1, 33)), NMFOptions(max_iters=300, tol=0.0, restarts=1, seed=i))
        worst = max(worst, float(np.max(np.diff(res.objective_trace))))
    ok = worst <= MONO_SLACK
    _record(acceptance_log, "C2 NMF monotonicity", ok,
            f"largest objective increase {worst:.2e} (<= {MONO_SLACK}) over {MONO_MATRICES} matrices")
    assert ok


# -- 3 -------------------------------------------------------------------------

def test_c3_exact_rank_recovery(acceptance_log):
    rng = np.random.default_rng(3)
    hits = at_defaults = 0
    for i in range(RECOVERY_TRIALS):
        a = rng.random((50, 5)) @ rng.random((5, 32))
        res = nmf_factorize(a, 5, NMFOptions(RECOVERY_OPTS.max_iters, RECOVERY_OPTS.tol,
                                             RECOVERY_OPTS.restarts, seed=i))
        hits += np.linalg.norm(a - res.reconstruct()) / np.linalg.norm(a) < RECOVERY_RESID
        quick = nmf_factorize(a, 5, NMFOptions(restarts=RECOVERY_OPTS.restarts, seed=i))
        at_defaults += np.linalg.norm(a - quick.reconstruct()) / np.linalg.norm(a) < RECOVERY_RESID
    ok = hits >= RECOVERY_NEEDED
    _record(acceptance_log, "C3 exact-rank recovery", ok,
            f"{hits}/{RECOVERY_TRIALS} below {RECOVERY_RESID} (need {RECOVERY_NEEDED}; "
            f"max_iters={RECOVERY_OPTS.max_iters}, tol=0, restarts={RECOVERY_OPTS.restarts}); "
            f"[info] default max_iters/tol: {at_defaults}/{RECOVERY_TRIALS}")
    assert ok


# -- 4 -------------------------------------------------------------------------

def test_c4_pca_dominance(acceptance_log):
    rng = np.random.default_rng(4)
    shapes = [(100, 64), (40, 25), (150, 96), (800, 128), (64, 130)]
    worst = -np.inf
    checks = 0
    for i in range(PCA_MATRICES):
        a = rng.random(shapes[i % len(shapes)])
        for k in default_k_grid(min(a.shape)):
            gap = np.linalg.norm(a - pca_compress(a, k)) - np.linalg.norm(a - nmf_compress(a, k))
            worst = max(worst, gap)
            checks += 1
    ok = worst <= PCA_SLACK
    _record(acceptance_log, "C4 PCA dominance", ok,
            f"max(PCA resid - NMF resid) = {worst:.2e} (<= {PCA_SLACK}) over {checks} (A, k) pairs")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_c5_boolean_rank_bound(acceptance_log):
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(BOOL_MATRICES):
        n, q = rng.integers(1, 7, size=2)
        k = int(rng.integers(1, min(n, q) + 1))
        u = rng.random((n, k)) * (rng.random((n, k)) < 0.5)
        v = rng.random((k, q)) * (rng.random((k, q)) < 0.5)
        # rank_+(u @ v) <= k by construction
        violations += boolean_rank_exact(support(u @ v)) > k
    anchors = boolean_rank_exact(np.ones((4, 6))) == 1 and all(
        boolean_rank_exact(np.eye(n)) == n for n in range(1, 6))
    ok = violations == 0 and anchors
    _record(acceptance_log, "C5 Boolean-rank bound", ok,
            f"{violations} violations in {BOOL_MATRICES} certified products; anchors {'ok' if anchors else 'wrong'}")
    assert ok


# -- 6, 7, 8, 11: label-randomized MLPs -----------------------------------------

@pytest.fixture(scope="module")
def memorization_runs():
    start = time.perf_counter()
    src = DatasetSource("synthetic", params={"classes": 10, "per_class": 200, "test_per_class": 100,
                                             "dim": 16, "embed_dim": 784, "separation": 4.0})
    data = load_dataset(src)
    nmf = CompressionMethod("nmf", nmf=PROBE_NMF)
    runs = {}
    for seed in SEEDS:
        for p in (0.0, 1.0):
            labels = randomize_labels(data.y_train, p, 10, seed=100 + seed)
            net = build_network(preset("fashion_mnist", width_divisor=4), (784,), seed=seed)
            cfg = TrainConfig(optimizer="adam", learning_rate=1e-3, batch_size=100, total_batches=1500,
                              eval_interval=1500, seed=seed)
            net, hist = train(net, (data.x_train, labels, data.x_test, data.y_test), cfg)
            batches = single_class_batches(data.x_train, labels, 50, seed=seed)
            block, last = deep_block(net), net.relu_layers[-1]
            r = {"net": net, "batches": batches, "train_acc": hist.train_acc[-1],
                 "nmf_block": mean_auc(net, batches, block, nmf).auc,
                 "ablation_block": mean_auc(net, batches, block, CompressionMethod("random_ablation", seed=seed)).auc,
                 "nmf_last": mean_auc(net, batches, [last], nmf).auc}
            if p == 0.0:
                multi = [multi_class_batch(data.x_train, labels, 50, seed=1000 * seed + i) for i in range(10)]
                r["multi_last"] = mean_auc(net, multi, [last], nmf).auc
            runs[(seed, p)] = r
    return runs, time.perf_counter() - start


def _mean(runs, p, key):
    return float(np.mean([runs[(s, p)][key] for s in SEEDS]))


def test_c6_memorization_separation(acceptance_log, memorization_runs):
    runs, elapsed = memorization_runs
    fit = min(r["train_acc"] for r in runs.values())
    gap = _mean(runs, 0.0, "nmf_block") - _mean(runs, 1.0, "nmf_block")
    last_gap = _mean(runs, 0.0, "nmf_last") - _mean(runs, 1.0, "nmf_last")
    ok = fit >= SEP_TRAIN_ACC and gap > SEP_GAP and elapsed < SEP_SECONDS
    _record(acceptance_log, "C6 memorization separation", ok,
            f"deep-block NMF AuC p0 {_mean(runs, 0.0, 'nmf_block'):.3f} - p1 {_mean(runs, 1.0, 'nmf_block'):.3f} "
            f"= {gap:.3f} (> {SEP_GAP}); min train acc {fit:.3f}; {elapsed:.0f}s; "
            f"[info] last hidden layer alone: gap {last_gap:.3f}")
    assert ok


def test_c7_single_vs_multi_class(acceptance_log, memorization_runs):
    runs, _ = memorization_runs
    single, multi = _mean(runs, 0.0, "nmf_last"), _mean(runs, 0.0, "multi_last")
    ok = single > multi
    _record(acceptance_log, "C7 single- vs multi-class", ok,
            f"deepest hidden layer, p=0: single-class AuC {single:.3f} > multi-class {multi:.3f}")
    assert ok


def test_c8_method_ordering(acceptance_log, memorization_runs):
    runs, _ = memorization_runs
    nmf_gap = _mean(runs, 0.0, "nmf_block") - _mean(runs, 1.0, "nmf_block")
    abl_gap = _mean(runs, 0.0, "ablation_block") - _mean(runs, 1.0, "ablation_block")
    ok = nmf_gap >= abl_gap
    _record(acceptance_log, "C8 method ordering", ok,
            f"p0-p1 gap NMF {nmf_gap:.3f} >= random ablation {abl_gap:.3f}")
    assert ok


def test_c11_residual_ablation_direction(acceptance_log, memorization_runs):
    runs, _ = memorization_runs
    r = runs[(0, 0.0)]
    net, layer = r["net"], r["net"].relu_layers[-1]
    cols = net.layer_width(layer)
    resid = CompressionMethod("nmf_residual", nmf=PROBE_NMF)
    rows, ok = [], True
    for k in RESIDUAL_KS:
        acc_res = np.mean([k_sweep(net, b, [layer], resid, ks=[k]).accuracies[0] for b in r["batches"]])
        acc_abl = np.mean([k_sweep(net, b, [layer], CompressionMethod("random_ablation", seed=i),
                                   ks=[cols - k]).accuracies[0] for i, b in enumerate(r["batches"])])
        ok &= acc_res < acc_abl
        rows.append(f"k={k}: {acc_res:.2f}<{acc_abl:.2f}")
    _record(acceptance_log, "C11 residual-ablation direction", ok,
            f"layer {layer}, NMF residual vs keep cols-k random columns: " + ", ".join(rows))
    assert ok


# -- 9, 10: digits CNN through the CLI ----------------------------------------------

DIGITS_CNN = [
    {"kind": "conv+relu", "out_dim": 16, "kernel": 3, "padding": 1, "stride": 1},
    {"kind": "conv+relu", "out_dim": 32, "kernel": 3, "padding": 1, "stride": 2},
    {"kind": "conv+relu", "out_dim": 32, "kernel": 3, "padding": 1, "stride": 1},
    {"kind": "conv+relu", "out_dim": 32, "kernel": 3, "padding": 1, "stride": 1},
    {"kind": "conv+relu", "out_dim": 32, "kernel": 3, "padding": 1, "stride": 1},
    {"kind": "linear", "out_dim": 10},
]


@pytest.fixture(scope="module")
def digits_csv(tmp_path_factory):
    datasets = pytest.importorskip("sklearn.datasets")
    x, y = datasets.load_digits(return_X_y=True)
    order = np.random.default_rng(0).permutation(len(y))
    x, y = x[order] / 16.0, y[order]
    d = tmp_path_factory.mktemp("digits")
    for name, sl in (("train", slice(0, 300)), ("test", slice(300, None))):
        lines = ["label," + ",".join(f"p{i}" for i in range(64))]
        lines += [f"{label}," + ",".join(repr(float(v)) for v in row) for label, row in zip(y[sl], x[sl])]
        (d / f"{name}.csv").write_text("\n".join(lines) + "\n")
    return d


def _digits_config(d, name, **sections):
    cfg = {"name": name, "output": f"out-{name}",
           "dataset": {"format": "csv", "train": {"path": "train.csv"}, "test": {"path": "test.csv"},
                       "params": {"image_shape": [1, 8, 8]}, "num_classes": 10},
           "architecture": {"layers": DIGITS_CNN},
           "probe": {"layers": "deep", "per_class": 20, "ks": [1, 2, 4, 8, 16, 32],
                     "nmf": {"max_iters": PROBE_NMF.max_iters, "restarts": PROBE_NMF.restarts}}}
    for key, val in sections.items():
        cfg.setdefault(key, {}).update(val)
    path = d / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_c9_generalization_correlation(acceptance_log, digits_csv):
    path = _digits_config(digits_csv, "grid",
                          train={"total_batches": 600, "learning_rate": 1e-3},
                          grid={"batch_size": [16, 64], "weight_decay": [0.0, 0.01],
                                "optimizer": ["sgd", "adam"], "learning_rate": {"sgd": 0.05, "adam": 1e-3}},
                          probe={"methods": ["nmf", "pca", "random_ablation"]})
    assert cli_main(["correlate", "--config", str(path)]) == 0
    result = json.loads((digits_csv / "out-grid" / "correlation.json").read_text())
    r = result["pearson_r"]
    ok = result["n_networks"] >= CORR_NETS and r["nmf"] is not None and r["nmf"] < CORR_MAX_R
    rows = (digits_csv / "out-grid" / "correlation.csv").read_text().splitlines()[1:]
    errs = [float(line.split(",")[7]) for line in rows]
    _record(acceptance_log, "C9 generalization correlation", ok,
            f"r(NMF AuC, test error) = {r['nmf']:+.3f} (< {CORR_MAX_R}); pca {r['pca']:+.3f}, "
            f"ablation {r['random_ablation']:+.3f}; {result['n_networks']} nets, "
            f"test error range {min(errs):.3f}-{max(errs):.3f}")
    assert ok


def test_c10_early_stopping(acceptance_log, digits_csv):
    offsets = []
    for seed in SEEDS:
        path = _digits_config(digits_csv, f"stop{seed}",
                              train={"optimizer": "adam", "learning_rate": 1e-3, "batch_size": 32,
                                     "total_batches": 3000, "eval_interval": 100})
        assert cli_main(["earlystop", "--config", str(path), "--seed", str(seed)]) == 0
        summary = json.loads((digits_csv / f"out-stop{seed}" / "earlystop.json").read_text())
        offsets.append(summary["nmf_offset_intervals"])
    hits = sum(abs(o) <= STOP_WINDOW for o in offsets)
    ok = hits >= STOP_SEEDS_NEEDED
    _record(acceptance_log, "C10 early stopping", ok,
            f"NMF first-max minus test-loss-min, in intervals: {offsets}; "
            f"{hits}/{len(SEEDS)} within +-{STOP_WINDOW} (need {STOP_SEEDS_NEEDED})")
    assert ok


# -- 12 ------------------------------------------------------------------------

REPRO_CFG = {
    "name": "repro", "output": "out",
    "dataset": {"format": "synthetic",
                "params": {"classes": 3, "per_class": 30, "test_per_class": 10, "dim": 4, "separation": 4.0}},
    "architecture": {"layers": [{"kind": "linear+relu", "out_dim": 12}, {"kind": "linear+relu", "out_dim": 8},
                                {"kind": "linear", "out_dim": 3}]},
    "train": {"batch_size": 16, "total_batches": 60, "eval_interval": 20},
    "probe": {"per_class": 6, "nmf": {"max_iters": 60, "restarts": 2}, "seeds": [0, 1]},
    "grid": {"batch_size": [8, 32], "weight_decay": [0.0, 0.01], "optimizer": ["sgd", "adam"]},
}


def test_c12_reproducibility(acceptance_log, tmp_path):
    cfg = tmp_path / "repro.yaml"
    cfg.write_text(yaml.safe_dump(REPRO_CFG))
    digests = {}
    for run in ("a", "b"):
        out = tmp_path / run
        for command in ("train", "probe", "layers", "correlate", "earlystop"):
            assert cli_main([command, "--config", str(cfg), "--out", str(out)]) == 0
        assert cli_main(["report", "--out", str(out)]) == 0
        digests[run] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    same = digests["a"] == digests["b"]
    _record(acceptance_log, "C12 reproducibility", same,
            f"{len(digests['a'])} CSV files across train/probe/layers/correlate/earlystop/report, "
            f"{'byte-identical' if same else 'DIFFER'}")
    assert same
