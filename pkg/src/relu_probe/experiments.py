"""End-to-end experiment commands and the report bundler.

Every command reads an :class:`~relu_probe.config.ExperimentConfig`, writes
its artifacts into the output directory with atomic renames, and contains no
timestamps, so reruns with the same config and seeds give identical files.

Artifacts (``S`` is the probe seed, ``M`` the method)::

    train      model.rpnn, run.json, history.csv
    probe      curves_M_seedS.csv             (one k-sweep per probe batch)
    layers     profile_M_seedS.csv            (mean AuC per single ReLU layer)
    correlate  correlation.csv, correlation.json
    earlystop  signals.csv, earlystop.json, history.csv
    report     report.json, bundle.csv
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from ._io import atomic_write
from .data import Dataset, load_dataset
from .errors import ParameterError, ReportError, UndefinedCorrelationError
from .linalg import pearson, trapezoid_auc
from .nn import (
    History,
    TrainConfig,
    build_network,
    load_checkpoint,
    randomize_labels,
    save_checkpoint,
    train,
)
from .probe import (
    CURVE_COLUMNS,
    PROFILE_COLUMNS,
    CompressionMethod,
    EpochSignal,
    batch_sweeps,
    curves_to_csv,
    early_stop_epoch,
    layer_profile,
    mean_auc,
    min_epoch,
    multi_class_batch,
    profile_to_csv,
    resolve_layers,
    single_class_batches,
)

COMMANDS = ("train", "probe", "layers", "correlate", "earlystop")
SIGNAL_COLUMNS = ("batch", "train_loss", "test_loss", "test_error", "nmf_auc", "random_ablation_auc")
CORRELATION_BASE = ("network_id", "batch_size", "weight_decay", "optimizer", "learning_rate",
                    "train_accuracy", "test_accuracy", "generalization_error")
BUNDLE_COLUMNS = ("source", "network_id", "layer", "method", "auc_mean", "auc_std", "n_runs")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def history_csv(h: History) -> str:
    return _csv(History.COLUMNS, h.rows())


# -- shared steps --------------------------------------------------------------

def prepare_data(cfg):
    """The dataset plus the (possibly randomized) training labels."""
    data = load_dataset(cfg.dataset)
    labels = randomize_labels(data.y_train, cfg.randomization_p, data.num_classes, seed=cfg.train.seed)
    return data, labels


def build(cfg, data: Dataset):
    specs = cfg.architecture.specs(data.num_classes)
    shape = cfg.architecture.resolved_input_shape(data.x_train.shape[1:])
    return build_network(specs, shape, seed=cfg.train.seed)


def _model_key(cfg) -> str:
    d = config_mod.to_dict(cfg)
    keep = {k: d[k] for k in ("dataset", "architecture", "randomization_p", "train")}
    return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()


def train_and_save(cfg, out: Path):
    data, labels = prepare_data(cfg)
    net, hist = train(build(cfg, data), (data.x_train, labels, data.x_test, data.y_test), cfg.train)
    save_checkpoint(net, out / "model.rpnn")
    atomic_write(out / "history.csv", history_csv(hist))
    run = {"model_key": _model_key(cfg), "network_id": cfg.name, "train_seed": cfg.train.seed,
           "randomization_p": cfg.randomization_p,
           "train_accuracy": hist.train_acc[-1], "test_accuracy": hist.test_acc[-1]}
    atomic_write(out / "run.json", _json(run))
    return net, data, labels


def trained_model(cfg, out: Path):
    """Reuse ``model.rpnn`` when it was trained from the same settings, else train."""
    meta = out / "run.json"
    if (out / "model.rpnn").exists() and meta.exists():
        if json.loads(meta.read_text()).get("model_key") == _model_key(cfg):
            data, labels = prepare_data(cfg)
            return load_checkpoint(out / "model.rpnn"), data, labels
    return train_and_save(cfg, out)


def probe_batches(cfg, x, labels, seed):
    p = cfg.probe
    if p.multi_class:
        n_batches = len(p.classes) if p.classes else len(np.unique(labels))
        return [multi_class_batch(x, labels, p.per_class, seed=seed * 1000 + i) for i in range(n_batches)]
    return single_class_batches(x, labels, p.per_class, classes=p.classes, seed=seed)


def _method(cfg, kind, seed):
    return CompressionMethod(kind, nmf=replace(cfg.probe.nmf, seed=seed), seed=seed)


# -- commands ------------------------------------------------------------------

def cmd_train(cfg, out, jobs=1):
    train_and_save(cfg, out)
    return [out / "model.rpnn", out / "history.csv", out / "run.json"]


def cmd_probe(cfg, out, jobs=1):
    net, data, labels = trained_model(cfg, out)
    layers = resolve_layers(net, cfg.probe.layers)
    written = []
    for seed in cfg.probe.seeds:
        batches = probe_batches(cfg, data.x_train, labels, seed)
        for kind in cfg.probe.methods:
            curves = batch_sweeps(net, batches, layers, _method(cfg, kind, seed), cfg.probe.ks, jobs)
            path = out / f"curves_{kind}_seed{seed}.csv"
            atomic_write(path, curves_to_csv(curves, cfg.name))
            written.append(path)
    return written


def cmd_layers(cfg, out, jobs=1):
    net, data, labels = trained_model(cfg, out)
    written = []
    for seed in cfg.probe.seeds:
        batches = probe_batches(cfg, data.x_train, labels, seed)
        for kind in cfg.probe.methods:
            prof = layer_profile(net, batches, _method(cfg, kind, seed), cfg.probe.ks, jobs=jobs)
            path = out / f"profile_{kind}_seed{seed}.csv"
            atomic_write(path, profile_to_csv(prof, cfg.name))
            written.append(path)
    return written


def grid_runs(cfg):
    """``(network_id, TrainConfig)`` for every grid point, in a fixed order."""
    g = cfg.grid
    for bs, wd, opt in itertools.product(g.batch_size, g.weight_decay, g.optimizer):
        lr = g.learning_rate.get(opt, cfg.train.learning_rate)
        tc = replace(cfg.train, batch_size=bs, weight_decay=wd, optimizer=opt, learning_rate=lr,
                     eval_interval=cfg.train.total_batches)
        yield f"{cfg.name}-bs{bs}-wd{wd:g}-{opt}", tc


def cmd_correlate(cfg, out, jobs=1):
    """Train the grid, probe each network's deep block, correlate AuC with test error."""
    data, labels = prepare_data(cfg)
    seed = cfg.probe.seeds[0]
    batches = probe_batches(cfg, data.x_train, labels, seed)
    rows = []
    for net_id, tc in grid_runs(cfg):
        net = build(replace(cfg, train=tc), data)
        net, hist = train(net, (data.x_train, labels, data.x_test, data.y_test), tc)
        layers = resolve_layers(net, cfg.probe.layers)
        aucs = [mean_auc(net, batches, layers, _method(cfg, kind, seed), cfg.probe.ks, jobs).auc
                for kind in cfg.probe.methods]
        test_acc = hist.test_acc[-1]
        rows.append([net_id, tc.batch_size, float(tc.weight_decay), tc.optimizer, float(tc.learning_rate),
                     hist.train_acc[-1], test_acc, 1.0 - test_acc, *aucs])
    columns = CORRELATION_BASE + tuple(f"auc_{k}" for k in cfg.probe.methods)
    atomic_write(out / "correlation.csv", _csv(columns, rows))

    gen = [r[7] for r in rows]
    result = {"generalization_error": "test error (1 - test accuracy)", "n_networks": len(rows),
              "pearson_r": {}, "undefined": []}
    for j, kind in enumerate(cfg.probe.methods):
        aucs = [r[8 + j] for r in rows]
        try:
            result["pearson_r"][kind] = pearson(aucs, gen) if len(rows) >= 3 else None
        except UndefinedCorrelationError:
            result["pearson_r"][kind] = None
        if result["pearson_r"][kind] is None:
            result["undefined"].append(kind)
    atomic_write(out / "correlation.json", _json(result))
    return [out / "correlation.csv", out / "correlation.json"]


def earlystop_signals(cfg, data, labels, callback_seed=None):
    """Train once, probing the deep block at every evaluation point.

    Returns ``(history, nmf_aucs, ablation_aucs)`` aligned with ``history.batches``.
    """
    seed = cfg.probe.seeds[0] if callback_seed is None else callback_seed
    batches = probe_batches(cfg, data.x_train, labels, seed)
    nmf_m, abl_m = _method(cfg, "nmf", seed), _method(cfg, "random_ablation", seed)
    nmf_aucs, abl_aucs = [], []

    def probe_now(_, net):
        layers = resolve_layers(net, cfg.probe.layers)
        nmf_aucs.append(mean_auc(net, batches, layers, nmf_m, cfg.probe.ks).auc)
        abl_aucs.append(mean_auc(net, batches, layers, abl_m, cfg.probe.ks).auc)

    _, hist = train(build(cfg, data), (data.x_train, labels, data.x_test, data.y_test), cfg.train,
                    callback=probe_now)
    return hist, nmf_aucs, abl_aucs


def stopping_summary(batches, test_loss, nmf_aucs, abl_aucs, radius) -> dict:
    loss_min = min_epoch(EpochSignal(batches, test_loss), radius)
    nmf_max = early_stop_epoch(EpochSignal(batches, nmf_aucs), radius)
    abl_max = early_stop_epoch(EpochSignal(batches, abl_aucs), radius)
    interval = batches[1] - batches[0] if len(batches) > 1 else 1
    return {"radius": radius, "eval_interval": interval,
            "test_loss_min_batch": loss_min, "nmf_first_max_batch": nmf_max,
            "random_ablation_first_max_batch": abl_max,
            "nmf_offset_intervals": (nmf_max - loss_min) / interval,
            "random_ablation_offset_intervals": (abl_max - loss_min) / interval}


def cmd_earlystop(cfg, out, jobs=1):
    data, labels = prepare_data(cfg)
    hist, nmf_aucs, abl_aucs = earlystop_signals(cfg, data, labels)
    rows = [[b, trl, tel, 1.0 - tea, a, r] for b, trl, tel, tea, a, r in
            zip(hist.batches, hist.train_loss, hist.test_loss, hist.test_acc, nmf_aucs, abl_aucs)]
    atomic_write(out / "signals.csv", _csv(SIGNAL_COLUMNS, rows))
    atomic_write(out / "history.csv", history_csv(hist))
    summary = stopping_summary(hist.batches, hist.test_loss, nmf_aucs, abl_aucs, cfg.earlystop.radius)
    atomic_write(out / "earlystop.json", _json(summary))
    return [out / "signals.csv", out / "history.csv", out / "earlystop.json"]


_COMMANDS = {"train": cmd_train, "probe": cmd_probe, "layers": cmd_layers,
             "correlate": cmd_correlate, "earlystop": cmd_earlystop}


def run_experiment(cfg, command: str, out=None, jobs: int = 1) -> list[Path]:
    """Run ``command`` and return the paths it wrote."""
    if command not in _COMMANDS:
        raise ParameterError(f"unknown command {command!r}; choose from {COMMANDS}")
    if jobs < 1:
        raise ParameterError("jobs must be >= 1")
    out = Path(cfg.output if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    return _COMMANDS[command](cfg, out, jobs)


# -- report --------------------------------------------------------------------

def _read_rows(path, columns):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != tuple(columns):
            raise ReportError(f"{path}: header {header} does not match {list(columns)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise ReportError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            rows.append(dict(zip(columns, row)))
    return rows


def _curve_aucs(path):
    """Mean AuC over the batches of one curve file, per (network, layer, method)."""
    curves = {}
    for r in _read_rows(path, CURVE_COLUMNS):
        try:
            key = (r["network_id"], r["layer"], r["method"], int(r["batch"]))
            curves.setdefault(key, []).append((int(r["k"]), float(r["accuracy"])))
        except ValueError as exc:
            raise ReportError(f"{path}: {exc}") from None
    per_run = {}
    for (net, layer, method, _), pts in curves.items():
        ks, accs = zip(*sorted(pts))
        try:
            per_run.setdefault((net, layer, method), []).append(trapezoid_auc(ks, accs))
        except ParameterError as exc:
            raise ReportError(f"{path}: curve for layer {layer}: {exc}") from None
    return {key: float(np.mean(v)) for key, v in per_run.items()}


def _profile_aucs(path):
    out = {}
    for r in _read_rows(path, PROFILE_COLUMNS):
        try:
            out[(r["network_id"], r["layer"], r["method"])] = float(r["auc"])
        except ValueError as exc:
            raise ReportError(f"{path}: {exc}") from None
    return out


def _aggregate(source, files, reader):
    runs = {}
    for f in files:
        for key, auc in reader(f).items():
            runs.setdefault(key, []).append(auc)
    return [{"source": source, "network_id": k[0], "layer": k[1], "method": k[2],
             "auc_mean": float(np.mean(v)), "auc_std": float(np.std(v)), "n_runs": len(v)}
            for k, v in sorted(runs.items())]


def emit_report(directory) -> dict:
    """Merge the artifacts in ``directory`` into ``report.json`` and ``bundle.csv``.

    AuC is averaged over probe batches within a file, then mean and standard
    deviation are taken across files (one file per seed).
    """
    d = Path(directory)
    if not d.is_dir():
        raise ReportError(f"{d} is not a directory")
    curves = sorted(d.glob("curves_*.csv"))
    profiles = sorted(d.glob("profile_*.csv"))
    extras = {name: d / f"{name}.json" for name in ("correlation", "earlystop")}
    extras = {k: p for k, p in extras.items() if p.exists()}
    if not curves and not profiles and not extras:
        raise ReportError(f"{d} holds no probe, layers, correlate or earlystop artifacts")

    summary = _aggregate("curves", curves, _curve_aucs) + _aggregate("profile", profiles, _profile_aucs)
    report = {"summary": summary,
              "files": [p.name for p in curves + profiles] + [p.name for p in extras.values()]}
    for name, path in extras.items():
        try:
            report[name] = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ReportError(f"{path}: {exc}") from None
    if (d / "signals.csv").exists():
        report["signals"] = _read_rows(d / "signals.csv", SIGNAL_COLUMNS)
    atomic_write(d / "report.json", _json(report))
    atomic_write(d / "bundle.csv", _csv(BUNDLE_COLUMNS, [[s[c] for c in BUNDLE_COLUMNS] for s in summary]))
    return report
