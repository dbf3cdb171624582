"""Experiment configuration files (YAML with nested sections).

Example::

    name: fmnist-p0
    output: runs/fmnist-p0
    randomization_p: 0.0
    dataset:
      format: synthetic
      params: {classes: 10, per_class: 200, test_per_class: 100,
               dim: 16, embed_dim: 784, separation: 4.0}
    architecture:
      preset: fashion_mnist
      width_divisor: 4
    train:
      optimizer: adam
      learning_rate: 0.001
      total_batches: 1500
    probe:
      layers: deep
      methods: [nmf, pca, random_ablation]
      per_class: 50

Omitted keys take the defaults of the dataclasses below.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import DatasetSource
from .errors import ConfigError, ReluProbeError
from .nmf import NMFOptions
from .nn.layers import LayerSpec
from .nn.presets import INPUT_SHAPES, preset
from .nn.training import TrainConfig


@dataclass
class ArchitectureConfig:
    preset: str | None = None
    width_divisor: int = 1
    layers: list | None = None
    input_shape: list | None = None

    def specs(self, num_classes):
        if (self.preset is None) == (self.layers is None):
            raise ConfigError("architecture needs exactly one of 'preset' or 'layers'")
        if self.preset is not None:
            return preset(self.preset, num_classes=num_classes, width_divisor=self.width_divisor)
        return [LayerSpec.from_dict(d) for d in self.layers]

    def resolved_input_shape(self, sample_shape):
        if self.input_shape is not None:
            return tuple(self.input_shape)
        if self.preset in INPUT_SHAPES:
            return INPUT_SHAPES[self.preset]
        return tuple(sample_shape)


@dataclass
class ProbeConfig:
    """What to measure.

    ``layers`` is ``"deep"`` (the deepest block, see
    :func:`relu_probe.experiments.deep_block`), ``"all"`` (every ReLU layer
    compressed together) or an explicit list of layer indices.
    """

    layers: object = "deep"
    methods: list = field(default_factory=lambda: ["nmf", "pca", "random_ablation"])
    ks: list | None = None
    per_class: int = 50
    classes: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    nmf: NMFOptions = field(default_factory=NMFOptions)
    multi_class: bool = False


@dataclass
class GridConfig:
    batch_size: list = field(default_factory=lambda: [100])
    weight_decay: list = field(default_factory=lambda: [0.0])
    optimizer: list = field(default_factory=lambda: ["adam"])
    learning_rate: dict = field(default_factory=dict)


@dataclass
class EarlyStopConfig:
    radius: int = 2


@dataclass
class ExperimentConfig:
    dataset: DatasetSource
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    randomization_p: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    earlystop: EarlyStopConfig = field(default_factory=EarlyStopConfig)
    output: str = "runs/default"
    name: str = "net"

    def __post_init__(self):
        if not 0.0 <= self.randomization_p <= 1.0:
            raise ConfigError("randomization_p must lie in [0, 1]")


def _build(cls, raw, where):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except ReluProbeError as exc:
        raise ConfigError(f"invalid '{where}': {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"invalid '{where}': {exc}") from None


def from_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = dict(raw)
    if "dataset" not in raw:
        raise ConfigError("configuration needs a 'dataset' section")
    probe_raw = dict(raw.get("probe") or {})
    if "nmf" in probe_raw:
        probe_raw["nmf"] = _build(NMFOptions, probe_raw["nmf"], "probe.nmf")
    sections = {
        "dataset": _build(DatasetSource, raw.pop("dataset"), "dataset"),
        "architecture": _build(ArchitectureConfig, raw.pop("architecture", None), "architecture"),
        "train": _build(TrainConfig, raw.pop("train", None), "train"),
        "probe": _build(ProbeConfig, probe_raw, "probe"),
        "grid": _build(GridConfig, raw.pop("grid", None), "grid"),
        "earlystop": _build(EarlyStopConfig, raw.pop("earlystop", None), "earlystop"),
    }
    raw.pop("probe", None)
    return _build(ExperimentConfig, {**raw, **sections}, "top level")


def to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def loads(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable configuration: {exc}") from None
    return from_dict(raw)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True, default_flow_style=False)


def _resolve(value, base):
    if isinstance(value, list):
        return [_resolve(v, base) for v in value]
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ConfigError(f"referenced file {p} does not exist")
    return str(p)


def load_config(path) -> ExperimentConfig:
    """Parse a config file; relative paths in it resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file {path} does not exist")
    cfg = loads(path.read_text())
    base = path.parent
    src = cfg.dataset
    src.train = {k: _resolve(v, base) for k, v in src.train.items()}
    src.test = {k: _resolve(v, base) for k, v in src.test.items()}
    if not Path(cfg.output).is_absolute():
        cfg.output = str(base / cfg.output)
    return cfg
