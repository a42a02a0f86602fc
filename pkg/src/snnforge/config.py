"""JSON experiment configuration as nested dataclasses.

Every config carries a ``version`` field. Unknown keys are rejected at any
nesting level so that a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass
class EncodingConfig:
    """Latency code: values in [0, 1] map linearly onto [t_early, t_late] (us)."""

    t_early: float = 2.0
    t_late: float = 42.0
    t_bias: float = 4.0

    def validate(self, duration: float) -> None:
        if not 0 <= self.t_early < self.t_late <= duration:
            raise ConfigError(
                f"encoding.t_early={self.t_early} and encoding.t_late="
                f"{self.t_late} must satisfy 0 <= t_early < t_late <= {duration}")
        if not self.t_early < self.t_bias < self.t_late:
            raise ConfigError(f"encoding.t_bias={self.t_bias} must lie inside "
                              f"({self.t_early}, {self.t_late})")


@dataclass
class DatasetConfig:
    train_size: int = 4800
    test_size: int = 1200

    def validate(self) -> None:
        for name in ("train_size", "test_size"):
            value = getattr(self, name)
            if value <= 0 or value % 3:
                raise ConfigError(f"dataset.{name}={value} must be a positive "
                                  "multiple of 3 (balanced classes)")


@dataclass
class NeuronConfig:
    tau_mem: float = 10.0
    tau_syn: float = 5.0
    threshold: float = 1.0
    reset: float = 0.0
    leak: float = 0.0
    refractory: float = 1.0


@dataclass
class NetworkConfig:
    """5 -> hidden LIF -> 3 LI.

    Initial weights are Gaussian with the given mean and standard deviation
    (model units); ``*_weight_scale`` sets the hardware levels per unit.
    The readout starts with identical weights for every class, so the
    untrained network has no class preference (all readouts tie) while the
    common trace still peaks late enough to pass gradient.
    """

    hidden: int = 120
    hidden_neuron: NeuronConfig = field(default_factory=NeuronConfig)
    readout_neuron: NeuronConfig = field(default_factory=lambda: NeuronConfig(
        tau_mem=6.0, tau_syn=2.0, threshold=1.0, refractory=0.0))
    beta: float = 10.0
    hidden_weight_mean: float = 1.2
    hidden_weight_std: float = 1.0
    output_weight_mean: float = 0.1
    output_weight_std: float = 0.0
    hidden_weight_scale: float = 15.0
    output_weight_scale: float = 60.0
    dropout: float = 0.0


@dataclass
class TrainingConfig:
    epochs: int = 300
    batch_size: int = 75
    lr: float = 1e-3
    seeds: int = 3
    seed: int = 0
    lr_step: int = 0
    lr_gamma: float = 1.0
    eval_every: int = 1

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("training.epochs must be >= 0")
        if self.batch_size <= 0:
            raise ConfigError("training.batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("training.lr must be positive")
        if self.seeds <= 0:
            raise ConfigError("training.seeds must be positive")
        if self.eval_every <= 0:
            raise ConfigError("training.eval_every must be positive")


@dataclass
class RuntimeConfig:
    duration: float = 60.0
    dt: float = 0.5

    def validate(self) -> None:
        if self.duration <= 0 or self.dt <= 0:
            raise ConfigError("runtime.duration and runtime.dt must be positive")


@dataclass
class HardwareConfig:
    noise: float = 0.05
    noise_seed: int = 1234
    quantize: bool = True
    strict: bool = True
    max_neurons: int = 512
    max_fan_in: int = 256


@dataclass
class ModuleSpec:
    """One module of a free-form topology (``kind``: synapse, lif, li, dropout)."""

    name: str
    kind: str
    size: int = 0
    in_features: int = 0
    p: float = 0.0


@dataclass
class InvocationSpec:
    """``output = module(input)``; ``input`` names an input or an earlier output."""

    module: str
    input: str
    output: str


@dataclass
class InputSpec:
    name: str
    size: int
    rate: float = 0.05


@dataclass
class TopologyConfig:
    inputs: list[InputSpec] = field(default_factory=list)
    modules: list[ModuleSpec] = field(default_factory=list)
    invocations: list[InvocationSpec] = field(default_factory=list)
    mock: list[str] = field(default_factory=list)
    batch_size: int = 4


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    experiment: str = "yinyang"
    backend: str = "mock"
    precision: int = 32
    seed: int = 0
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    hardware: HardwareConfig = field(default_factory=HardwareConfig)
    topology: Optional[TopologyConfig] = None

    def validate(self) -> "ExperimentConfig":
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"version={self.version} is not supported "
                              f"(expected {CONFIG_VERSION})")
        if self.experiment not in ("yinyang", "graph"):
            raise ConfigError(f"experiment={self.experiment!r} must be "
                              "'yinyang' or 'graph'")
        if self.backend not in ("mock", "emulator"):
            raise ConfigError(f"backend={self.backend!r} must be 'mock' or 'emulator'")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision={self.precision} must be 32 or 64")
        self.runtime.validate()
        self.encoding.validate(self.runtime.duration)
        self.dataset.validate()
        self.training.validate()
        if self.experiment == "graph" and self.topology is None:
            raise ConfigError("experiment='graph' requires a topology section")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls: type, data: Any, path: str):
    origin = typing.get_origin(cls)
    if origin is Union:
        args = [a for a in typing.get_args(cls) if a is not type(None)]
        return None if data is None else _build(args[0], data, path)
    if origin is list:
        if not isinstance(data, list):
            raise ConfigError(f"{path} must be a list")
        (item,) = typing.get_args(cls)
        return [_build(item, v, f"{path}[{i}]") for i, v in enumerate(data)]
    if dataclasses.is_dataclass(cls):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'} must be an object")
        hints = typing.get_type_hints(cls)
        names = [f.name for f in dataclasses.fields(cls)]
        unknown = sorted(set(data) - set(names))
        if unknown:
            where = f" in {path}" if path else ""
            raise ConfigError(f"unknown config keys{where}: {', '.join(unknown)}")
        kwargs = {k: _build(hints[k], v, f"{path}.{k}" if path else k)
                  for k, v in data.items()}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"{path or 'config'}: {exc}") from None
    if cls is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ConfigError(f"{path} must be a number")
        return float(data)
    if cls in (int, bool, str) and (type(data) is not cls):
        raise ConfigError(f"{path} must be of type {cls.__name__}")
    return data


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "").validate()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse and validate a JSON config; missing files raise ``OSError``."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)
