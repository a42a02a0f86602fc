"""Yin-Yang classification benchmark.

Dataset geometry follows the reference construction: a big circle of radius
0.5 centred in the unit square, two dots of radius 0.1 at (0.25, 0.5) and
(0.75, 0.5), and the S-curve built from two half circles. Points are
latency-coded into five input spikes (bias, x, y, 1-x, 1-y) and classified
by a 5 -> 120 LIF -> 3 LI network with a max-over-time readout.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .autodiff import Tape, Tensor, get_dtype, precision
from .config import EncodingConfig, ExperimentConfig, NeuronConfig
from .emulator import Emulator, HardwareProfile, NeuronParams, SpikeTrain
from .errors import DataError
from .graph import LI, LIF, Dropout, InputHandle, Instance, Synapse
from .profiling import Profiler, section
from .training import Adam, decide, max_over_time_loss

log = logging.getLogger(__name__)

YANG, YIN, DOTS = 0, 1, 2
OUTSIDE = -1
CLASS_NAMES = ("yang", "yin", "dots")
R_BIG = 0.5
R_SMALL = 0.1


def classify_point(x, y) -> np.ndarray:
    """Class label per point; ``OUTSIDE`` for points off the big circle."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    # plain sqrt of squares, so boundary points round like the reference
    d_right = np.sqrt((x - 1.5 * R_BIG) ** 2 + (y - R_BIG) ** 2)
    d_left = np.sqrt((x - 0.5 * R_BIG) ** 2 + (y - R_BIG) ** 2)
    yin = ((d_right <= R_SMALL)
           | ((d_left > R_SMALL) & (d_left <= 0.5 * R_BIG))
           | ((y > R_BIG) & (d_right > 0.5 * R_BIG)))
    label = np.where(yin, YIN, YANG)
    label = np.where((d_right < R_SMALL) | (d_left < R_SMALL), DOTS, label)
    outside = np.sqrt((x - R_BIG) ** 2 + (y - R_BIG) ** 2) > R_BIG
    return np.where(outside, OUTSIDE, label)


def make_dataset(size: int, rng: Union[int, np.random.Generator]
                 ) -> tuple[np.ndarray, np.ndarray]:
    """``size`` points (``size / 3`` per class) in shuffled order.

    Returns ``(xy[size, 2], labels[size])``.
    """
    if size <= 0 or size % 3:
        raise DataError("dataset size must be a positive multiple of 3")
    rng = np.random.default_rng(rng)
    per_class = size // 3
    pools: list[list[np.ndarray]] = [[], [], []]
    counts = [0, 0, 0]
    while min(counts) < per_class:
        xy = rng.random((4 * size, 2))
        labels = classify_point(xy[:, 0], xy[:, 1])
        for k in range(3):
            need = per_class - counts[k]
            if need > 0:
                chosen = xy[labels == k][:need]
                pools[k].append(chosen)
                counts[k] += len(chosen)
    points = np.concatenate([np.concatenate(p) for p in pools])
    labels = np.repeat(np.arange(3), per_class)
    order = rng.permutation(size)
    return points[order], labels[order]


def encode_sample(x: float, y: float, cfg: EncodingConfig = EncodingConfig()
                  ) -> SpikeTrain:
    """Five events: bias at ``t_bias``, then x, y, 1-x, 1-y latency-coded."""
    return encode_batch(np.array([[x, y]]), cfg)


def encode_batch(xy: np.ndarray, cfg: EncodingConfig = EncodingConfig()
                 ) -> SpikeTrain:
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    values = np.column_stack([xy, 1.0 - xy])
    n = len(xy)
    times = np.empty((n, 5))
    times[:, 0] = cfg.t_bias
    times[:, 1:] = cfg.t_early + values * (cfg.t_late - cfg.t_early)
    batch = np.repeat(np.arange(n), 5)
    units = np.tile(np.arange(5), n)
    return SpikeTrain(times.reshape(-1), batch, units)


def neuron_params(cfg: NeuronConfig) -> NeuronParams:
    return NeuronParams(tau_mem=cfg.tau_mem, tau_syn=cfg.tau_syn,
                        threshold=cfg.threshold, reset=cfg.reset, leak=cfg.leak,
                        refractory=cfg.refractory)


def hardware_profile(config: ExperimentConfig) -> HardwareProfile:
    hw = config.hardware
    return HardwareProfile(max_neurons=hw.max_neurons, max_fan_in=hw.max_fan_in,
                           noise=hw.noise, noise_seed=hw.noise_seed,
                           quantize=hw.quantize, strict=hw.strict)


@dataclass
class YinYangNetwork:
    """Registered benchmark network: input -> syn1 -> lif -> syn2 -> li."""

    instance: Instance
    source: InputHandle
    syn1: Synapse
    lif: LIF
    syn2: Synapse
    li: LI
    dropout: Optional[Dropout]
    hidden: object
    readout: object

    def parameters(self) -> dict[str, Tensor]:
        return {"syn1.weight": self.syn1.weight, "syn2.weight": self.syn2.weight}

    def load_parameters(self, params: dict[str, Tensor]) -> None:
        self.syn1.weight = params["syn1.weight"]
        self.syn2.weight = params["syn2.weight"]

    def train(self, mode: bool = True) -> None:
        for module in self.instance.modules:
            module.train(mode)


def build_network(config: ExperimentConfig, rng: np.random.Generator,
                  mock: bool, emulator_seed: int = 0) -> YinYangNetwork:
    net = config.network
    dtype = get_dtype()
    w1 = rng.normal(net.hidden_weight_mean, net.hidden_weight_std, (5, net.hidden))
    w2 = rng.normal(net.output_weight_mean, net.output_weight_std, (net.hidden, 3))
    backend = Emulator(hardware_profile(config), seed=emulator_seed)
    instance = Instance(backend, mock=mock)
    source = InputHandle(5, "input")
    syn1 = Synapse(5, net.hidden, instance, weight=w1.astype(dtype),
                   weight_scale=net.hidden_weight_scale, name="syn1")
    lif = LIF(net.hidden, instance, neuron_params(net.hidden_neuron),
              beta=net.beta, name="lif")
    dropout = None
    syn2 = Synapse(net.hidden, 3, instance, weight=w2.astype(dtype),
                   weight_scale=net.output_weight_scale, name="syn2")
    li = LI(3, instance, neuron_params(net.readout_neuron), name="li")
    hidden = lif(syn1(source))
    if net.dropout > 0:
        dropout = Dropout(net.hidden, instance, p=net.dropout,
                          seed=int(rng.integers(2**31)), name="dropout")
        readout = li(syn2(dropout(hidden)))
    else:
        readout = li(syn2(hidden))
    return YinYangNetwork(instance, source, syn1, lif, syn2, li, dropout,
                          hidden, readout)


def forward(network: YinYangNetwork, xy: np.ndarray, config: ExperimentConfig):
    network.source.set(encode_batch(xy, config.encoding), len(xy))
    network.instance.run(config.runtime.duration, config.runtime.dt)
    return network.readout.membrane


def evaluate(network: YinYangNetwork, xy: np.ndarray, labels: np.ndarray,
             config: ExperimentConfig) -> float:
    network.train(False)
    correct = 0
    step = max(config.training.batch_size, 1)
    for start in range(0, len(xy), step):
        readout = forward(network, xy[start:start + step], config)
        correct += int(np.sum(decide(readout) == labels[start:start + step]))
    network.train(True)
    return correct / len(xy)


@dataclass
class SeedResult:
    seed: int
    test_accuracy: list[tuple[int, float]] = field(default_factory=list)
    train_accuracy: list[tuple[int, float]] = field(default_factory=list)
    train_loss: list[tuple[int, float]] = field(default_factory=list)
    profiler: Profiler = field(default_factory=Profiler)

    @property
    def final_test(self) -> float:
        return self.test_accuracy[-1][1]


def seed_streams(base_seed: int, seed_index: int) -> dict[str, np.random.Generator]:
    root = np.random.SeedSequence([base_seed, seed_index])
    names = ("train_data", "test_data", "init", "shuffle", "emulator")
    return dict(zip(names, (np.random.default_rng(s) for s in root.spawn(len(names)))))


def train_seed(config: ExperimentConfig, seed_index: int,
               epochs: Optional[int] = None) -> SeedResult:
    """Train and evaluate one seed; epoch 0 is the untrained network."""
    tcfg = config.training
    epochs = tcfg.epochs if epochs is None else epochs
    streams = seed_streams(config.seed, seed_index)
    train_xy, train_y = make_dataset(config.dataset.train_size, streams["train_data"])
    test_xy, test_y = make_dataset(config.dataset.test_size, streams["test_data"])
    network = build_network(config, streams["init"], config.backend == "mock",
                            int(streams["emulator"].integers(2**31)))
    optimizer = Adam(lr=tcfg.lr)
    result = SeedResult(seed_index)
    result.test_accuracy.append((0, evaluate(network, test_xy, test_y, config)))
    n_batches = len(train_xy) // tcfg.batch_size
    for epoch in range(1, epochs + 1):
        if tcfg.lr_step and epoch > 1 and (epoch - 1) % tcfg.lr_step == 0:
            optimizer.state.lr *= tcfg.lr_gamma
        order = streams["shuffle"].permutation(len(train_xy))
        losses, correct = [], 0
        with Profiler() as prof:
            for b in range(n_batches):
                idx = order[b * tcfg.batch_size:(b + 1) * tcfg.batch_size]
                readout = forward(network, train_xy[idx], config)
                loss = max_over_time_loss(readout, train_y[idx])
                with section("gradient calculation"):
                    grads = Tape(loss).backward()
                params = network.parameters()
                updated = optimizer.step(
                    params, {k: grads.get(v) for k, v in params.items()})
                network.load_parameters(updated)
                losses.append(loss.item())
                correct += int(np.sum(decide(readout) == train_y[idx]))
        result.profiler.merge(prof)
        result.train_loss.append((epoch, float(np.mean(losses))))
        result.train_accuracy.append((epoch, correct / (n_batches * tcfg.batch_size)))
        if epoch % tcfg.eval_every == 0 or epoch == epochs:
            result.test_accuracy.append(
                (epoch, evaluate(network, test_xy, test_y, config)))
        log.info("seed %d epoch %d loss %.4f train %.3f test %.3f", seed_index,
                 epoch, result.train_loss[-1][1], result.train_accuracy[-1][1],
                 result.test_accuracy[-1][1])
    return result


@dataclass
class BenchmarkReport:
    seeds: list[SeedResult]
    profiler: Profiler
    wall_seconds: float

    @property
    def final_accuracies(self) -> np.ndarray:
        return np.array([s.final_test for s in self.seeds])

    @property
    def mean(self) -> float:
        return float(self.final_accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.final_accuracies.std())

    def summary(self) -> str:
        return (f"test accuracy {100 * self.mean:.2f} +- {100 * self.std:.2f} % "
                f"over {len(self.seeds)} seed(s)")


def _train_seed_job(config: ExperimentConfig, seed_index: int) -> SeedResult:
    with precision(config.precision):
        return train_seed(config, seed_index)


def run_benchmark(config: ExperimentConfig, out_dir: Union[str, Path, None] = None,
                  jobs: int = 1) -> BenchmarkReport:
    """Train all seeds and optionally write the CSV reports.

    :param jobs: worker processes; seeds share no state, so ``jobs > 1`` gives
        the same accuracies as a sequential run.
    """
    started = time.perf_counter()
    seeds = range(config.training.seeds)
    if jobs > 1:
        with ProcessPoolExecutor(min(jobs, len(seeds))) as pool:
            results = list(pool.map(_train_seed_job, [config] * len(seeds), seeds))
    else:
        results = [_train_seed_job(config, k) for k in seeds]
    profiler = Profiler()
    for r in results:
        profiler.merge(r.profiler)
    report = BenchmarkReport(results, profiler, time.perf_counter() - started)
    if out_dir is not None:
        write_reports(report, config, out_dir)
    return report


def write_reports(report: BenchmarkReport, config: ExperimentConfig,
                  out_dir: Union[str, Path]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "accuracy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "seed", "split", "value"])
        for res in report.seeds:
            rows = [(e, "test", v) for e, v in res.test_accuracy]
            rows += [(e, "train", v) for e, v in res.train_accuracy]
            for epoch, split, value in sorted(rows):
                writer.writerow([epoch, res.seed, split, f"{value:.6f}"])
    report.profiler.to_csv(out / "profile.csv")
    streams = seed_streams(config.seed, 0)
    xy, labels = make_dataset(config.dataset.test_size, streams["test_data"])
    with open(out / "samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(xy, labels):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", CLASS_NAMES[label]])
