"""Command-line entry point.

``run`` executes a configured experiment and writes CSV reports;
``inspect`` prints the extracted topology of a config's network.
Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
usage, 3 missing or unreadable file.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import precision
from .config import ExperimentConfig, TopologyConfig, load_config
from .emulator import Emulator, NeuronParams, SpikeTrain
from .errors import ConfigError, GraphError, SNNForgeError, UsageError
from .graph import (LI, LIF, DataHandle, Dropout, InputHandle, Instance, Module,
                    Synapse, set_mock_mode)
from .profiling import Profiler
from .yinyang import hardware_profile, neuron_params, run_benchmark

log = logging.getLogger("snnforge")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "SNNFORGE_SEED"


def build_topology(config: ExperimentConfig, instance: Optional[Instance] = None
                   ) -> tuple[Instance, dict[str, InputHandle], dict[str, DataHandle]]:
    """Register the invocations of a ``topology`` section into an instance."""
    topo = config.topology or TopologyConfig()
    if instance is None:
        instance = Instance(Emulator(hardware_profile(config), seed=config.seed),
                            mock=config.backend == "mock")
    rng = np.random.default_rng(config.seed)
    inputs = {spec.name: InputHandle(spec.size, spec.name) for spec in topo.inputs}
    modules: dict[str, Module] = {}
    neuron = neuron_params(config.network.hidden_neuron)
    for spec in topo.modules:
        if spec.name in modules or spec.name in inputs:
            raise ConfigError(f"topology.modules: duplicate name {spec.name!r}")
        if spec.kind == "synapse":
            weight = rng.normal(config.network.hidden_weight_mean,
                                config.network.hidden_weight_std,
                                (spec.in_features, spec.size))
            modules[spec.name] = Synapse(spec.in_features, spec.size, instance,
                                         weight=weight, name=spec.name,
                                         weight_scale=config.network.hidden_weight_scale)
        elif spec.kind == "lif":
            modules[spec.name] = LIF(spec.size, instance, neuron, name=spec.name)
        elif spec.kind == "li":
            modules[spec.name] = LI(spec.size, instance,
                                    neuron_params(config.network.readout_neuron),
                                    name=spec.name)
        elif spec.kind == "dropout":
            modules[spec.name] = Dropout(spec.size, instance, p=spec.p,
                                         seed=config.seed, name=spec.name)
        else:
            raise ConfigError(f"topology.modules.{spec.name}: unknown kind "
                              f"{spec.kind!r}")
    handles: dict[str, DataHandle] = dict(inputs)
    outputs: dict[str, DataHandle] = {}
    for k, inv in enumerate(topo.invocations):
        if inv.module not in modules:
            raise ConfigError(f"topology.invocations[{k}]: unknown module "
                              f"{inv.module!r}")
        if inv.input not in handles:
            raise GraphError(f"topology.invocations[{k}]: handle {inv.input!r} "
                             "is consumed but never produced")
        if inv.output in handles:
            raise ConfigError(f"topology.invocations[{k}]: handle {inv.output!r} "
                              "is produced twice")
        out = modules[inv.module](handles[inv.input])
        handles[inv.output] = outputs[inv.output] = out
    for name in topo.mock:
        if name not in modules:
            raise ConfigError(f"topology.mock: unknown module {name!r}")
        set_mock_mode(modules[name], True)
    return instance, inputs, outputs


def _random_inputs(config: ExperimentConfig, inputs: dict[str, InputHandle]) -> None:
    topo = config.topology
    rng = np.random.default_rng(config.seed)
    steps = int(np.ceil(config.runtime.duration / config.runtime.dt - 1e-9))
    for spec in topo.inputs:
        dense = rng.random((steps, topo.batch_size, spec.size)) < spec.rate
        t, b, n = np.nonzero(dense)
        inputs[spec.name].set(SpikeTrain(t * config.runtime.dt, b, n),
                              topo.batch_size)


def run_graph(config: ExperimentConfig, out_dir: Path) -> str:
    """Single forward run of a topology; writes graph, spike counts, profile."""
    with precision(config.precision), Profiler() as prof:
        instance, inputs, outputs = build_topology(config)
        _random_inputs(config, inputs)
        instance.run(config.runtime.duration, config.runtime.dt)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump = instance.last_graph.dump()
    (out_dir / "graph.txt").write_text(dump)
    with open(out_dir / "spike_counts.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["handle", "batch", "unit", "count"])
        for name, handle in outputs.items():
            if handle.spikes is None:
                continue
            counts = handle.spikes.data.sum(axis=0).astype(np.int64)
            for (b, n), c in np.ndenumerate(counts):
                writer.writerow([name, b, n, c])
    prof.to_csv(out_dir / "profile.csv")
    return dump


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace
                     ) -> ExperimentConfig:
    if getattr(args, "backend", None):
        config.backend = args.backend
    if getattr(args, "seeds", None) is not None:
        config.training.seeds = args.seeds
    if getattr(args, "epochs", None) is not None:
        config.training.epochs = args.epochs
    if getattr(args, "precision", None) is not None:
        config.precision = args.precision
    if getattr(args, "strict_resources", None) is not None:
        config.hardware.strict = args.strict_resources == "on"
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            config.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    return config.validate()


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out = Path(args.out)
    if config.experiment == "graph":
        run_graph(config, out)
        print(f"graph run complete; reports in {out}")
        return EXIT_OK
    report = run_benchmark(config, out, jobs=args.jobs)
    print(report.summary())
    print(report.profiler.format_table())
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if config.experiment == "yinyang":
        from .yinyang import build_network
        with precision(config.precision):
            net = build_network(config, np.random.default_rng(config.seed),
                                config.backend == "mock")
        instance = net.instance
    else:
        instance, _, _ = build_topology(config)
    sys.stdout.write(instance.extract_topology().dump())
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--backend", choices=("emulator", "mock"))
    p.add_argument("--strict-resources", choices=("on", "off"),
                   dest="strict_resources")
    p.add_argument("--precision", type=int, choices=(32, 64))
    p.add_argument("-v", "--verbose", action="count", default=0)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnforge", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment and write reports")
    _add_common(run)
    run.add_argument("--seeds", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--out", default="results", help="report directory")
    run.add_argument("--jobs", type=int, default=1,
                     help="train seeds in this many worker processes")
    run.set_defaults(func=cmd_run)
    inspect = sub.add_parser("inspect", help="print the extracted topology")
    _add_common(inspect)
    inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphError, UsageError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SNNForgeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
