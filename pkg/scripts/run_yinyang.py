"""Train the Yin-Yang benchmark and write accuracy/profile/sample reports.

    python scripts/run_yinyang.py --backend emulator --seeds 3 --out results/emu
"""
import argparse
import logging
from pathlib import Path

from snnforge.config import load_config
from snnforge.yinyang import run_benchmark

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--config", default=str(ROOT / "configs" / "yinyang.json"))
    parser.add_argument("--backend", choices=("mock", "emulator"), default="mock")
    parser.add_argument("--seeds", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/yinyang")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    config = load_config(args.config)
    config.backend = args.backend
    if args.seeds:
        config.training.seeds = args.seeds
    if args.epochs is not None:
        config.training.epochs = args.epochs
    report = run_benchmark(config.validate(), Path(args.out), jobs=args.jobs)
    print(report.summary())
    print(f"wall time {report.wall_seconds / 60:.1f} min")
    print(report.profiler.format_table())


if __name__ == "__main__":
    main()
