"""Runtime breakdown of one training epoch (64 batches of 75) per backend.

Prints the section table for each backend next to the per-epoch reference
percentages measured on the chip.
"""
import argparse
from pathlib import Path

from snnforge.config import load_config
from snnforge.yinyang import train_seed

ROOT = Path(__file__).resolve().parent.parent
# percent of a 28.7 s hardware epoch
REFERENCE = {
    "network emulation duration": 1.0,
    "additional hardware runtime": 26.3,
    "additional back-end overhead": 16.5,
    "data transform": 45.7,
    "additional front-end overhead": 8.6,
    "gradient calculation": 2.9,
    "total duration": 100.0,
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--config", default=str(ROOT / "configs" / "yinyang.json"))
    parser.add_argument("--epochs", type=int, default=1)
    args = parser.parse_args()
    for backend in ("emulator", "mock"):
        config = load_config(args.config)
        config.backend = backend
        prof = train_seed(config, 0, epochs=args.epochs).profiler
        print(f"\n[{backend}] {args.epochs} epoch(s)")
        print(f"{'section':<32}{'seconds':>10}{'%':>8}{'chip %':>9}")
        for name, seconds, percent in prof.rows():
            print(f"{name:<32}{seconds:>10.3f}{percent:>8.1f}{REFERENCE.get(name, 0):>9.1f}")


if __name__ == "__main__":
    main()
