"""Wall-clock runtime breakdown of training epochs.

Sections nest: time spent in an inner section is charged to the inner one
only, so the exclusive times of all sections add up to the time of the
outermost one. Outside an active :class:`Profiler` the ``section`` helper
costs one context-variable lookup.
"""
from __future__ import annotations

import contextlib
import contextvars
import csv
import time
from pathlib import Path
from typing import Iterator, Optional, Union

SECTIONS = (
    "network emulation duration",
    "additional hardware runtime",
    "additional back-end overhead",
    "data transform",
    "additional front-end overhead",
    "gradient calculation",
)
TOTAL = "total duration"

_active: contextvars.ContextVar[Optional["Profiler"]] = contextvars.ContextVar(
    "snnforge_profiler", default=None)


class Profiler:
    """Accumulates exclusive wall-clock seconds per named section."""

    def __init__(self, default: str = "additional front-end overhead") -> None:
        self.default = default
        self.seconds: dict[str, float] = {name: 0.0 for name in SECTIONS}
        self.total = 0.0
        self._stack: list[list] = []
        self._token = None

    def __enter__(self) -> "Profiler":
        self._token = _active.set(self)
        self._started = time.perf_counter()
        self._stack.append([self.default, self._started])
        return self

    def __exit__(self, *exc) -> None:
        now = time.perf_counter()
        name, since = self._stack.pop()
        self.seconds[name] = self.seconds.get(name, 0.0) + now - since
        self.total += now - self._started
        _active.reset(self._token)
        self._token = None

    def _push(self, name: str) -> None:
        now = time.perf_counter()
        top = self._stack[-1]
        self.seconds[top[0]] = self.seconds.get(top[0], 0.0) + now - top[1]
        self._stack.append([name, now])

    def _pop(self) -> None:
        now = time.perf_counter()
        name, since = self._stack.pop()
        self.seconds[name] = self.seconds.get(name, 0.0) + now - since
        self._stack[-1][1] = now

    def merge(self, other: "Profiler") -> None:
        for name, value in other.seconds.items():
            self.seconds[name] = self.seconds.get(name, 0.0) + value
        self.total += other.total

    def rows(self) -> list[tuple[str, float, float]]:
        """``(section, seconds, percent of total)`` in report order."""
        names = list(SECTIONS) + [n for n in self.seconds if n not in SECTIONS]
        total = self.total or 1.0
        rows = [(n, self.seconds.get(n, 0.0), 100.0 * self.seconds.get(n, 0.0) / total)
                for n in names]
        rows.append((TOTAL, self.total, 100.0 if self.total else 0.0))
        return rows

    def format_table(self) -> str:
        lines = [f"{'section':<32}{'duration [s]':>14}{'rel. duration [%]':>20}"]
        for name, seconds, percent in self.rows():
            if name == TOTAL:
                lines.append("-" * 66)
            lines.append(f"{name:<32}{seconds:>14.3f}{percent:>20.1f}")
        return "\n".join(lines)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["section", "seconds", "percent"])
            for name, seconds, percent in self.rows():
                writer.writerow([name, f"{seconds:.6f}", f"{percent:.3f}"])


@contextlib.contextmanager
def section(name: str) -> Iterator[None]:
    profiler = _active.get()
    if profiler is None:
        yield
        return
    profiler._push(name)
    try:
        yield
    finally:
        profiler._pop()


def active() -> Optional[Profiler]:
    return _active.get()
