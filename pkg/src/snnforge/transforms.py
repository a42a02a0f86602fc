"""Conversions between sparse backend observables and dense tensors.

Covers binning of spike events, interpolation and normalization of ADC
membrane samples, and the float to 6-bit weight mapping (with a
straight-through estimator for training).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .autodiff import Context, Function, Tensor, TimeTensor, as_tensor, get_dtype
from .emulator import MembraneSamples, SpikeTrain, grid_steps
from .errors import DataError, ParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Dense simulation grid of ``ceil(duration / dt)`` steps, in microseconds."""

    duration: float
    dt: float

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.duration <= 0:
            raise ParameterError("grid duration and dt must be positive")

    @property
    def steps(self) -> int:
        return grid_steps(self.duration, self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps) * self.dt


GridLike = Union[TimeGrid, tuple]


def _grid(grid: GridLike) -> TimeGrid:
    return grid if isinstance(grid, TimeGrid) else TimeGrid(*grid)


def spikes_to_dense(train: SpikeTrain, grid: GridLike, shape: tuple[int, int],
                    return_collisions: bool = False):
    """Bin events onto the grid; several events in one bin saturate at 1."""
    grid = _grid(grid)
    n_batch, n_units = shape
    out = np.zeros((grid.steps, n_batch, n_units), dtype=get_dtype())
    collisions = 0
    if len(train):
        if (train.batch.min() < 0 or train.batch.max() >= n_batch
                or train.units.min() < 0 or train.units.max() >= n_units):
            raise IndexError(f"spike indices exceed population shape {shape}")
        bins = np.floor(train.times / grid.dt + 1e-9).astype(np.int64)
        if bins.min() < 0 or bins.max() >= grid.steps:
            raise IndexError(f"spike times outside [0, {grid.duration}) us")
        flat = (bins * n_batch + train.batch) * n_units + train.units
        unique = np.unique(flat)
        collisions = len(flat) - len(unique)
        out.reshape(-1)[unique] = 1.0
        if collisions:
            log.debug("%d spike bin collisions saturated to 1", collisions)
    tensor = TimeTensor(out, dtype=out.dtype)
    return (tensor, collisions) if return_collisions else tensor


def dense_to_spikes(dense, dt: float) -> SpikeTrain:
    """Events at the start time of every nonzero bin."""
    data = np.asarray(getattr(dense, "data", dense))
    t, b, n = np.nonzero(data)
    return SpikeTrain(t * dt, b, n)


def interpolate_membrane(samples: MembraneSamples, grid: GridLike,
                         shape: tuple[int, int]) -> TimeTensor:
    """Linear interpolation of ADC samples at every grid point.

    Values before the first and after the last sample of a unit are held
    constant.
    """
    grid = _grid(grid)
    n_batch, n_units = shape
    group = samples.batch * n_units + samples.units
    if len(samples) and (samples.batch.min() < 0 or samples.batch.max() >= n_batch
                         or samples.units.min() < 0 or samples.units.max() >= n_units):
        raise IndexError(f"sample indices exceed population shape {shape}")
    times = samples.times
    values = samples.values.astype(np.float64)
    if not _kernels.grouped_in_order(group, times):
        order = np.lexsort((times, group))
        group, times, values = group[order], times[order], values[order]
    counts = np.bincount(group, minlength=n_batch * n_units)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise DataError(f"no membrane samples for batch {missing // n_units}, "
                        f"unit {missing % n_units}")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    out = np.empty((n_batch * n_units, grid.steps), dtype=get_dtype())
    _kernels.interpolate_groups(times, values, starts, counts.astype(np.int64),
                                grid.times.astype(np.float64), out)
    dense = out.reshape(n_batch, n_units, grid.steps).transpose(2, 0, 1)
    return TimeTensor(dense, dtype=out.dtype)


def normalize_membrane(dense, offset: float, scale: float) -> Tensor:
    """ADC counts to model units: ``(counts - offset) / scale``."""
    if scale == 0:
        raise ParameterError("membrane scale must be nonzero")
    x = as_tensor(dense)
    return Tensor._result((x.data - x.dtype.type(offset)) / x.dtype.type(scale))


def denormalize_membrane(dense, offset: float, scale: float) -> Tensor:
    if scale == 0:
        raise ParameterError("membrane scale must be nonzero")
    x = as_tensor(dense)
    return Tensor._result(x.data * x.dtype.type(scale) + x.dtype.type(offset))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def weight_to_hardware(weights, scale: float, weight_max: int = 63
                       ) -> tuple[np.ndarray, int]:
    """Integer hardware weights and the number of saturated entries."""
    if scale <= 0:
        raise ParameterError("weight scale must be positive")
    w = np.asarray(getattr(weights, "data", weights), dtype=np.float64)
    rounded = _round_half_away(w * scale)
    saturated = int(np.count_nonzero(np.abs(rounded) > weight_max))
    return np.clip(rounded, -weight_max, weight_max).astype(np.int64), saturated


class QuantizeSTE(Function):
    """Forward: the hardware-representable weight. Backward: identity."""

    @staticmethod
    def forward(ctx: Context, weights: np.ndarray, *, scale: float,
                weight_max: int = 63) -> np.ndarray:
        hw, _ = weight_to_hardware(weights, scale, weight_max)
        return (hw / scale).astype(weights.dtype)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad,)


def quantize_ste(weights: Tensor, scale: float, weight_max: int = 63) -> Tensor:
    return QuantizeSTE.apply(weights, scale=scale, weight_max=weight_max)
