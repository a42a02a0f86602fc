"""Software stand-in for the analog neuromorphic substrate.

The emulator integrates LIF and LI populations on a fixed time grid, applies
integer synapse weights, reports spikes as sparse event lists and samples
membranes at jittered ADC times, digitized to 10-bit counts. Fixed-pattern
variation of the neuron parameters is drawn once per emulated chip.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import ParameterError, QuantizationError, ResourceError
from .profiling import section

log = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, "Tensor"]  # noqa: F821


@dataclass(frozen=True)
class HardwareProfile:
    """Resource limits and analog nuisance parameters of the emulated chip.

    Times are in microseconds. ``noise`` is the relative spread of the
    per-neuron fixed-pattern variation of tau_mem, tau_syn and threshold.
    ``quantize=False`` lets float weights through unchanged, which is only
    meant for matching the emulator against the numerical simulation.
    """

    max_neurons: int = 512
    max_fan_in: int = 256
    weight_max: int = 63
    cadc_period: float = 2.0
    cadc_jitter: float = 0.2
    adc_bits: int = 10
    adc_offset: float = 512.0
    adc_scale: float = 128.0
    noise: float = 0.05
    noise_seed: int = 1234
    strict: bool = True
    quantize: bool = True

    def __post_init__(self) -> None:
        if self.cadc_period <= 0:
            raise ParameterError("cadc_period must be positive")
        if not 0 <= self.cadc_jitter < self.cadc_period / 2:
            raise ParameterError("cadc_jitter must lie in [0, cadc_period / 2)")
        if not 0 <= self.noise < 1:
            raise ParameterError("noise spread must lie in [0, 1)")
        if self.weight_max <= 0:
            raise ParameterError("weight_max must be positive")
        if self.adc_scale == 0:
            raise ParameterError("adc_scale must be nonzero")

    @property
    def weight_levels(self) -> tuple[int, int]:
        return -self.weight_max, self.weight_max

    @property
    def adc_max(self) -> int:
        return 2 ** self.adc_bits - 1

    def ideal(self) -> "HardwareProfile":
        """Noise-free, unquantized copy used to compare against simulation."""
        return replace(self, noise=0.0, quantize=False)


@dataclass(frozen=True)
class NeuronParams:
    """Neuron parameters in model units; times in microseconds."""

    tau_mem: float = 10.0
    tau_syn: float = 5.0
    threshold: float = 1.0
    reset: float = 0.0
    leak: float = 0.0
    refractory: float = 1.0

    def __post_init__(self) -> None:
        if self.tau_mem <= 0 or self.tau_syn <= 0:
            raise ParameterError("time constants must be positive")
        if self.threshold <= self.leak:
            raise ParameterError("threshold must exceed leak")
        if self.refractory < 0:
            raise ParameterError("refractory period must be non-negative")

    def per_unit(self, size: int) -> "UnitParams":
        return UnitParams(
            tau_mem=np.full(size, self.tau_mem),
            tau_syn=np.full(size, self.tau_syn),
            threshold=np.full(size, self.threshold),
            reset=self.reset, leak=self.leak, refractory=self.refractory)


@dataclass(frozen=True)
class UnitParams:
    """Per-unit parameter arrays, as realized on a (noisy) chip."""

    tau_mem: np.ndarray
    tau_syn: np.ndarray
    threshold: np.ndarray
    reset: float
    leak: float
    refractory: float

    def __len__(self) -> int:
        return len(self.tau_mem)

    def __getitem__(self, index) -> "UnitParams":
        return replace(self, tau_mem=self.tau_mem[index],
                       tau_syn=self.tau_syn[index],
                       threshold=self.threshold[index])

    def coefficients(self, dt: float, dtype=np.float64) -> dict:
        """Per-step decay factors and input gain of the exponential-Euler map."""
        return dict(
            decay_syn=np.exp(-dt / self.tau_syn).astype(dtype),
            decay_mem=np.exp(-dt / self.tau_mem).astype(dtype),
            gain=(dt / self.tau_mem).astype(dtype),
            threshold=np.asarray(self.threshold, dtype=dtype),
            reset=dtype(self.reset), leak=dtype(self.leak),
            ref_steps=int(round(self.refractory / dt)))


def _as_unit_params(params: Union[NeuronParams, UnitParams], size: int) -> UnitParams:
    if isinstance(params, NeuronParams):
        return params.per_unit(size)
    if len(params) != size:
        raise ParameterError(f"parameters for {len(params)} units given, "
                             f"population has {size}")
    return params


@dataclass
class SpikeTrain:
    """Sparse spike events ``(time_us, batch, unit)`` sorted by time."""

    times: np.ndarray
    batch: np.ndarray
    units: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        self.batch = np.asarray(self.batch, dtype=np.int64).ravel()
        self.units = np.asarray(self.units, dtype=np.int64).ravel()
        if not len(self.times) == len(self.batch) == len(self.units):
            raise ValueError("event field lengths differ")
        order = np.lexsort((self.units, self.batch, self.times))
        if np.any(order != np.arange(len(order))):
            self.times = self.times[order]
            self.batch = self.batch[order]
            self.units = self.units[order]

    @classmethod
    def empty(cls) -> "SpikeTrain":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_events(cls, events: Sequence[tuple]) -> "SpikeTrain":
        if not events:
            return cls.empty()
        t, b, n = zip(*events)
        return cls(np.array(t), np.array(b), np.array(n))

    def __len__(self) -> int:
        return len(self.times)

    def events(self) -> list[tuple[float, int, int]]:
        return list(zip(self.times.tolist(), self.batch.tolist(),
                        self.units.tolist()))

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_us", "batch", "unit"])
            for t, b, n in self.events():
                writer.writerow([f"{t:.6f}", b, n])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SpikeTrain":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["time_us"]) for r in rows],
                   [int(r["batch"]) for r in rows],
                   [int(r["unit"]) for r in rows])


@dataclass
class MembraneSamples:
    """Sparse ADC samples ``(time_us, batch, unit, counts)``.

    Stored grouped by (batch, unit) with increasing time inside each group.
    """

    times: np.ndarray
    batch: np.ndarray
    units: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        self.batch = np.asarray(self.batch, dtype=np.int64).ravel()
        self.units = np.asarray(self.units, dtype=np.int64).ravel()
        self.values = np.asarray(self.values, dtype=np.int64).ravel()
        if not (len(self.times) == len(self.batch) == len(self.units)
                == len(self.values)):
            raise ValueError("sample field lengths differ")

    def __len__(self) -> int:
        return len(self.times)

    def sorted(self) -> "MembraneSamples":
        order = np.lexsort((self.times, self.units, self.batch))
        return MembraneSamples(self.times[order], self.batch[order],
                               self.units[order], self.values[order])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_us", "batch", "unit", "adc_value"])
            for t, b, n, v in zip(self.times.tolist(), self.batch.tolist(),
                                  self.units.tolist(), self.values.tolist()):
                writer.writerow([f"{t:.6f}", b, n, v])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "MembraneSamples":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["time_us"]) for r in rows],
                   [int(r["batch"]) for r in rows],
                   [int(r["unit"]) for r in rows],
                   [int(r["adc_value"]) for r in rows])


def digitize(membrane: np.ndarray, profile: HardwareProfile) -> np.ndarray:
    counts = np.rint(profile.adc_offset + membrane * profile.adc_scale)
    return np.clip(counts, 0, profile.adc_max).astype(np.int64)


def cadc_sample_times(duration: float, profile: HardwareProfile,
                      rng: Optional[np.random.Generator]) -> np.ndarray:
    """Jittered sample instants of one ADC readout sweep in ``[0, duration)``."""
    nominal = np.arange(0.0, duration, profile.cadc_period)
    if rng is not None and profile.cadc_jitter > 0:
        nominal = nominal + rng.uniform(-profile.cadc_jitter,
                                        profile.cadc_jitter, len(nominal))
    return np.clip(nominal, 0.0, np.nextafter(duration, 0.0))


def sample_membrane(membrane: np.ndarray, dt: float, profile: HardwareProfile,
                    rng: Optional[np.random.Generator] = None) -> MembraneSamples:
    """Read a dense ``[T, B, N]`` membrane trace through the emulated ADC.

    All units of a batch entry are sampled at the same instants; each batch
    entry gets its own jitter draw.
    """
    steps, batch, size = membrane.shape
    duration = steps * dt
    nominal = np.arange(0.0, duration, profile.cadc_period)
    n_samples = len(nominal)
    t_all = np.broadcast_to(nominal, (batch, n_samples))
    if rng is not None and profile.cadc_jitter > 0:
        t_all = t_all + rng.uniform(-profile.cadc_jitter, profile.cadc_jitter,
                                    (batch, n_samples))
    t_all = np.clip(t_all, 0.0, np.nextafter(duration, 0.0))     # [B, S]
    k_all = np.minimum((t_all / dt + 1e-9).astype(np.int64), steps - 1)
    b_idx = np.arange(batch)[:, None]
    values = membrane[k_all, b_idx, :]        # [B, S, N]
    counts = digitize(values, profile)
    # group by (batch, unit), time increasing inside each group
    counts = counts.transpose(0, 2, 1)        # [B, N, S]
    return MembraneSamples(
        times=np.broadcast_to(t_all[:, None, :], (batch, size, n_samples)),
        batch=np.broadcast_to(np.arange(batch)[:, None, None],
                              (batch, size, n_samples)),
        units=np.broadcast_to(np.arange(size)[None, :, None],
                              (batch, size, n_samples)),
        values=counts)


def _dense_to_train(spikes: np.ndarray, dt: float) -> SpikeTrain:
    t, b, n = np.unravel_index(np.flatnonzero(spikes != 0), spikes.shape)
    return SpikeTrain(t * dt, b, n)


def check_population(size: int, profile: HardwareProfile) -> None:
    if size > profile.max_neurons:
        _violation(f"population of {size} neurons exceeds the "
                   f"{profile.max_neurons} available", profile)


def _violation(message: str, profile: HardwareProfile,
               error: type = ResourceError) -> None:
    if profile.strict:
        raise error(message)
    log.warning("resource limit exceeded (non-strict): %s", message)


def simulate(current: np.ndarray, params: Union[NeuronParams, UnitParams],
             dt: float, *, spiking: bool = True,
             spike_gate: Optional[np.ndarray] = None,
             recurrent_weights: Optional[np.ndarray] = None):
    """Dense integration; returns (internal spikes, gated spikes, membrane)."""
    current = np.ascontiguousarray(current)
    if dt <= 0:
        raise ParameterError("dt must be positive")
    steps, batch, size = current.shape
    unit = _as_unit_params(params, size)
    coef = unit.coefficients(dt, current.dtype.type)
    gate = (np.ones((batch, size), dtype=current.dtype) if spike_gate is None
            else np.asarray(spike_gate, dtype=current.dtype))
    if gate.shape != (batch, size):
        raise ParameterError(f"spike gate shape {gate.shape} does not match "
                             f"(batch, units) = {(batch, size)}")
    rec = (np.zeros((0, 0), dtype=current.dtype) if recurrent_weights is None
           else np.ascontiguousarray(recurrent_weights, dtype=current.dtype))
    return _kernels.integrate(
        current, rec, coef["decay_syn"], coef["decay_mem"], coef["gain"],
        coef["threshold"], coef["reset"], coef["leak"], coef["ref_steps"],
        gate, spiking)


def lif_forward(input_current: ArrayLike, params: Union[NeuronParams, UnitParams],
                profile: HardwareProfile, dt: float,
                spike_gate: Optional[np.ndarray] = None,
                rng: Optional[np.random.Generator] = None,
                recurrent_weights: Optional[np.ndarray] = None,
                ) -> tuple[SpikeTrain, MembraneSamples]:
    """Emulate a LIF population and return its recorded observables.

    Gated units keep integrating and resetting but emit no events.
    """
    spikes, membrane = _lif_dense(input_current, params, profile, dt,
                                  spike_gate, recurrent_weights)
    with section("additional hardware runtime"):
        return _dense_to_train(spikes, dt), sample_membrane(membrane, dt, profile, rng)


def _lif_dense(input_current, params, profile, dt, spike_gate=None,
               recurrent_weights=None, spiking=True):
    current = np.asarray(getattr(input_current, "data", input_current))
    if current.ndim != 3:
        raise ParameterError(f"input current must be [T, B, N], got {current.shape}")
    check_population(current.shape[2], profile)
    with section("network emulation duration"):
        _, out, membrane = simulate(current, params, dt, spiking=spiking,
                                    spike_gate=spike_gate,
                                    recurrent_weights=recurrent_weights)
    return out, membrane


def li_forward(input_current: ArrayLike, params: Union[NeuronParams, UnitParams],
               profile: HardwareProfile, dt: float,
               rng: Optional[np.random.Generator] = None) -> MembraneSamples:
    """Emulate a leaky-integrator population (no threshold, no spikes)."""
    _, membrane = _lif_dense(input_current, params, profile, dt, spiking=False)
    with section("additional hardware runtime"):
        return sample_membrane(membrane, dt, profile, rng)


def project(spikes_dense: ArrayLike, hw_weights: np.ndarray,
            profile: HardwareProfile, current_lsb: float = 1.0,
            check_fan_in: bool = True) -> np.ndarray:
    """Synaptic current ``spikes @ w * current_lsb`` for integer weights."""
    spikes = np.asarray(getattr(spikes_dense, "data", spikes_dense))
    weights = np.asarray(hw_weights)
    if spikes.ndim != 3 or weights.ndim != 2 or spikes.shape[2] != weights.shape[0]:
        raise ParameterError(f"cannot project spikes {spikes.shape} through "
                             f"weights {weights.shape}")
    if profile.quantize:
        low, high = profile.weight_levels
        if not np.issubdtype(weights.dtype, np.integer) and np.any(
                weights != np.round(weights)):
            raise QuantizationError("hardware weights must be integers")
        if weights.size and (weights.min() < low or weights.max() > high):
            raise QuantizationError(
                f"weights span [{weights.min()}, {weights.max()}], "
                f"representable levels are [{low}, {high}]")
    if check_fan_in and weights.shape[0] > profile.max_fan_in:
        _violation(f"fan-in of {weights.shape[0]} exceeds the "
                   f"{profile.max_fan_in} synapses per neuron", profile)
    return spikes @ (weights.astype(spikes.dtype) * spikes.dtype.type(current_lsb))


def apply_noise(params: NeuronParams, profile: HardwareProfile, seed: int,
                size: int) -> UnitParams:
    """Per-unit fixed-pattern variation of tau_mem, tau_syn and threshold.

    Multiplicative Gaussian spread ``profile.noise``, clipped at three
    standard deviations.
    """
    unit = params.per_unit(size)
    spread = profile.noise
    if spread == 0:
        return unit
    rng = np.random.default_rng(seed)
    draws = np.clip(rng.standard_normal((3, size)), -3.0, 3.0)
    factors = 1.0 + spread * draws
    threshold = params.leak + (params.threshold - params.leak) * factors[2]
    return replace(unit, tau_mem=unit.tau_mem * factors[0],
                   tau_syn=unit.tau_syn * factors[1], threshold=threshold)


@dataclass
class PopulationRecord:
    """Raw observables of one emulated population."""

    spikes: Optional[SpikeTrain]
    membrane: MembraneSamples
    dense_spikes: np.ndarray = field(repr=False)


class Emulator:
    """Executes placed populations of a network on the emulated chip.

    Populations are placed onto consecutive neuron circuits in the order they
    are executed; each circuit has its own fixed-pattern parameter variation
    drawn from ``profile.noise_seed``. ADC jitter comes from ``seed``.
    """

    def __init__(self, profile: Optional[HardwareProfile] = None,
                 seed: int = 0) -> None:
        self.profile = profile or HardwareProfile()
        self.rng = np.random.default_rng(seed)
        self._placement: dict[str, slice] = {}
        self._next_circuit = 0

    def reset_placement(self) -> None:
        self._placement.clear()
        self._next_circuit = 0

    def place(self, name: str, size: int) -> slice:
        if name not in self._placement:
            start = self._next_circuit
            if start + size > self.profile.max_neurons:
                _violation(f"placing {name} ({size} neurons) needs "
                           f"{start + size} circuits, chip has "
                           f"{self.profile.max_neurons}", self.profile)
            self._placement[name] = slice(start, start + size)
            self._next_circuit = start + size
        return self._placement[name]

    def realized_params(self, name: str, params: NeuronParams,
                        size: int) -> UnitParams:
        circuits = self.place(name, size)
        n_total = max(self.profile.max_neurons, circuits.stop)
        chip = apply_noise(params, self.profile, self.profile.noise_seed, n_total)
        return chip[circuits]

    def run_population(self, name: str, inputs: Sequence[tuple[np.ndarray, np.ndarray, float]],
                       params: NeuronParams, dt: float, *, size: int,
                       spiking: bool = True,
                       recurrent: Optional[tuple[np.ndarray, float]] = None,
                       spike_gate: Optional[np.ndarray] = None,
                       dtype=np.float32) -> PopulationRecord:
        """Emulate one population driven by ``(spikes, hw_weights, lsb)`` inputs."""
        profile = self.profile
        with section("additional back-end overhead"):
            unit = self.realized_params(name, params, size)
            fan_in = sum(w.shape[0] for _, w, _ in inputs)
            if recurrent is not None:
                fan_in += recurrent[0].shape[0]
            if fan_in > profile.max_fan_in:
                _violation(f"{name} receives {fan_in} inputs per neuron, "
                           f"limit is {profile.max_fan_in}", profile)
        with section("network emulation duration"):
            current = None
            for spikes, weights, lsb in inputs:
                part = project(spikes.astype(dtype, copy=False), weights,
                               profile, lsb, check_fan_in=False)
                current = part if current is None else current + part
            rec = None
            if recurrent is not None:
                rec = np.asarray(recurrent[0], dtype=dtype) * dtype(recurrent[1])
            _, out, membrane = simulate(current, unit, dt, spiking=spiking,
                                        spike_gate=spike_gate,
                                        recurrent_weights=rec)
        with section("additional hardware runtime"):
            samples = sample_membrane(membrane, dt, profile, self.rng)
            train = _dense_to_train(out, dt) if spiking else None
        return PopulationRecord(train, samples, out)


def grid_steps(duration: float, dt: float) -> int:
    return int(math.ceil(duration / dt - 1e-9))
