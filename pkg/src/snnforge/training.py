"""Surrogate-gradient learning rules, readout decision, dropout and Adam.

The neuron backward rules run a reverse-time sweep over the unrolled
exponential-Euler dynamics. When a population was emulated, the sweep is
driven by the injected observations (dense spikes and interpolated
membrane) instead of any simulated state.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import _kernels
from .autodiff import (Context, Function, Tensor, get_dtype, max_over_time,
                       softmax_cross_entropy)
from .emulator import NeuronParams, UnitParams, simulate
from .errors import DimensionError, ParameterError
from .profiling import section

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SurrogateConfig:
    beta: float = 10.0
    kind: str = "superspike"

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ParameterError("surrogate steepness beta must be positive")
        if self.kind != "superspike":
            raise ParameterError(f"unknown surrogate {self.kind!r}")


def superspike(v_rel, beta: float = 10.0):
    """SuperSpike pseudo-derivative ``1 / (beta * |v_rel| + 1)**2``."""
    v = np.asarray(getattr(v_rel, "data", v_rel))
    return 1.0 / (beta * np.abs(v) + 1.0) ** 2


def _coefficients(params: Union[NeuronParams, UnitParams], size: int, dt: float,
                  dtype) -> dict:
    unit = params.per_unit(size) if isinstance(params, NeuronParams) else params
    return unit.coefficients(dt, dtype)


def lif_backward(grad_spikes: np.ndarray, grad_membrane: np.ndarray,
                 spikes: np.ndarray, membrane: np.ndarray,
                 params: Union[NeuronParams, UnitParams], dt: float, *,
                 beta: float = 10.0, spike_gate: Optional[np.ndarray] = None,
                 spiking: bool = True) -> np.ndarray:
    """Input-current gradient of a LIF (or, with ``spiking=False``, LI) layer.

    ``spikes`` and ``membrane`` are the observations on the unrolled grid;
    the threshold derivative is ``superspike(membrane - threshold)`` and the
    reset is treated as a constant.
    """
    grad_membrane = np.asarray(grad_membrane)
    shape = grad_membrane.shape
    if len(shape) != 3:
        raise DimensionError(f"gradients must be [T, B, N], got {shape}")
    for name, arr in (("spike gradient", grad_spikes), ("spikes", spikes),
                      ("membrane", membrane)):
        if np.shape(arr) != shape:
            raise DimensionError(f"{name} grid {np.shape(arr)} does not match "
                                 f"the unrolled grid {shape}")
    dtype = grad_membrane.dtype
    coef = _coefficients(params, shape[2], dt, dtype.type)
    gate = (np.ones(shape[1:], dtype=dtype) if spike_gate is None
            else np.asarray(spike_gate, dtype=dtype))
    return _kernels.reverse_sweep(
        np.ascontiguousarray(grad_spikes, dtype=dtype),
        np.ascontiguousarray(grad_membrane),
        np.ascontiguousarray(spikes, dtype=dtype),
        np.ascontiguousarray(membrane, dtype=dtype), gate,
        coef["decay_syn"], coef["decay_mem"], coef["gain"], coef["threshold"],
        float(beta), coef["ref_steps"], spiking)


class LIFFunction(Function):
    """LIF population: ``current -> (spikes, membrane)``.

    With injected observations the forward returns them unchanged (the
    hardware already ran); otherwise it simulates the dynamics.
    """

    @staticmethod
    def forward(ctx: Context, current: np.ndarray, *, params, dt: float,
                beta: float = 10.0, spike_gate=None):
        ctx.save("parameter", params=params, dt=dt, beta=beta, gate=spike_gate)
        if ctx.injected:
            spikes, membrane = ctx.injected
            return (spikes.astype(current.dtype, copy=False),
                    membrane.astype(current.dtype, copy=False))
        with section("network emulation duration"):
            _, spikes, membrane = simulate(current, params, dt,
                                           spike_gate=spike_gate)
        ctx.save("simulated", spikes=spikes, membrane=membrane)
        return spikes, membrane

    @staticmethod
    def backward(ctx: Context, grad_spikes, grad_membrane):
        if ctx.injected:
            spikes, membrane = ctx.injected
        else:
            spikes, membrane = ctx.saved("spikes"), ctx.saved("membrane")
        grad = lif_backward(grad_spikes, grad_membrane, spikes, membrane,
                            ctx.saved("params"), ctx.saved("dt"),
                            beta=ctx.saved("beta"), spike_gate=ctx.saved("gate"))
        return (grad,)


class LIFunction(Function):
    """Leaky-integrator readout: ``current -> membrane``.

    The dynamics are linear, so the backward needs no state at all.
    """

    @staticmethod
    def forward(ctx: Context, current: np.ndarray, *, params, dt: float):
        ctx.save("parameter", params=params, dt=dt)
        if ctx.injected:
            return ctx.injected[0].astype(current.dtype, copy=False)
        with section("network emulation duration"):
            _, _, membrane = simulate(current, params, dt, spiking=False)
        return membrane

    @staticmethod
    def backward(ctx: Context, grad_membrane):
        zeros = np.zeros_like(grad_membrane)
        grad = lif_backward(zeros, grad_membrane, zeros, zeros,
                            ctx.saved("params"), ctx.saved("dt"), spiking=False)
        return (grad,)


def decide(readout_membrane) -> np.ndarray:
    """Class index ``argmax_k max_t v_k(t)`` per batch entry (ties: lowest k)."""
    data = np.asarray(getattr(readout_membrane, "data", readout_membrane))
    if data.ndim != 3 or data.shape[2] < 2:
        raise DimensionError(f"readout must be [T, B, K>=2], got {data.shape}")
    return np.argmax(data.max(axis=0), axis=1)


def max_over_time_loss(readout_membrane: Tensor, labels) -> Tensor:
    scores, _ = max_over_time(readout_membrane)
    return softmax_cross_entropy(scores, labels)


def dropout_mask(shape: tuple[int, int], p: float,
                 seed: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """Per (batch, neuron) keep mask with keep probability ``1 - p``."""
    if not 0 <= p < 1:
        raise ParameterError("dropout probability must lie in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return (rng.random(shape) >= p).astype(get_dtype())


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a name -> Tensor parameter dict."""

    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8) -> None:
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps)

    def step(self, params: dict[str, Tensor],
             grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
        st = self.state
        b1, b2 = st.betas
        st.step += 1
        updated = {}
        for name, param in params.items():
            grad = grads.get(name)
            if grad is None:
                updated[name] = param
                continue
            grad = np.asarray(grad)
            if grad.shape != param.shape:
                raise ParameterError(f"gradient for {name} has shape {grad.shape}, "
                                     f"parameter has {param.shape}")
            m = st.m.get(name, np.zeros_like(param.data))
            v = st.v.get(name, np.zeros_like(param.data))
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            st.m[name], st.v[name] = m, v
            m_hat = m / (1 - b1 ** st.step)
            v_hat = v / (1 - b2 ** st.step)
            new = param.data - st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
            updated[name] = Tensor(new, requires_grad=True, dtype=param.dtype)
        return updated


def adam_step(optimizer: Adam, params: dict[str, Tensor],
              grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return optimizer.step(params, grads)


def save_checkpoint(path: Union[str, Path], params: dict[str, Tensor],
                    optimizer: Optional[Adam] = None, **meta) -> None:
    """Write parameters and optimizer state to a ``.npz`` archive."""
    arrays = {"format_version": np.array(CHECKPOINT_VERSION)}
    for name, tensor in params.items():
        arrays[f"param/{name}"] = np.asarray(tensor.data)
    if optimizer is not None:
        st = optimizer.state
        arrays["adam/step"] = np.array(st.step)
        arrays["adam/lr"] = np.array(st.lr)
        arrays["adam/betas"] = np.array(st.betas)
        arrays["adam/eps"] = np.array(st.eps)
        for name in st.m:
            arrays[f"adam/m/{name}"] = st.m[name]
            arrays[f"adam/v/{name}"] = st.v[name]
    for key, value in meta.items():
        arrays[f"meta/{key}"] = np.asarray(value)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: Union[str, Path]) -> tuple[dict[str, Tensor], Optional[Adam], dict]:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        params, meta = {}, {}
        optimizer = None
        if "adam/step" in data:
            optimizer = Adam(float(data["adam/lr"]), tuple(data["adam/betas"].tolist()),
                             float(data["adam/eps"]))
            optimizer.state.step = int(data["adam/step"])
        for key in data.files:
            if key.startswith("param/"):
                arr = data[key]
                params[key[6:]] = Tensor(arr, requires_grad=True, dtype=arr.dtype)
            elif key.startswith("adam/m/"):
                optimizer.state.m[key[7:]] = data[key]
            elif key.startswith("adam/v/"):
                optimizer.state.v[key[7:]] = data[key]
            elif key.startswith("meta/"):
                meta[key[5:]] = data[key]
    return params, optimizer, meta
