"""Compiled inner loops for neuron integration and its reverse-time sweep.

Both the emulator and the mock (numerical) forward use :func:`integrate`,
so the two backends share one discretization.
"""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def integrate(current, rec_weights, decay_syn, decay_mem, gain, threshold,
              reset, leak, ref_steps, gate, spiking):
    """Exponential-Euler integration of a population over a time grid.

    current: [T, B, N] synaptic input per step.
    rec_weights: [N, N] recurrent weights applied with one step delay to the
        gated output; pass a 0x0 array when there is no recurrence.
    Returns (internal spikes, gated output spikes, post-reset membrane).
    """
    steps, batch, size = current.shape
    has_rec = rec_weights.shape[0] == size and size > 0
    internal = np.zeros_like(current)
    output = np.zeros_like(current)
    membrane = np.empty_like(current)
    syn = np.zeros(size, dtype=current.dtype)
    mem = np.zeros(size, dtype=current.dtype)
    rec = np.zeros(size, dtype=current.dtype)
    refractory = np.zeros(size, dtype=np.int64)
    for b in range(batch):
        syn[:] = 0.0
        mem[:] = leak
        refractory[:] = 0
        for t in range(steps):
            rec[:] = 0.0
            if has_rec and t > 0:
                for k in range(size):
                    if output[t - 1, b, k] != 0.0:
                        for n in range(size):
                            rec[n] += output[t - 1, b, k] * rec_weights[k, n]
            for n in range(size):
                syn[n] = syn[n] * decay_syn[n] + current[t, b, n] + rec[n]
                if refractory[n] > 0:
                    refractory[n] -= 1
                    mem[n] = reset
                else:
                    mem[n] = leak + (mem[n] - leak) * decay_mem[n] + syn[n] * gain[n]
                    if spiking and mem[n] >= threshold[n]:
                        internal[t, b, n] = 1.0
                        output[t, b, n] = gate[b, n]
                        mem[n] = reset
                        refractory[n] = ref_steps
                membrane[t, b, n] = mem[n]
    return internal, output, membrane


@njit(cache=True, fastmath=True)
def reverse_sweep(grad_spikes, grad_membrane, spikes, membrane, gate,
                  decay_syn, decay_mem, gain, threshold, beta, ref_steps,
                  spiking):
    """Gradient of the loss w.r.t. the per-step input current.

    The threshold derivative is replaced by the SuperSpike surrogate
    evaluated on ``membrane``; the reset path carries no gradient and
    refractory steps are inferred from ``spikes``.
    """
    steps, batch, size = grad_membrane.shape
    grad_current = np.empty_like(grad_membrane)
    carry_mem = np.zeros(size, dtype=grad_membrane.dtype)
    carry_syn = np.zeros(size, dtype=grad_membrane.dtype)
    keep = np.ones((steps, size), dtype=grad_membrane.dtype)
    direct = np.zeros((steps, size), dtype=grad_membrane.dtype)
    for b in range(batch):
        keep[:] = 1.0
        if spiking:
            for t in range(steps):
                for n in range(size):
                    sg = 1.0 / (beta * abs(membrane[t, b, n] - threshold[n]) + 1.0)
                    direct[t, n] = gate[b, n] * grad_spikes[t, b, n] * sg * sg
            # steps held at reset after a spike pass no gradient
            for t in range(steps):
                for k in range(1, min(ref_steps, steps - 1 - t) + 1):
                    for n in range(size):
                        if spikes[t, b, n] != 0.0:
                            keep[t + k, n] = 0.0
        carry_mem[:] = 0.0
        carry_syn[:] = 0.0
        for t in range(steps - 1, -1, -1):
            for n in range(size):
                grad_v = grad_membrane[t, b, n] + carry_mem[n]
                grad_pre = (grad_v * (1.0 - spikes[t, b, n]) + direct[t, n]) * keep[t, n]
                grad_i = grad_pre * gain[n] + carry_syn[n]
                grad_current[t, b, n] = grad_i
                carry_mem[n] = grad_pre * decay_mem[n]
                carry_syn[n] = grad_i * decay_syn[n]
    return grad_current


@njit(cache=True)
def interpolate_groups(times, values, starts, counts, grid, out):
    """Piecewise-linear resampling of sorted per-group samples onto ``grid``.

    out: [groups, len(grid)]; constant extrapolation outside the samples.
    """
    n_grid = grid.shape[0]
    for g in range(starts.shape[0]):
        lo = starts[g]
        hi = lo + counts[g] - 1
        k = lo
        for q in range(n_grid):
            tq = grid[q]
            while k < hi and times[k + 1] <= tq:
                k += 1
            if tq <= times[lo]:
                out[g, q] = values[lo]
            elif k >= hi:
                out[g, q] = values[hi]
            else:
                t0 = times[k]
                t1 = times[k + 1]
                w = (tq - t0) / (t1 - t0)
                out[g, q] = values[k] + w * (values[k + 1] - values[k])
    return out


@njit(cache=True)
def grouped_in_order(group, times):
    """True if samples are grouped by id with strictly increasing times."""
    for k in range(1, group.shape[0]):
        if group[k] < group[k - 1]:
            return False
        if group[k] == group[k - 1] and times[k] <= times[k - 1]:
            return False
    return True
