"""Independent reference implementations used to check the package.

Each oracle is written from the model definition directly, without calling
into the code it checks.
"""
import math

import numpy as np


def yinyang_label(x, y, r_small=0.1, r_big=0.5):
    """Reference Yin-Yang class of one point (0 yang, 1 yin, 2 dots, -1 outside)."""
    if math.sqrt((x - r_big) ** 2 + (y - r_big) ** 2) > r_big:
        return -1
    d_right = math.sqrt((x - 1.5 * r_big) ** 2 + (y - r_big) ** 2)
    d_left = math.sqrt((x - 0.5 * r_big) ** 2 + (y - r_big) ** 2)
    if d_right < r_small or d_left < r_small:
        return 2
    criterion1 = d_right <= r_small
    criterion2 = r_small < d_left <= 0.5 * r_big
    criterion3 = y > r_big and d_right > 0.5 * r_big
    return int(criterion1 or criterion2 or criterion3)


def yinyang_area_fractions(r_small=0.1, r_big=0.5):
    """Exact class areas relative to the big circle (yang, yin, dots)."""
    dots = 2 * r_small ** 2 / r_big ** 2
    return ((1 - dots) / 2, (1 - dots) / 2, dots)


def lif_neuron_reference(current, tau_mem, tau_syn, threshold, reset, leak,
                         ref_steps, dt, spiking=True):
    """Scalar exponential-Euler simulation of one neuron.

    Returns (spikes, membrane) lists; the membrane is recorded after reset.
    """
    a, b = math.exp(-dt / tau_syn), math.exp(-dt / tau_mem)
    gain = dt / tau_mem
    i, v, hold = 0.0, leak, 0
    spikes, membrane = [], []
    for x in current:
        i = i * a + x
        z = 0.0
        if hold > 0:
            hold -= 1
            v = reset
        else:
            v = leak + (v - leak) * b + i * gain
            if spiking and v >= threshold:
                z, v, hold = 1.0, reset, ref_steps
        spikes.append(z)
        membrane.append(v)
    return spikes, membrane


def lif_bptt_reference(grad_spikes, grad_membrane, spikes, membrane, tau_mem,
                       tau_syn, threshold, ref_steps, dt, beta):
    """Surrogate gradient of ``sum(gs * z + gm * v)`` w.r.t. each input step.

    Computed in forward mode: one tangent propagation per input step, with
    dz/dv replaced by ``1 / (beta |v_rec - threshold| + 1)^2`` on the
    recorded membrane, the reset treated as constant, and steps within
    ``ref_steps`` after a spike held without derivative.
    """
    steps = len(membrane)
    a, b = math.exp(-dt / tau_syn), math.exp(-dt / tau_mem)
    gain = dt / tau_mem
    held = [any(spikes[t - k] for k in range(1, ref_steps + 1) if t - k >= 0)
            for t in range(steps)]
    grads = []
    for k in range(steps):
        di, dv, total = 0.0, 0.0, 0.0
        for t in range(steps):
            di = di * a + (1.0 if t == k else 0.0)
            if held[t]:
                dv = 0.0
                dz = 0.0
            else:
                dv_pre = dv * b + di * gain
                sg = 1.0 / (beta * abs(membrane[t] - threshold) + 1.0) ** 2
                dz = sg * dv_pre
                dv = dv_pre * (1.0 - spikes[t])
            total += grad_spikes[t] * dz + grad_membrane[t] * dv
        grads.append(total)
    return grads


def li_step_response(n, drive, tau_mem, tau_syn, dt):
    """Closed form of the discrete LI response to a constant per-step drive.

    The discrete synaptic and membrane recursions are geometric, so the
    membrane after ``n`` updates is ``v* + c_m b^n + c_s a^n`` with
    ``a = exp(-dt/tau_syn)``, ``b = exp(-dt/tau_mem)``.
    """
    a, b = math.exp(-dt / tau_syn), math.exp(-dt / tau_mem)
    gain = dt / tau_mem
    i_inf = drive / (1 - a)
    v_inf = gain * i_inf / (1 - b)
    c_s = -gain * i_inf * a * a / (a - b)
    c_m = -b * (v_inf + c_s / a)
    n = np.asarray(n, dtype=np.float64)
    return v_inf + c_m * b ** n + c_s * a ** n
