"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public names (``bin_counts``, ``lif_forward``, ``lif_backward``,
``fixed_point_lif``) dispatch to numba unless ``SAST_SNN_DISABLE_NUMBA`` is
set. Both variants stay importable under ``*_numpy`` / ``*_numba`` so tests and
the benchmark can compare them directly.

Array layout throughout is ``(T, B, N)``: time, batch, neurons.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

_INV_PI = 1.0 / math.pi


# ---------------------------------------------------------------------------
# event binning
# ---------------------------------------------------------------------------

def bin_counts_numpy(t_bin, pol, y, x, n_steps, height, width):
    """Accumulate event counts into a ``(n_steps, 2*height*width)`` grid."""
    plane = height * width
    flat = t_bin.astype(np.int64) * (2 * plane) + pol.astype(np.int64) * plane \
        + y.astype(np.int64) * width + x.astype(np.int64)
    counts = np.bincount(flat, minlength=n_steps * 2 * plane)
    return counts.reshape(n_steps, 2 * plane).astype(np.float64)


@njit
def bin_counts_numba(t_bin, pol, y, x, n_steps, height, width):
    plane = height * width
    counts = np.zeros((n_steps, 2 * plane), dtype=np.float64)
    for i in range(t_bin.shape[0]):
        counts[t_bin[i], pol[i] * plane + y[i] * width + x[i]] += 1.0
    return counts


# ---------------------------------------------------------------------------
# surrogate-forward / hard-spike LIF scan
# ---------------------------------------------------------------------------

def lif_forward_numpy(current, alpha, theta, slope, hard):
    """Unroll u_t = alpha*u_{t-1} + I_t - theta*s_{t-1}; s_t = f(u_t - theta).

    ``current`` already holds ``A x_t + b``. Returns membranes and spikes.
    """
    n_steps = current.shape[0]
    u = np.empty_like(current)
    s = np.empty_like(current)
    u_prev = np.zeros(current.shape[1:])
    s_prev = np.zeros(current.shape[1:])
    for t in range(n_steps):
        u_t = alpha * u_prev + current[t] - theta * s_prev
        z = u_t - theta
        if hard:
            s_t = (z >= 0.0).astype(np.float64)
        else:
            s_t = 0.5 + np.arctan(slope * z) * _INV_PI
        u[t] = u_t
        s[t] = s_t
        u_prev, s_prev = u_t, s_t
    return u, s


@njit
def lif_forward_numba(current, alpha, theta, slope, hard):
    n_steps, batch, n = current.shape
    u = np.empty_like(current)
    s = np.empty_like(current)
    inv_pi = 1.0 / np.pi
    # time outermost so the inner loop walks contiguous memory
    for t in range(n_steps):
        for b in range(batch):
            for j in range(n):
                if t > 0:
                    u_t = alpha * u[t - 1, b, j] + current[t, b, j] - theta[j] * s[t - 1, b, j]
                else:
                    u_t = alpha * 0.0 + current[t, b, j] - theta[j] * 0.0
                z = u_t - theta[j]
                if hard:
                    s_t = 1.0 if z >= 0.0 else 0.0
                else:
                    s_t = 0.5 + np.arctan(slope * z) * inv_pi
                u[t, b, j] = u_t
                s[t, b, j] = s_t
    return u, s


def lif_backward_numpy(grad_s, u, alpha, theta, slope):
    """Reverse-mode pass through the scan; returns dL/dI_t for every step.

    Two recurrent paths feed step t from step t+1: the leak (du_{t+1}/du_t =
    alpha) and the delayed reset (du_{t+1}/ds_t = -theta).
    """
    n_steps = grad_s.shape[0]
    grad_i = np.empty_like(grad_s)
    gu_next = np.zeros(grad_s.shape[1:])
    scale = slope * _INV_PI
    for t in range(n_steps - 1, -1, -1):
        kz = slope * (u[t] - theta)
        dsig = scale / (1.0 + kz * kz)
        ds = grad_s[t] - theta * gu_next
        gu = ds * dsig + alpha * gu_next
        grad_i[t] = gu
        gu_next = gu
    return grad_i


@njit
def lif_backward_numba(grad_s, u, alpha, theta, slope):
    n_steps, batch, n = grad_s.shape
    grad_i = np.empty_like(grad_s)
    scale = slope / np.pi
    for b in range(batch):
        for j in range(n):
            th = theta[j]
            gu_next = 0.0
            for t in range(n_steps - 1, -1, -1):
                kz = slope * (u[t, b, j] - th)
                dsig = scale / (1.0 + kz * kz)
                ds = grad_s[t, b, j] - th * gu_next
                gu = ds * dsig + alpha * gu_next
                grad_i[t, b, j] = gu
                gu_next = gu
    return grad_i


# ---------------------------------------------------------------------------
# fixed-point hard-spike scan
# ---------------------------------------------------------------------------

def fixed_point_lif_numpy(current, bias, theta, leak, frac_bits, qmin, qmax, delayed_reset):
    """Integer LIF scan with saturating Qm.n membranes.

    All operands are integers in units of 2**-frac_bits. Leak is applied as
    ``(leak * u) >> frac_bits`` (arithmetic shift, floors). Returns int8 spikes
    and the pre-reset membrane at every step.
    """
    n_steps = current.shape[0]
    spikes = np.empty(current.shape, dtype=np.int8)
    u_pre = np.empty(current.shape, dtype=np.int64)
    u = np.zeros(current.shape[1:], dtype=np.int64)
    s_prev = np.zeros(current.shape[1:], dtype=np.int64)
    for t in range(n_steps):
        leaked = np.clip((leak * u) >> frac_bits, qmin, qmax)
        total = leaked + np.clip(current[t], qmin, qmax) + bias
        if delayed_reset:
            total = total - theta * s_prev
        u = np.clip(total, qmin, qmax)
        u_pre[t] = u
        fired = (u >= theta).astype(np.int64)
        spikes[t] = fired
        if not delayed_reset:
            u = np.clip(u - theta * fired, qmin, qmax)
        s_prev = fired
    return spikes, u_pre


@njit
def _sat(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit
def fixed_point_lif_numba(current, bias, theta, leak, frac_bits, qmin, qmax, delayed_reset):
    n_steps, batch, n = current.shape
    spikes = np.empty(current.shape, dtype=np.int8)
    u_pre = np.empty(current.shape, dtype=np.int64)
    for b in range(batch):
        for j in range(n):
            th = theta[j]
            u = np.int64(0)
            s_prev = np.int64(0)
            for t in range(n_steps):
                leaked = _sat((leak * u) >> frac_bits, qmin, qmax)
                total = leaked + _sat(current[t, b, j], qmin, qmax) + bias[j]
                if delayed_reset:
                    total -= th * s_prev
                u = _sat(total, qmin, qmax)
                u_pre[t, b, j] = u
                fired = np.int64(1) if u >= th else np.int64(0)
                spikes[t, b, j] = fired
                if not delayed_reset and fired:
                    u = _sat(u - th, qmin, qmax)
                s_prev = fired
    return spikes, u_pre


if USE_NUMBA:
    bin_counts = bin_counts_numba
    lif_forward = lif_forward_numba
    lif_backward = lif_backward_numba
    fixed_point_lif = fixed_point_lif_numba
    BACKEND = "numba"
else:
    bin_counts = bin_counts_numpy
    lif_forward = lif_forward_numpy
    lif_backward = lif_backward_numpy
    fixed_point_lif = fixed_point_lif_numpy
    BACKEND = "numpy"
