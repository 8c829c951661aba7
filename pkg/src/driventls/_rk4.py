"""Shared fixed-step RK4 machinery for time-local master equations.

All time-local propagators in this package march vec(rho) with
precomputed 4x4 step matrices built from the generator sampled on a
half-step lattice, so the expensive part is fully vectorized and the
sequential loop is nothing but small matrix-vector products.
"""

from __future__ import annotations

import numpy as np

from .errors import AccuracyError


def interp_half(vals: np.ndarray) -> np.ndarray:
    """Resample node values onto the half-step lattice (cubic, 4 points).

    Input shape (N+1, ...), output (2N+1, ...): even entries are the
    original nodes, odd entries interpolated midpoints.
    """
    v = np.asarray(vals)
    N = v.shape[0] - 1
    out = np.empty((2 * N + 1,) + v.shape[1:], dtype=np.result_type(v.dtype, float))
    out[0::2] = v
    if N >= 3:
        out[3:-2:2] = (-v[:-3] + 9.0 * v[1:-2] + 9.0 * v[2:-1] - v[3:]) / 16.0
        out[1] = (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
        out[-2] = (5.0 * v[-1] + 15.0 * v[-2] - 5.0 * v[-3] + v[-4]) / 16.0
    else:
        out[1::2] = 0.5 * (v[:-1] + v[1:])
    return out


def rk4_step_matrices(g_half: np.ndarray, h: float) -> np.ndarray:
    """Classical RK4 step matrices from generators on the half lattice.

    g_half has shape (2N+1, 4, 4); the result (N, 4, 4) maps the state
    at node n to node n+1.
    """
    g0 = g_half[0:-1:2]
    gm = g_half[1::2]
    g1 = g_half[2::2]
    eye = np.eye(4, dtype=complex)
    k1 = g0
    k2 = gm @ (eye + (0.5 * h) * k1)
    k3 = gm @ (eye + (0.5 * h) * k2)
    k4 = g1 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_density_vec(steps: np.ndarray, y0: np.ndarray,
                          trace_tol: float = 1e-9) -> np.ndarray:
    """Apply the step matrices sequentially with per-step trace control.

    The generators used here conserve the trace identically, so any
    drift is pure arithmetic noise; it is renormalized away each step
    and a drift beyond trace_tol aborts.
    """
    out = np.empty((len(steps) + 1, 4), dtype=complex)
    out[0] = y0
    y = np.array(y0, dtype=complex)
    for n, m in enumerate(steps):
        y = m @ y
        tr = y[0] + y[3]
        if abs(tr - 1.0) > trace_tol:
            raise AccuracyError(
                f"trace drifted by {abs(tr - 1.0):.3e} at step {n + 1}, "
                f"beyond the {trace_tol:.1e} bound")
        y = y / tr
        out[n + 1] = y
    return out
