"""Exact time-local master equation built from the amplitude functions.

With m(t) = u'(t)/u(t) the reduced dynamics obeys

    drho/dt = -i [s(t) sp sm + r(t) sp + r*(t) sm, rho]
              + gamma(t) (2 sm rho sp - sp sm rho - rho sp sm)

with s = -Im m, gamma = -Re m and r = i (h' - h m).  The coefficients
blow up at zeros of u; such nodes are flagged singular, their
coefficient values are filled in linearly for inspection, and
propagation refuses to march through them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rk4 import interp_half, propagate_density_vec, rk4_step_matrices
from .errors import SolverError
from .kernel import KernelSolution, TimeGrid
from .observables import EvolutionTrace, as_density


@dataclass(frozen=True)
class CoefficientTrack:
    """Time-dependent coefficients of the exact master equation."""

    grid: TimeGrid
    s: np.ndarray
    gamma: np.ndarray
    r: np.ndarray
    singular_flags: np.ndarray


def _fill_flagged(vals: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace flagged nodes by linear interpolation between good
    neighbors; runs touching either end are extrapolated from the two
    nearest good nodes."""
    if good.all():
        return vals
    idx = np.arange(len(vals), dtype=float)
    gi = np.flatnonzero(good)
    out = np.interp(idx, idx[gi], vals[gi])
    if gi[0] > 0 and len(gi) >= 2:
        slope = (vals[gi[1]] - vals[gi[0]]) / (gi[1] - gi[0])
        out[:gi[0]] = vals[gi[0]] + slope * (idx[:gi[0]] - gi[0])
    if gi[-1] < len(vals) - 1 and len(gi) >= 2:
        slope = (vals[gi[-1]] - vals[gi[-2]]) / (gi[-1] - gi[-2])
        out[gi[-1] + 1:] = vals[gi[-1]] + slope * (idx[gi[-1] + 1:] - gi[-1])
    return out


def build_coefficients(ks: KernelSolution, u_floor: float = 1e-6) -> CoefficientTrack:
    """Extract s(t), gamma(t), r(t) from a solved amplitude pair.

    Nodes with |u| < u_floor cannot support the logarithmic derivative
    and get flagged; all nodes flagged is a hard error.
    """
    singular = np.abs(ks.u) < u_floor
    if singular.all():
        raise SolverError(f"|u| < {u_floor:g} on the whole grid; coefficients undefined")
    good = ~singular
    m = np.zeros_like(ks.u)
    m[good] = ks.u_dot[good] / ks.u[good]
    s = _fill_flagged(-m.imag, good)
    gamma = _fill_flagged(-m.real, good)
    if ks.h is not None:
        r = 1j * (ks.h_dot - ks.h * m)
        r = _fill_flagged(r.real, good) + 1j * _fill_flagged(r.imag, good)
    else:
        r = np.zeros(len(ks.u), dtype=complex)
    return CoefficientTrack(grid=ks.grid, s=s, gamma=gamma, r=r, singular_flags=singular)


def generator_stack(s, gamma, r) -> np.ndarray:
    """Master-equation generators acting on vec(rho) = (ee, eg, ge, gg).

    Accepts scalar or per-time arrays; returns shape (T, 4, 4).  Every
    column sums to zero, so the trace is conserved identically.
    """
    s, gamma, r = np.broadcast_arrays(np.asarray(s, dtype=complex),
                                      np.asarray(gamma, dtype=complex),
                                      np.asarray(r, dtype=complex))
    rc = np.conj(r)
    T = s.shape[0] if s.ndim else 1
    g = np.zeros((T, 4, 4), dtype=complex)
    g[:, 0, 0] = -2.0 * gamma
    g[:, 0, 1] = 1j * rc
    g[:, 0, 2] = -1j * r
    g[:, 1, 0] = 1j * r
    g[:, 1, 1] = -(1j * s + gamma)
    g[:, 1, 3] = -1j * r
    g[:, 2, 0] = -1j * rc
    g[:, 2, 2] = 1j * s - gamma
    g[:, 2, 3] = 1j * rc
    g[:, 3, 0] = 2.0 * gamma
    g[:, 3, 1] = -1j * rc
    g[:, 3, 2] = 1j * r
    return g


def propagate_exact(rho0, ct: CoefficientTrack, trace_tol: float = 1e-9) -> EvolutionTrace:
    """March the exact master equation with RK4 on the coefficient grid.

    Stops at the first singular node, if any, and pads the remaining
    rows with NaN; the halt is reported on the returned trace.
    """
    rho0 = as_density(rho0)
    grid = ct.grid
    n_nodes = grid.n_steps + 1
    flagged = np.flatnonzero(ct.singular_flags)
    stop = int(flagged[0]) if len(flagged) else None
    last = n_nodes - 1 if stop is None else stop - 1
    if last < 1:
        raise SolverError("amplitude is singular from the start; nothing to propagate")

    g_half = generator_stack(interp_half(ct.s[:last + 1]),
                             interp_half(ct.gamma[:last + 1]),
                             interp_half(ct.r[:last + 1]))
    steps = rk4_step_matrices(g_half, grid.h)
    ys = propagate_density_vec(steps, rho0.reshape(4), trace_tol)
    rho = np.full((n_nodes, 2, 2), np.nan, dtype=complex)
    rho[:last + 1] = ys.reshape(-1, 2, 2)
    if stop is None:
        return EvolutionTrace(grid=grid, rho=rho, method="exact")
    t_sing = grid.times[stop]
    return EvolutionTrace(
        grid=grid, rho=rho, method="exact", truncated_at=float(grid.times[last]),
        halt_reason=f"singular amplitude (|u| under floor) at t = {t_sing:.6g}")
