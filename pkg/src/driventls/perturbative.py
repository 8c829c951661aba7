"""Approximate master equations for the driven two-level system.

Four propagators share the conventions of the exact solver (vec(rho) =
(ee, eg, ge, gg), row-major kron):

* Markovian Lindblad equation with constant rate decay_rate / 2,
* second-order memory-kernel equation (time-nonlocal history integral),
* second-order time-convolutionless equation, either assembled from the
  running operator A(t) or from the dressed-basis coefficient expansion
  with an optional secular truncation.

The dressed basis of detuning * |e><e| + drive * sigma_x underlies both
the memory kernel (spectral form of exp(-iHt)) and the TCL coefficient
channels, so it is exposed as a small dataclass of its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import lu_factor, lu_solve

from ._rk4 import propagate_density_vec, rk4_step_matrices
from .errors import AccuracyError, ConfigurationError, DomainError
from .exact import generator_stack
from .kernel import TimeGrid
from .observables import (EvolutionTrace, PROJ_EXCITED, SIGMA_MINUS,
                          SIGMA_PLUS, SIGMA_X, as_density)
from .spectral import (FlatMemoryless, KernelMode, Lorentzian, SpectralDensity,
                       SpinBoson, correlation_kernel)

EYE2 = np.eye(2, dtype=complex)

# channel ordering for everything indexed by m
M_ORDER = (-1, 0, 1)


def _sup(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of rho -> a rho b on vec(rho), row-major convention."""
    return np.kron(a, b.T)


@dataclass(frozen=True)
class DressedBasis:
    """Eigendata of the driven-system Hamiltonian and the jump channels.

    phi1 and phi2 are the eigenvectors for lam1 = (detuning + w0)/2 and
    lam2 = (detuning - w0)/2; w0 is the generalized Rabi splitting and
    theta the mixing angle.  sigma_jk holds <phi_j|sigma_minus|phi_k>.
    The sign conventions assume drive >= 0.
    """

    detuning: float
    drive: float
    w0: float
    theta: float
    lam1: float
    lam2: float
    phi1: np.ndarray
    phi2: np.ndarray
    g0: float
    g1: float
    g2: float
    sigma_jk: np.ndarray

    @cached_property
    def proj1(self) -> np.ndarray:
        return np.outer(self.phi1, self.phi1.conj())

    @cached_property
    def proj2(self) -> np.ndarray:
        return np.outer(self.phi2, self.phi2.conj())

    @cached_property
    def sz_op(self) -> np.ndarray:
        """Dressed population-difference operator (eigenvalues +-1)."""
        return self.proj1 - self.proj2

    @cached_property
    def raise_op(self) -> np.ndarray:
        return np.outer(self.phi1, self.phi2.conj())

    @cached_property
    def lower_op(self) -> np.ndarray:
        return np.outer(self.phi2, self.phi1.conj())

    @cached_property
    def jump_ops(self) -> np.ndarray:
        """Channel operators C_m with sigma_minus = sum_m C_m, m in M_ORDER.

        C_m picks up the phase e^{-i m w0 tau} under conjugation with
        exp(-iHtau), which is what makes the channel split useful.
        """
        return np.stack([
            -self.g1 * self.lower_op,
            self.g0 * self.sz_op,
            self.g2 * self.raise_op,
        ])


def dressed_basis(detuning: float, drive: float) -> DressedBasis:
    w0 = math.hypot(detuning, 2.0 * drive)
    if w0 == 0.0:
        raise DomainError("dressed basis is degenerate at detuning = drive = 0")
    theta = math.atan2(detuning, 2.0 * drive)
    sin_t = detuning / w0
    a = math.sqrt(0.5 * (1.0 + sin_t))
    b = math.sqrt(0.5 * (1.0 - sin_t))
    g0 = drive / w0
    g1 = 0.5 * (w0 + detuning) / w0
    g2 = 0.5 * (w0 - detuning) / w0
    sigma_jk = np.array([[g0, g2], [-g1, -g0]], dtype=complex)
    return DressedBasis(
        detuning=detuning, drive=drive, w0=w0, theta=theta,
        lam1=0.5 * (detuning + w0), lam2=0.5 * (detuning - w0),
        phi1=np.array([a, b], dtype=complex),
        phi2=np.array([b, -a], dtype=complex),
        g0=g0, g1=g1, g2=g2, sigma_jk=sigma_jk)


def _hamiltonian(detuning: float, drive: float) -> np.ndarray:
    return detuning * PROJ_EXCITED + drive * SIGMA_X


def _liouvillian(h: np.ndarray) -> np.ndarray:
    return -1j * (_sup(h, EYE2) - _sup(EYE2, h))


def _resolve_mode(spec: SpectralDensity, mode: KernelMode | None) -> KernelMode:
    if mode is not None:
        return mode
    if isinstance(spec, Lorentzian):
        return KernelMode.closed_form()
    return KernelMode.numeric()


def tcl_coefficients(m: int, t, spec: SpectralDensity, detuning: float,
                     w0: float):
    """Running coefficient R_m(t) of the dressed channel m.

    For the Lorentzian density this is the closed form
    decay_rate * width * (1 - e^{-(width + iN)t}) / (width + iN) with
    N = detuning - peak_offset + m * w0; the flat density gives the
    constant decay_rate; anything else is integrated numerically.
    Equals twice the kernel transform int_0^t f(tau) e^{-i m w0 tau} dtau.
    """
    if m not in M_ORDER:
        raise ConfigurationError(f"channel index must be one of {M_ORDER}, got {m}")
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if np.any(tt < 0.0):
        raise DomainError("coefficients are defined for t >= 0 only")
    if isinstance(spec, Lorentzian):
        q = spec.width + 1j * (detuning - spec.peak_offset + m * w0)
        out = spec.decay_rate * spec.width * (1.0 - np.exp(-q * tt)) / q
    elif isinstance(spec, FlatMemoryless):
        out = spec.decay_rate * (tt > 0.0).astype(complex)
    else:
        n = max(4097, min(65537, 16 * tt.size + 1))
        if n % 2 == 0:
            n += 1
        tau = np.linspace(0.0, float(tt.max()), n) if tt.max() > 0 else np.zeros(1)
        f = correlation_kernel(spec, detuning, _resolve_mode(spec, None), tau)
        y = 2.0 * f * np.exp(-1j * m * w0 * tau)
        acc = np.concatenate(([0.0], cumulative_trapezoid(y, tau)))
        out = np.interp(tt, tau, acc.real) + 1j * np.interp(tt, tau, acc.imag)
    return out[0] if scalar else out


def _kernel_half_scale(spec: SpectralDensity, detuning: float,
                       mode: KernelMode, times: np.ndarray) -> np.ndarray:
    """f(t) samples; the delta-kernel flat case never reaches here."""
    return correlation_kernel(spec, detuning, mode, times)


def _rtilde_simpson(spec: SpectralDensity, detuning: float, w0: float,
                    mode: KernelMode, grid: TimeGrid) -> np.ndarray:
    """Half-scale channel transforms on the half-step lattice, shape (3, 2N+1).

    Accumulates int_0^t f e^{-imw0 tau} with composite Simpson over
    half-steps, sampling the kernel on the quarter-step lattice, so the
    accumulation error stays far below the dual-form tolerance.
    """
    n4 = 4 * grid.n_steps
    tq = grid.t0 + (grid.t_end - grid.t0) * np.arange(n4 + 1) / n4
    f = _kernel_half_scale(spec, detuning, mode, tq)
    out = np.empty((3, 2 * grid.n_steps + 1), dtype=complex)
    h2 = grid.h / 2.0
    for i, m in enumerate(M_ORDER):
        y = f * np.exp(-1j * m * w0 * tq)
        seg = (h2 / 6.0) * (y[0:-1:2] + 4.0 * y[1::2] + y[2::2])
        out[i, 0] = 0.0
        np.cumsum(seg, out=out[i, 1:])
    return out


def _rtilde_expanded(spec: SpectralDensity, detuning: float, w0: float,
                     mode: KernelMode, grid: TimeGrid) -> np.ndarray:
    """Half-scale transforms for the expanded route, shape (3, 2N+1).

    Closed form where available; otherwise cumulative trapezoid on a
    4x refined lattice.  Deliberately a different evaluation route from
    _rtilde_simpson so the two TCL forms cross-check each other.
    """
    th = grid.t0 + (grid.t_end - grid.t0) * np.arange(2 * grid.n_steps + 1) \
        / (2 * grid.n_steps)
    if isinstance(spec, Lorentzian):
        return np.stack([
            0.5 * tcl_coefficients(m, th, spec, detuning, w0) for m in M_ORDER])
    n8 = 8 * grid.n_steps
    tf = grid.t0 + (grid.t_end - grid.t0) * np.arange(n8 + 1) / n8
    f = _kernel_half_scale(spec, detuning, mode, tf)
    out = np.empty((3, 2 * grid.n_steps + 1), dtype=complex)
    for i, m in enumerate(M_ORDER):
        y = f * np.exp(-1j * m * w0 * tf)
        acc = np.concatenate(([0.0], cumulative_trapezoid(y, tf)))
        out[i] = acc[::4]
    return out


def _check_grid(grid: TimeGrid) -> None:
    if grid.t0 != 0.0:
        raise ConfigurationError("memory integrals require the grid to start at t = 0")


def _march_constant(g: np.ndarray, rho0: np.ndarray, grid: TimeGrid,
                    method: str, trace_tol: float) -> EvolutionTrace:
    g_half = np.broadcast_to(g, (2 * grid.n_steps + 1, 4, 4))
    steps = rk4_step_matrices(g_half, grid.h)
    ys = propagate_density_vec(steps, rho0.reshape(4), trace_tol)
    return EvolutionTrace(grid=grid, rho=ys.reshape(-1, 2, 2), method=method)


def propagate_markovian(rho0, detuning: float, drive: float, decay_rate: float,
                        grid: TimeGrid, trace_tol: float = 1e-9) -> EvolutionTrace:
    """Constant-coefficient Lindblad propagation at rate decay_rate.

    d rho/dt = -i[H, rho] + (decay_rate/2)(2 s- rho s+ - {s+ s-, rho}).
    """
    rho0 = as_density(rho0)
    _check_grid(grid)
    if not (decay_rate >= 0.0 and math.isfinite(decay_rate)):
        raise ConfigurationError(f"decay_rate must be nonnegative, got {decay_rate}")
    g = generator_stack(detuning, 0.5 * decay_rate, drive)[0]
    return _march_constant(g, rho0, grid, "markovian", trace_tol)


# ---------------------------------------------------------------------------
# Time-convolutionless forms.

def _tcl_from_a_blocks(c_ops: np.ndarray):
    """Superoperator blocks multiplying R~_m and conj(R~_m) in the A-form."""
    xm = np.stack([_sup(c, SIGMA_PLUS) - _sup(SIGMA_PLUS @ c, EYE2)
                   for c in c_ops])
    ym = np.stack([_sup(SIGMA_MINUS, c.conj().T) - _sup(EYE2, c.conj().T @ SIGMA_MINUS)
                   for c in c_ops])
    return xm, ym


def propagate_tcl_timelocal(rho0, detuning: float, drive: float,
                            spec: SpectralDensity, grid: TimeGrid,
                            mode: KernelMode | None = None,
                            trace_tol: float = 1e-9) -> EvolutionTrace:
    """Time-local second-order propagation built from the running A(t).

    A(t) = int_0^t f(tau) sigma_minus(-tau) dtau enters the generator as
    [A rho, s+] + [s-, rho A'], on top of the coherent part.
    """
    rho0 = as_density(rho0)
    _check_grid(grid)
    basis = dressed_basis(detuning, drive)
    l0 = _liouvillian(_hamiltonian(detuning, drive))
    if isinstance(spec, FlatMemoryless):
        g = generator_stack(detuning, 0.5 * spec.decay_rate, drive)[0]
        return _march_constant(g, rho0, grid, "tcl", trace_tol)
    mode = _resolve_mode(spec, mode)
    rt = _rtilde_simpson(spec, detuning, basis.w0, mode, grid)
    xm, ym = _tcl_from_a_blocks(basis.jump_ops)
    g_half = (l0[None, :, :]
              + np.einsum("mt,mab->tab", rt, xm)
              + np.einsum("mt,mab->tab", rt.conj(), ym))
    steps = rk4_step_matrices(g_half, grid.h)
    ys = propagate_density_vec(steps, rho0.reshape(4), trace_tol)
    return EvolutionTrace(grid=grid, rho=ys.reshape(-1, 2, 2), method="tcl")


def propagate_tcl_expanded(rho0, detuning: float, drive: float,
                           spec: SpectralDensity, grid: TimeGrid,
                           secular: bool = False,
                           mode: KernelMode | None = None,
                           trace_tol: float = 1e-9) -> EvolutionTrace:
    """Dressed-basis form: shift Hamiltonian + dissipator channel blocks.

    The (m, n) channel pair contributes
    R~_m (C_m rho C_n' - C_n'C_m rho) + conj(R~_n)(C_m rho C_n' - rho C_n'C_m);
    the diagonal pairs alone are the secular equation (Lamb shift plus
    Lindblad channels), the off-diagonal pairs are the nonsecular terms.
    """
    rho0 = as_density(rho0)
    _check_grid(grid)
    basis = dressed_basis(detuning, drive)
    l0 = _liouvillian(_hamiltonian(detuning, drive))
    c_ops = basis.jump_ops
    if isinstance(spec, FlatMemoryless):
        rt = np.full((3, 2 * grid.n_steps + 1), 0.5 * spec.decay_rate,
                     dtype=complex)
    else:
        mode = _resolve_mode(spec, mode)
        rt = _rtilde_expanded(spec, detuning, basis.w0, mode, grid)

    pairs = [(i, i) for i in range(3)] if secular else \
            [(i, j) for i in range(3) for j in range(3)]
    coef_m = np.stack([rt[i] for i, _ in pairs])
    coef_n = np.stack([rt[j].conj() for _, j in pairs])
    left = []
    right = []
    for i, j in pairs:
        sandwich = _sup(c_ops[i], c_ops[j].conj().T)
        left.append(sandwich - _sup(c_ops[j].conj().T @ c_ops[i], EYE2))
        right.append(sandwich - _sup(EYE2, c_ops[j].conj().T @ c_ops[i]))
    g_half = (l0[None, :, :]
              + np.einsum("pt,pab->tab", coef_m, np.stack(left))
              + np.einsum("pt,pab->tab", coef_n, np.stack(right)))
    steps = rk4_step_matrices(g_half, grid.h)
    ys = propagate_density_vec(steps, rho0.reshape(4), trace_tol)
    return EvolutionTrace(grid=grid, rho=ys.reshape(-1, 2, 2),
                          method="tcl_secular" if secular else "tcl_expanded")


# ---------------------------------------------------------------------------
# Memory-kernel (time-nonlocal) propagation.

def _spectral_projectors(detuning: float, drive: float):
    """Projectors and eigenvalues for exp(-iHt); degenerate H means H = 0."""
    w0 = math.hypot(detuning, 2.0 * drive)
    if w0 == 0.0:
        return (PROJ_EXCITED, EYE2 - PROJ_EXCITED), (0.0, 0.0)
    basis = dressed_basis(detuning, drive)
    return (basis.proj1, basis.proj2), (basis.lam1, basis.lam2)


def _memory_components(spec: Lorentzian, detuning: float, drive: float):
    """Exponential split K(tau) = sum_j e^{-z_j tau} B_j for Lorentzian baths.

    Eight components: (eigenpair a,b) x (kernel part f, f*); the constant
    matrices absorb the dressed projectors so the history integral can be
    accumulated with one complex decay factor per component.
    """
    projs, eps = _spectral_projectors(detuning, drive)
    rate = spec.decay_rate * spec.width / 2.0
    pole = spec.width + 1j * (detuning - spec.peak_offset)
    zs, mats = [], []
    for a in range(2):
        for b in range(2):
            osc = 1j * (eps[a] - eps[b])
            pa, pb = projs[a], projs[b]
            zs.append(pole + osc)
            mats.append(rate * (_sup(pa @ SIGMA_MINUS, pb @ SIGMA_PLUS)
                                - _sup(SIGMA_PLUS @ pa @ SIGMA_MINUS, pb)))
            zs.append(np.conj(pole) + osc)
            mats.append(rate * (_sup(SIGMA_MINUS @ pa, SIGMA_PLUS @ pb)
                                - _sup(pa, SIGMA_PLUS @ pb @ SIGMA_MINUS)))
    return np.array(zs), np.stack(mats)


def _memory_stack_generic(spec: SpectralDensity, detuning: float, drive: float,
                          mode: KernelMode, times: np.ndarray) -> np.ndarray:
    """K(tau) on the grid nodes for arbitrary kernels, shape (N+1, 4, 4)."""
    projs, eps = _spectral_projectors(detuning, drive)
    f = correlation_kernel(spec, detuning, mode, times)
    u = (np.exp(-1j * eps[0] * times)[:, None, None] * projs[0]
         + np.exp(-1j * eps[1] * times)[:, None, None] * projs[1])
    uh = u.conj().transpose(0, 2, 1)

    def pair(a_stack, b_stack):
        return np.einsum("tij,tlk->tikjl", a_stack, b_stack).reshape(-1, 4, 4)

    term1 = pair(u @ SIGMA_MINUS, uh @ SIGMA_PLUS)
    term2 = pair(SIGMA_PLUS[None] @ u @ SIGMA_MINUS, uh)
    term3 = pair(SIGMA_MINUS[None] @ u, SIGMA_PLUS[None] @ uh)
    term4 = pair(u, SIGMA_PLUS[None] @ uh @ SIGMA_MINUS)
    fc = f[:, None, None]
    return fc * (term1 - term2) + fc.conj() * (term3 - term4)


def propagate_nz(rho0, detuning: float, drive: float, spec: SpectralDensity,
                 grid: TimeGrid, mode: KernelMode | None = None,
                 trace_tol: float = 1e-9) -> EvolutionTrace:
    """Second-order memory-kernel propagation with full history convolution.

    Trapezoidal product integration with an implicit diagonal node, the
    same scheme as the amplitude solver; Lorentzian kernels use an O(1)
    per-step recursion for the history, generic kernels the O(N^2) sum.
    The trace is conserved by construction and only monitored; positivity
    is deliberately not enforced.
    """
    rho0 = as_density(rho0)
    _check_grid(grid)
    if isinstance(spec, FlatMemoryless):
        g = generator_stack(detuning, 0.5 * spec.decay_rate, drive)[0]
        return _march_constant(g, rho0, grid, "nz", trace_tol)
    mode = _resolve_mode(spec, mode)
    l0 = _liouvillian(_hamiltonian(detuning, drive))
    n, h = grid.n_steps, grid.h
    times = grid.times

    exponential = isinstance(spec, Lorentzian) and mode.quadrature == "closed_form"
    if exponential:
        zs, mats = _memory_components(spec, detuning, drive)
        kstack = np.einsum("jt,jab->tab", np.exp(-np.outer(zs, times)), mats)
        decay = np.exp(-zs * h)
        hist = np.zeros((len(zs), 4), dtype=complex)
    else:
        kstack = _memory_stack_generic(spec, detuning, drive, mode, times)
        krev = kstack[::-1].copy()
    k0 = kstack[0]

    lhs = np.eye(4, dtype=complex) - (h / 2.0) * l0 - (h * h / 4.0) * k0
    lu = lu_factor(lhs)

    ys = np.empty((n + 1, 4), dtype=complex)
    ys[0] = rho0.reshape(4)
    c_run = np.zeros(4, dtype=complex)
    for step in range(n):
        if exponential:
            if step > 0:
                hist = decay[:, None] * (hist + ys[step])
            conv = np.einsum("jab,jb->a", mats, hist)
        else:
            if step > 0:
                conv = np.einsum("kab,kb->a", krev[n - step:n], ys[1:step + 1])
            else:
                conv = np.zeros(4, dtype=complex)
        s_expl = h * (0.5 * (kstack[step + 1] @ ys[0]) + conv)
        rhs = ys[step] + (h / 2.0) * (l0 @ ys[step] + c_run + s_expl)
        ys[step + 1] = lu_solve(lu, rhs)
        c_run = s_expl + (h / 2.0) * (k0 @ ys[step + 1])

    drift = np.abs(ys[:, 0] + ys[:, 3] - 1.0).max()
    if drift > trace_tol:
        raise AccuracyError(
            f"memory-kernel march lost trace conservation: drift {drift:.3e}")
    return EvolutionTrace(grid=grid, rho=ys.reshape(-1, 2, 2), method="nz")
