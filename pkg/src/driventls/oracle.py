"""Brute-force validator: finite-mode bath plus full unitary propagation.

Everything else in this package integrates a reduced equation of motion
for the two-level system alone.  This module takes the opposite route:
sample the reservoir density at finitely many frequencies, build the
joint system+bath Hamiltonian in an excitation-truncated Fock basis, and
step the Schrodinger equation directly, tracing the bath out only at
output time.  It shares no solver code with the master-equation side,
which is the point: agreement between the two is evidence, not
tautology.

The truncation parameter n_max counts total excitations (excited qubit =
one excitation).  Without drive the count is conserved and n_max=1 is
exact for one initial excitation; with drive it is a hard cutoff whose
error is monitored through the population of the top shell.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, sparse

from .errors import AccuracyError, ConfigurationError, DomainError
from .kernel import KernelSolution, TimeGrid
from .observables import EvolutionTrace, as_density
from .spectral import (
    KernelMode,
    Lorentzian,
    SpectralDensity,
    correlation_kernel,
    rotating_profile,
)

__all__ = [
    "DiscretizedBath",
    "discretize",
    "propagate_full",
    "undriven_analytic",
]

# target for accumulated phase error of the classical fourth-order step;
# the norm defect is one power of h smaller, so this dominates
_STEP_TOL = 1e-8


@dataclass(frozen=True)
class DiscretizedBath:
    """Uniform midpoint sampling of a reservoir density.

    Frequencies are rotating-frame values (absolute frequency minus the
    laser frequency), matching the frame every solver works in.
    coverage is the fraction of the continuum spectral weight that falls
    inside the window; kernel_error is the measured sup-norm mismatch
    between the discrete kernel sum and the continuum kernel on
    [0, horizon].  Past the revival time 2*pi/spacing the discrete
    kernel re-coheres and stops resembling the continuum, so horizon is
    always kept below it.
    """

    freqs: np.ndarray
    couplings: np.ndarray
    window: tuple[float, float]
    coverage: float
    kernel_error: float
    horizon: float

    @property
    def n_modes(self) -> int:
        return self.freqs.size

    @property
    def spacing(self) -> float:
        if self.freqs.size < 2:
            return math.inf
        return float(self.freqs[1] - self.freqs[0])

    @property
    def revival_time(self) -> float:
        s = self.spacing
        return math.inf if not math.isfinite(s) else 2.0 * math.pi / s

    @cached_property
    def total_weight(self) -> float:
        """Sum of squared couplings, the Riemann estimate of the window integral."""
        return float(np.sum(self.couplings**2))

    def kernel(self, t) -> np.ndarray:
        """Discrete correlation kernel sum(g_k^2 exp(-i w_k t))."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.exp(-1j * np.outer(tt, self.freqs)) @ (self.couplings**2)
        return out if np.ndim(t) else complex(out[0])


def _window_integral(profile, x_lo: float, a: float, b: float,
                     spec: SpectralDensity, detuning: float) -> float:
    """Integral of the rotating-frame density over [a, b] (clipped at x_lo)."""
    a = max(a, x_lo)
    if b <= a:
        return 0.0
    if isinstance(spec, Lorentzian):
        # arctan antiderivative, exact
        p = detuning - spec.peak_offset
        lam = spec.width
        lo = math.atan((a - p) / lam) if math.isfinite(a) else -0.5 * math.pi
        hi = math.atan((b - p) / lam) if math.isfinite(b) else 0.5 * math.pi
        return spec.decay_rate * spec.width / (2.0 * math.pi) * (hi - lo)
    pts = [p for p in (detuning, detuning - getattr(spec, "peak_offset", 0.0))
           if a < p < b]
    if math.isinf(b):
        # quad rejects breakpoints on an infinite range; split past them
        cut = max([a] + pts) + 10.0 * getattr(spec, "width", 1.0)
        head, _ = integrate.quad(profile, a, cut, points=pts or None, limit=200)
        tail, _ = integrate.quad(profile, cut, b, limit=200)
        return head + tail
    val, _ = integrate.quad(profile, a, b, points=pts or None, limit=200)
    return val


def discretize(spec: SpectralDensity, detuning: float, n_modes: int,
               window: tuple[float, float] | None = None,
               min_coverage: float = 0.98,
               laser_freq: float | None = None,
               horizon: float | None = None) -> DiscretizedBath:
    """Sample the density at n_modes uniform midpoints over a window.

    window is in rotating-frame frequencies; None centres it on the
    density peak with half-width 40 * width (Lorentzian only, other
    densities need an explicit window).  Couplings follow from
    g_k^2 = J(w_k) * dw.  Coverage below min_coverage raises, since a
    bath that misses spectral weight cannot reproduce the kernel no
    matter how many modes it has.  Picking a deliberately narrow window
    is legitimate for scoped checks; pass a lower min_coverage to say so
    explicitly.
    """
    if n_modes < 1:
        raise ConfigurationError("need at least one mode")
    profile, x_lo = rotating_profile(spec, detuning, laser_freq)
    if window is None:
        if not isinstance(spec, Lorentzian):
            raise ConfigurationError(
                f"no default window for {type(spec).__name__}; pass one explicitly")
        centre = detuning - spec.peak_offset
        window = (centre - 40.0 * spec.width, centre + 40.0 * spec.width)
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ConfigurationError(f"empty window ({lo}, {hi})")

    total = _window_integral(profile, x_lo, x_lo, math.inf, spec, detuning)
    inside = _window_integral(profile, x_lo, lo, hi, spec, detuning)
    coverage = inside / total if total > 0.0 else 0.0
    if coverage < min_coverage:
        raise ConfigurationError(
            f"window ({lo:g}, {hi:g}) covers {coverage:.4f} of the spectral "
            f"weight, below the required {min_coverage:g}")

    dw = (hi - lo) / n_modes
    freqs = lo + dw * (np.arange(n_modes) + 0.5)
    dens = np.asarray(profile(freqs), dtype=float)
    dens[freqs < x_lo] = 0.0
    couplings = np.sqrt(dens * dw)

    revival = 2.0 * math.pi / dw if n_modes > 1 else math.inf
    if horizon is None:
        horizon = min(5.0, 0.45 * revival)
    elif horizon >= revival:
        raise ConfigurationError(
            f"horizon {horizon:g} reaches past the revival time {revival:g}; "
            "the discrete kernel is meaningless there")

    if isinstance(spec, Lorentzian) and laser_freq is None:
        mode = KernelMode.closed_form()
    elif laser_freq is not None:
        mode = KernelMode.numeric(lower_limit="minus_laser_freq",
                                  laser_freq=laser_freq)
    else:
        mode = KernelMode.numeric()
    ts = np.linspace(0.0, horizon, 801)
    disc = np.exp(-1j * np.outer(ts, freqs)) @ (couplings**2)
    err = float(np.max(np.abs(disc - correlation_kernel(spec, detuning, mode, ts))))

    return DiscretizedBath(freqs=freqs, couplings=couplings, window=(lo, hi),
                           coverage=coverage, kernel_error=err, horizon=horizon)


# ---------------------------------------------------------------------------
# Excitation-truncated basis.  A basis state is (s, ph) with s the qubit
# excitation (0 or 1) and ph a sorted tuple of occupied mode indices,
# repeats meaning multiple photons in one mode.


class _Space:
    """Index bookkeeping for the truncated joint basis."""

    def __init__(self, n_modes: int, n_max: int):
        keys: list[tuple[int, tuple[int, ...]]] = []
        for s in (1, 0):
            for total in range(n_max - s + 1):
                keys.extend(
                    (s, combo)
                    for combo in itertools.combinations_with_replacement(
                        range(n_modes), total))
        self.keys = keys
        self.index = {k: i for i, k in enumerate(keys)}
        self.n_max = n_max
        exc = np.fromiter((s + len(ph) for s, ph in keys), dtype=int, count=len(keys))
        self.top_shell = np.flatnonzero(exc == n_max)
        # partial-trace pairings: every excited key has its ground partner
        self.e_pos = np.array([i for i, (s, _) in enumerate(keys) if s == 1])
        self.e_partner = np.array([self.index[(0, ph)]
                                   for s, ph in keys if s == 1])
        self.g_pos = np.array([i for i, (s, _) in enumerate(keys) if s == 0])

    def __len__(self) -> int:
        return len(self.keys)


def _hamiltonian(space: _Space, bath: DiscretizedBath,
                 detuning: float, drive: float) -> sparse.csr_matrix:
    freqs, gs = bath.freqs, bath.couplings
    diag = np.array([detuning * s + sum(freqs[k] for k in ph)
                     for s, ph in space.keys])
    # centring the spectrum shrinks the step bound; the dropped global
    # phase cancels inside every partial-trace product
    shift = 0.5 * (diag.max() + diag.min())
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def put(i: int, j: int, v: float) -> None:
        rows.extend((i, j))
        cols.extend((j, i))
        vals.extend((v, v))

    for i, (s, ph) in enumerate(space.keys):
        if s != 0:
            continue
        j = space.index.get((1, ph))
        if j is not None and drive != 0.0:
            put(i, j, drive)
        for pos, k in enumerate(ph):
            if pos and ph[pos - 1] == k:
                continue  # one term per distinct mode
            nk = ph.count(k)
            reduced = ph[:pos] + ph[pos + 1:]
            put(i, space.index[(1, reduced)], gs[k] * math.sqrt(nk))

    dim = len(space)
    ham = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    ham += sparse.diags(diag - shift)
    return ham.tocsr()


def _step_count(ham: sparse.csr_matrix, duration: float) -> int:
    # infinity norm bounds the spectral norm for Hermitian matrices;
    # classical fourth-order phase error ~ duration * |H|^5 h^4 / 120
    bound = float(np.max(np.abs(ham).sum(axis=1)))
    if bound == 0.0 or duration == 0.0:
        return 1
    h = (120.0 * _STEP_TOL / (duration * bound**5)) ** 0.25
    return max(1, math.ceil(duration / min(h, 0.5 / bound)))


def _propagate_pure(psi0: np.ndarray, ham: sparse.csr_matrix, space: _Space,
                    grid: TimeGrid) -> tuple[np.ndarray, float, float]:
    """Step the Schrodinger equation, returning (rho(t), max leak, norm drift)."""
    n_total = _step_count(ham, grid.t_end - grid.t0)
    n_sub = max(1, math.ceil(n_total / grid.n_steps))
    h = grid.h / n_sub
    psi = psi0.astype(complex)
    rho = np.empty((grid.n_steps + 1, 2, 2), dtype=complex)
    leak = 0.0

    def record(row: int, state: np.ndarray) -> None:
        nonlocal leak
        pe = state[space.e_pos]
        pg = state[space.g_pos]
        ee = float(np.vdot(pe, pe).real)
        gg = float(np.vdot(pg, pg).real)
        eg = complex(pe @ np.conj(state[space.e_partner]))
        rho[row] = [[ee, eg], [np.conj(eg), gg]]
        top = state[space.top_shell]
        leak = max(leak, float(np.vdot(top, top).real))

    record(0, psi)
    for row in range(1, grid.n_steps + 1):
        for _ in range(n_sub):
            k1 = ham @ psi
            k2 = ham @ (psi - 0.5j * h * k1)
            k3 = ham @ (psi - 0.5j * h * k2)
            k4 = ham @ (psi - 1j * h * k3)
            psi = psi - (1j * h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        record(row, psi)
    drift = abs(float(np.vdot(psi, psi).real) - float(np.vdot(psi0, psi0).real))
    return rho, leak, drift


def propagate_full(rho0, bath: DiscretizedBath, detuning: float, drive: float,
                   n_max: int, grid: TimeGrid,
                   leak_tol: float = 1e-3) -> EvolutionTrace:
    """Joint system+bath evolution, reduced to the qubit at output time.

    The bath starts in vacuum.  Mixed rho0 is split into eigenstates and
    propagated once per nonzero weight.  A top-shell population above
    leak_tol means the truncation is feeding back into the retained
    space; that run is still returned, with a warning attached, because
    the caller may only care about early times.  Without drive the
    excitation count is conserved and the truncated space holds the
    whole reachable set, so the monitor only applies to driven runs.
    """
    if n_max < 1:
        raise ConfigurationError("n_max must be at least 1")
    if grid.t0 != 0.0:
        raise ConfigurationError("joint propagation starts at t0 = 0")
    rho0 = as_density(rho0)
    space = _Space(bath.n_modes, n_max)
    ham = _hamiltonian(space, bath, detuning, drive)

    weights, vecs = np.linalg.eigh(rho0)
    rho = np.zeros((grid.n_steps + 1, 2, 2), dtype=complex)
    leak = 0.0
    drift = 0.0
    for w, vec in zip(weights, vecs.T):
        if w < 1e-12:
            continue
        psi0 = np.zeros(len(space), dtype=complex)
        psi0[space.index[(1, ())]] = vec[0]
        psi0[space.index[(0, ())]] = vec[1]
        part, part_leak, part_drift = _propagate_pure(psi0, ham, space, grid)
        rho += w * part
        leak = max(leak, part_leak)
        drift = max(drift, part_drift)

    span = max(1.0, grid.t_end - grid.t0)
    if drift > 100.0 * _STEP_TOL * span:
        raise AccuracyError(
            f"norm drifted by {drift:.3e}; the step controller is broken")
    warning = None
    if drive != 0.0 and leak > leak_tol:
        warning = (f"truncation leak {leak:.3e} exceeds {leak_tol:g}; "
                   f"raise n_max or shorten the horizon")
    return EvolutionTrace(grid=grid, rho=rho, method="oracle", warning=warning)


def undriven_analytic(rho0, sol: KernelSolution) -> EvolutionTrace:
    """Closed-form reduced map for the undriven qubit.

    Populations follow |u|^2, coherences follow u itself; valid only
    when the drive is off, which is when the excitation-number map
    decouples.
    """
    if sol.drive not in (None, 0.0):
        raise DomainError("analytic map needs the undriven amplitude (drive = 0)")
    rho0 = as_density(rho0)
    u = sol.u
    rho = np.empty((u.size, 2, 2), dtype=complex)
    rho[:, 0, 0] = rho0[0, 0].real * np.abs(u) ** 2
    rho[:, 0, 1] = rho0[0, 1] * u
    rho[:, 1, 0] = np.conj(rho[:, 0, 1])
    rho[:, 1, 1] = 1.0 - rho[:, 0, 0]
    return EvolutionTrace(grid=sol.grid, rho=rho, method="undriven_analytic")
