"""Observables and diagnostics: populations, fidelity, positivity witness,
regime classification, and per-node physicality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError, DomainError
from .kernel import TimeGrid
from .spectral import Lorentzian

SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.conj()
SIGMA_X = SIGMA_MINUS + SIGMA_PLUS
PROJ_EXCITED = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def excited_state() -> np.ndarray:
    return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def ground_state() -> np.ndarray:
    return np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


def plus_state() -> np.ndarray:
    return np.full((2, 2), 0.5, dtype=complex)


def as_density(rho) -> np.ndarray:
    """Validate and return a 2x2 density matrix as a complex array."""
    r = np.asarray(rho, dtype=complex)
    if r.shape != (2, 2):
        raise DomainError(f"density matrix must be 2x2, got shape {r.shape}")
    if not np.allclose(r, r.T.conj(), atol=1e-8):
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(r).real - 1.0) > 1e-8 or abs(np.trace(r).imag) > 1e-10:
        raise DomainError(f"density matrix trace is {np.trace(r)}, expected 1")
    if np.linalg.eigvalsh(0.5 * (r + r.T.conj())).min() < -1e-9:
        raise DomainError("density matrix has a negative eigenvalue")
    return r


@dataclass(frozen=True)
class EvolutionTrace:
    """Density-matrix series from one propagation method.

    rho rows past a singular halt are NaN; truncated_at records the last
    valid time.  Physicality flags are always recomputed from rho by
    physicality_scan, never stored.  warning carries non-fatal
    diagnostics (truncation leak and the like) without invalidating rho.
    """

    grid: TimeGrid
    rho: np.ndarray
    method: str
    truncated_at: float | None = None
    halt_reason: str | None = None
    warning: str | None = None

    def valid_slice(self) -> slice:
        if self.truncated_at is None:
            return slice(None)
        n = int(np.searchsorted(self.grid.times, self.truncated_at, side="right"))
        return slice(0, n)


def sigma_z(rho) -> float:
    """Population difference rho_ee - rho_gg."""
    r = np.asarray(rho)
    return float((r[0, 0] - r[1, 1]).real)


def sigma_z_series(trace: EvolutionTrace) -> np.ndarray:
    return (trace.rho[:, 0, 0] - trace.rho[:, 1, 1]).real


def _clipped_psd(rho, tol: float) -> np.ndarray:
    r = np.asarray(rho, dtype=complex)
    herm = 0.5 * (r + r.T.conj())
    vals, vecs = np.linalg.eigh(herm)
    if vals.min() < -tol:
        raise DomainError(
            f"state has eigenvalue {vals.min():.3e}, below the -{tol:.1e} clip tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T.conj()


def fidelity(rho1, rho2, clip_tol: float = 1e-9) -> float:
    """Uhlmann fidelity Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)) for 2x2 states.

    Inputs may carry tiny negative eigenvalues from finite-precision
    propagation; anything above -clip_tol is clipped to zero, worse is a
    domain error.
    """
    r1 = _clipped_psd(rho1, clip_tol)
    r2 = _clipped_psd(rho2, clip_tol)
    vals, vecs = np.linalg.eigh(r1)
    s1 = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T.conj()
    inner = s1 @ r2 @ s1
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.T.conj()))
    return float(np.sqrt(np.clip(ev, 0.0, None)).sum())


def positivity_witness(detuning: float, drive: float, spec: Lorentzian, t) -> np.ndarray:
    """Complete-positivity witness 2 alpha(t) + beta(t) for the secular map.

    alpha(t) = 2 int_0^t [g1^2 P_{-1} + g2^2 P_{+1} + 4 g0^2 P_0] dtau,
    beta(t)  = 4 int_0^t [g1^2 P_{-1} + g2^2 P_{+1}] dtau,

    where P_m is the real part of the one-sided kernel transform at the
    dressed frequencies.  Non-negativity for all t certifies a
    completely positive map.  t may be a scalar or an increasing array
    starting at >= 0; integration is a cumulative trapezoid on an
    internal grid refined to at least 2000 nodes.
    """
    if not isinstance(spec, Lorentzian):
        raise ConfigurationError("positivity witness is defined for the Lorentzian density")
    w0 = math.hypot(detuning, 2.0 * drive)
    if w0 == 0.0:
        raise ConfigurationError("degenerate dressed basis: detuning and drive both zero")
    g0 = drive / w0
    g1 = (w0 + detuning) / (2.0 * w0)
    g2 = (w0 - detuning) / (2.0 * w0)

    tt = np.atleast_1d(np.asarray(t, dtype=float))
    scalar = np.asarray(t).ndim == 0
    if np.any(np.diff(tt) <= 0.0) or tt[0] < 0.0:
        raise DomainError("witness times must be increasing and non-negative")
    t_end = tt[-1] if tt[-1] > 0.0 else 1.0
    grid = np.linspace(0.0, t_end, max(2001, 4 * len(tt)))

    def p_m(m: int) -> np.ndarray:
        nu = detuning - spec.peak_offset + m * w0
        pole = spec.width + 1j * nu
        return (spec.decay_rate * spec.width * (1.0 - np.exp(-pole * grid)) / pole).real

    core = g1 * g1 * p_m(-1) + g2 * g2 * p_m(+1)
    alpha = 2.0 * cumulative_trapezoid(core + 4.0 * g0 * g0 * p_m(0), grid, initial=0.0)
    beta = 4.0 * cumulative_trapezoid(core, grid, initial=0.0)
    vals = np.interp(tt, grid, 2.0 * alpha + beta)
    return float(vals[0]) if scalar else vals


@dataclass(frozen=True)
class RegimeLabel:
    markovianity: str
    secularity: str
    region: str
    ratios: tuple[float, float]


def classify_regime(detuning: float, drive: float, decay_rate: float, width: float,
                    peak_offset: float,
                    thresholds: tuple[float, float] = (10.0, 3.0)) -> RegimeLabel:
    """Place a parameter set in the four-region validity table.

    Axis 1: bath memory, Markovian iff tau_R / tau_L = decay_rate/width
    is at most 1/kappa_markov.  Axis 2: dressed-frequency separation,
    secular treatment valid iff min_m |N_m| >= kappa_secular * width.
    The ratios are scale covariant: multiplying every rate by the same
    factor leaves the label unchanged.
    """
    kappa_markov, kappa_secular = thresholds
    w0 = math.hypot(detuning, 2.0 * drive)
    if w0 == 0.0:
        raise ConfigurationError("degenerate dressed basis: detuning and drive both zero")
    ratio_ml = decay_rate / width
    n_min = min(abs(detuning - peak_offset + m * w0) for m in (-1, 0, 1))
    ratio_sec = n_min / width
    markov = ratio_ml <= 1.0 / kappa_markov
    secular = ratio_sec >= kappa_secular
    region = {(True, True): "I", (True, False): "II",
              (False, True): "III", (False, False): "IV"}[(markov, secular)]
    return RegimeLabel(
        markovianity="Markovian" if markov else "NonMarkovian",
        secularity="SecularOK" if secular else "NonsecularRequired",
        region=region,
        ratios=(ratio_ml, ratio_sec),
    )


@dataclass(frozen=True)
class PhysicalityReport:
    trace_dev: np.ndarray
    min_eig: np.ndarray
    sz_violation: np.ndarray
    first_violation: float | None
    checked_nodes: int = 0


def physicality_scan(trace: EvolutionTrace, eig_tol: float = 1e-9,
                     trace_tol: float = 1e-9, sz_tol: float = 1e-9) -> PhysicalityReport:
    """Per-node physicality diagnostics, recomputed from the raw states."""
    rho = trace.rho
    n = rho.shape[0]
    trace_dev = np.abs(rho[:, 0, 0] + rho[:, 1, 1] - 1.0)
    herm = 0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1))))
    with np.errstate(invalid="ignore"):
        eigs = np.linalg.eigvalsh(np.nan_to_num(herm, nan=0.0))
    min_eig = eigs[:, 0]
    sz = (rho[:, 0, 0] - rho[:, 1, 1]).real
    valid = ~np.isnan(rho[:, 0, 0].real)
    min_eig = np.where(valid, min_eig, np.nan)
    sz_violation = valid & (np.abs(sz) > 1.0 + sz_tol)
    bad = valid & (sz_violation | (trace_dev > trace_tol) | (min_eig < -eig_tol))
    first = float(trace.grid.times[np.argmax(bad)]) if bad.any() else None
    return PhysicalityReport(trace_dev=trace_dev, min_eig=min_eig,
                             sz_violation=sz_violation, first_violation=first,
                             checked_nodes=int(valid.sum()) if n else 0)
