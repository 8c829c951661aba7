"""Bath spectral densities and the reservoir correlation kernel.

The kernel is the Fourier transform of the spectral density taken in the
frame rotating at the laser frequency,

    f(t) = int J(omega) exp(-i (omega - omega_L) t) domega,

with the lower integration limit either -infinity (the standard analytic
idealization, which for a Lorentzian density gives a single decaying
exponential) or the physical one, omega = 0, which sits at -omega_L in
the rotating frame.  Numeric evaluation uses a Filon-type scheme: the
density is interpolated by piecewise cubics on adaptively refined panels
and the oscillatory factor is integrated exactly on each panel, so the
cost is independent of how fast exp(-i omega t) oscillates.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, QuadratureError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian spectral density of total weight decay_rate * width / 2.

    J(omega) = (decay_rate / 2 pi) * width^2 / ((omega - omega_0 + peak_offset)^2 + width^2)

    peak_offset is the detuning of the transition frequency omega_0 from
    the peak of the density.  transition_freq (omega_0) is only needed
    when the density must be evaluated at absolute frequencies; the
    rotating-frame kernel never requires it.
    """

    decay_rate: float
    width: float
    peak_offset: float = 0.0
    transition_freq: float | None = None

    def __post_init__(self):
        # zero is legal: it switches the coupling off (J identically 0)
        if not (self.decay_rate >= 0.0 and math.isfinite(self.decay_rate)):
            raise ConfigurationError(f"decay_rate must be nonnegative, got {self.decay_rate}")
        if not (self.width > 0.0 and math.isfinite(self.width)):
            raise ConfigurationError(f"width must be positive, got {self.width}")


@dataclass(frozen=True)
class SpinBoson:
    """Spin-boson style density J(omega) = omega * width / (mass * ((omega^2 - osc_freq^2)^2 + omega^2 width^2)).

    Defined for omega >= 0 only.  Vanishes linearly at omega = 0 and
    falls off like 1/omega^3, so it has no sharp low-frequency cutoff
    issues but a much heavier tail than a Lorentzian of the same width.
    """

    mass: float
    width: float
    osc_freq: float

    def __post_init__(self):
        if not (self.mass > 0.0 and math.isfinite(self.mass)):
            raise ConfigurationError(f"mass must be positive, got {self.mass}")
        if not (self.width > 0.0 and math.isfinite(self.width)):
            raise ConfigurationError(f"width must be positive, got {self.width}")
        if not (self.osc_freq > 0.0 and math.isfinite(self.osc_freq)):
            raise ConfigurationError(f"osc_freq must be positive, got {self.osc_freq}")


@dataclass(frozen=True)
class FlatMemoryless:
    """Flat density: f(t) = decay_rate * delta(t).  Purely Markovian limit."""

    decay_rate: float

    def __post_init__(self):
        if not (self.decay_rate >= 0.0 and math.isfinite(self.decay_rate)):
            raise ConfigurationError(f"decay_rate must be nonnegative, got {self.decay_rate}")


SpectralDensity = Lorentzian | SpinBoson | FlatMemoryless


@dataclass(frozen=True)
class KernelMode:
    """How the correlation kernel is evaluated.

    lower_limit: "minus_infinity" or "minus_laser_freq" (the physical
        omega >= 0 domain, expressed in the rotating frame).
    quadrature: "closed_form" (Lorentzian with full line only) or "numeric".
    """

    lower_limit: str = "minus_infinity"
    laser_freq: float | None = None
    quadrature: str = "closed_form"
    abs_tol: float = 1e-6
    max_points: int = 60_000

    def __post_init__(self):
        if self.lower_limit not in ("minus_infinity", "minus_laser_freq"):
            raise ConfigurationError(f"unknown lower_limit {self.lower_limit!r}")
        if self.quadrature not in ("closed_form", "numeric"):
            raise ConfigurationError(f"unknown quadrature {self.quadrature!r}")
        if self.lower_limit == "minus_laser_freq":
            if self.laser_freq is None or not (self.laser_freq > 0.0):
                raise ConfigurationError("minus_laser_freq requires a positive laser_freq")
            if self.quadrature == "closed_form":
                raise ConfigurationError("no closed form with a finite lower limit; use numeric")
        if not (self.abs_tol > 0.0):
            raise ConfigurationError("abs_tol must be positive")
        if self.max_points < 64:
            raise ConfigurationError("max_points too small to build any panels")

    @classmethod
    def closed_form(cls) -> "KernelMode":
        return cls()

    @classmethod
    def numeric(cls, abs_tol: float = 1e-6, max_points: int = 60_000,
                lower_limit: str = "minus_infinity",
                laser_freq: float | None = None) -> "KernelMode":
        return cls(lower_limit=lower_limit, laser_freq=laser_freq,
                   quadrature="numeric", abs_tol=abs_tol, max_points=max_points)


def density_at(spec: SpectralDensity, omega):
    """Evaluate J at absolute frequency omega (scalar or array)."""
    w = np.asarray(omega, dtype=float)
    if isinstance(spec, Lorentzian):
        if spec.transition_freq is None:
            raise ConfigurationError(
                "absolute-frequency evaluation needs transition_freq on the Lorentzian")
        x = w - spec.transition_freq + spec.peak_offset
        out = (spec.decay_rate / TWO_PI) * spec.width**2 / (x * x + spec.width**2)
    elif isinstance(spec, SpinBoson):
        if np.any(w < 0.0):
            raise DomainError("spin-boson density is defined for omega >= 0 only")
        out = (w * spec.width / spec.mass
               / ((w * w - spec.osc_freq**2) ** 2 + w * w * spec.width**2))
    elif isinstance(spec, FlatMemoryless):
        out = np.full_like(w, spec.decay_rate / TWO_PI)
    else:
        raise ConfigurationError(f"unknown spectral density {type(spec).__name__}")
    return out if w.ndim else float(out)


def rotating_profile(spec: SpectralDensity, detuning: float,
                     laser_freq: float | None = None):
    """Rotating-frame view of the density: Jr(x) = J(x + omega_L).

    Returns (profile callable, lower domain edge in x).  For a Lorentzian
    the profile depends only on detuning and peak_offset, so no absolute
    frequency is needed; the laser frequency enters only through the
    domain edge.  For spin-boson the laser frequency is fixed by
    omega_L = osc_freq - detuning and must agree with laser_freq if both
    are given.
    """
    if isinstance(spec, Lorentzian):
        p = detuning - spec.peak_offset
        amp = spec.decay_rate * spec.width**2 / TWO_PI
        lam2 = spec.width**2

        def profile(x):
            d = x - p
            return amp / (d * d + lam2)

        x_lo = -laser_freq if laser_freq is not None else -math.inf
        return profile, x_lo
    if isinstance(spec, SpinBoson):
        wl = spec.osc_freq - detuning
        if laser_freq is not None and abs(laser_freq - wl) > 1e-9 * max(1.0, abs(wl)):
            raise ConfigurationError(
                f"laser_freq {laser_freq} inconsistent with osc_freq - detuning = {wl}")
        if wl <= 0.0:
            raise ConfigurationError("spin-boson needs osc_freq - detuning > 0")

        def profile(x):
            w = np.asarray(x, dtype=float) + wl
            out = np.zeros_like(w)
            pos = w > 0.0
            wp = w[pos]
            out[pos] = (wp * spec.width / spec.mass
                        / ((wp * wp - spec.osc_freq**2) ** 2 + wp * wp * spec.width**2))
            return out

        return profile, -wl
    raise ConfigurationError(f"no rotating profile for {type(spec).__name__}")


def correlation_kernel(spec: SpectralDensity, detuning: float, mode: KernelMode, t):
    """Two-time reservoir correlation kernel f(t) in the rotating frame.

    t may be a scalar or an array; negative t is evaluated through the
    analytic extension, which for a real density is f(-t) = conj(f(t)).
    """
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if isinstance(spec, FlatMemoryless):
        raise ConfigurationError(
            "flat density has a delta-function kernel with no pointwise values; "
            "solvers treat it analytically")
    if mode.quadrature == "closed_form":
        if not isinstance(spec, Lorentzian):
            raise ConfigurationError("closed form kernel exists only for the Lorentzian density")
        rate = spec.decay_rate * spec.width / 2.0
        pole = spec.width + 1j * (detuning - spec.peak_offset)
        out = rate * np.exp(-pole * np.abs(tt))
        out = np.where(tt < 0.0, np.conj(out), out)
    else:
        out = _numeric_kernel(spec, detuning, mode, tt)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Filon-type quadrature on adaptively refined cubic panels.

# interpolation nodes on [-1, 1] and the midpoints used for the error probe
_NODES = np.array([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0])
_PROBE = np.array([-2.0 / 3.0, 0.0, 2.0 / 3.0])

# monomial coefficients of the cubic through values at _NODES
_TO_MONO = np.array([
    [-1.0, 9.0, 9.0, -1.0],
    [1.0, -27.0, 27.0, -1.0],
    [9.0, -9.0, -9.0, 9.0],
    [-9.0, 27.0, -27.0, 9.0],
]) / 16.0

# cubic interpolated at the probe points, for the refinement indicator
_AT_PROBE = np.vander(_PROBE, 4, increasing=True) @ _TO_MONO


def _moments(theta: np.ndarray) -> np.ndarray:
    """M_k(theta) = int_{-1}^{1} s^k exp(-i theta s) ds for k = 0..3.

    Closed forms suffer cancellation near theta = 0, so small arguments
    switch to the Taylor series (terms through theta^15, far below
    double precision for |theta| < 0.6).
    """
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < 0.6
    out = np.empty((4,) + th.shape, dtype=complex)

    ts = th[small]
    t2 = ts * ts
    for k in range(4):
        acc = np.zeros_like(ts)
        for j in range(7, -1, -1):
            n = 2 * j + (k % 2)
            term = (-1.0) ** j / (math.factorial(n) * (n + k + 1))
            acc = acc * t2 + term
        if k % 2 == 0:
            out[k][small] = 2.0 * acc
        else:
            out[k][small] = -2.0j * ts * acc

    tb = th[~small]
    s, c = np.sin(tb), np.cos(tb)
    out[0][~small] = 2.0 * s / tb
    out[1][~small] = 2.0j * (tb * c - s) / tb**2
    out[2][~small] = 2.0 * ((tb * tb - 2.0) * s + 2.0 * tb * c) / tb**3
    out[3][~small] = 2.0j * ((tb**3 - 6.0 * tb) * c - (3.0 * tb * tb - 6.0) * s) / tb**4
    return out


def _panel_data(profile, a: float, b: float):
    """Sample one panel; returns (node values, error indicator)."""
    c = 0.5 * (a + b)
    w = 0.5 * (b - a)
    y = profile(c + w * _NODES)
    probe = profile(c + w * _PROBE)
    interp = _AT_PROBE @ y
    err = w * 0.5 * float(np.sum(np.abs(probe - interp)))
    return y, err


def _initial_edges(spec, detuning, mode):
    """Panel edges plus the mass of whatever tail got cut off."""
    tol_tail = 0.25 * mode.abs_tol
    if isinstance(spec, Lorentzian):
        g, lam = spec.decay_rate, spec.width
        p = detuning - spec.peak_offset
        x_lo = -mode.laser_freq if mode.lower_limit == "minus_laser_freq" else None
        # distance beyond which the remaining Lorentzian mass drops under tol_tail
        half = min(0.5 * math.pi, tol_tail * math.pi / (g * lam))
        reach = lam * math.tan(0.5 * math.pi - half) if half < 0.5 * math.pi else 0.0
        reach = max(reach, 8.0 * lam)
        edges = list(p + lam * np.linspace(-4.0, 4.0, 17))
        cut = 0.0
        for sign in (-1.0, 1.0):
            x = p + sign * 4.0 * lam
            while sign * (x - p) < reach:
                x = p + sign * min(abs(x - p) * 1.7, reach)
                edges.append(x)
            cut += (g * lam / math.pi) * (0.5 * math.pi - math.atan(abs(x - p) / lam))
        if x_lo is not None:
            kept = sorted(e for e in edges if e > x_lo)
            edges = [x_lo] + kept
            cut = (g * lam / math.pi) * (0.5 * math.pi - math.atan((max(edges) - p) / lam))
        else:
            edges = sorted(edges)
        return edges, cut
    if isinstance(spec, SpinBoson):
        wl = spec.osc_freq - detuning
        w0, lam = spec.osc_freq, spec.width
        hw = min(0.5 * lam, 0.25 * w0)
        # tail bound: J <= 4 width / (mass omega^3) once omega >= sqrt(2) osc_freq
        x_tail = max(2.0 * w0, math.sqrt(2.0 * lam / (spec.mass * tol_tail)))
        fracs = [0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 3 / 8, 1 / 2, 5 / 8, 3 / 4, 7 / 8]
        edges = [f * w0 for f in fracs]
        edges += [w0 - hw, w0 - 0.5 * hw, w0, w0 + 0.5 * hw, w0 + hw, w0 + 2.0 * hw]
        x = w0 + 2.0 * hw
        while x < x_tail:
            x = min(x * 1.6, x_tail)
            edges.append(x)
        cut = 2.0 * lam / (spec.mass * x * x)
        return sorted(set(edges)), cut
    raise ConfigurationError(f"no numeric kernel for {type(spec).__name__}")


def _numeric_kernel(spec, detuning, mode, t: np.ndarray) -> np.ndarray:
    if mode.lower_limit == "minus_laser_freq":
        profile, x_lo = rotating_profile(spec, detuning, mode.laser_freq)
    else:
        profile, x_lo = rotating_profile(spec, detuning, None)
    edges, cut_mass = _initial_edges(spec, detuning, mode)
    if isinstance(spec, SpinBoson):
        # layout is built in absolute frequency; shift into the rotating frame
        wl = spec.osc_freq - detuning
        edges = [e - wl for e in edges]

    budget = mode.max_points
    heap = []
    total_err = 0.0
    n_eval = 0
    uid = 0
    for a, b in zip(edges[:-1], edges[1:]):
        y, err = _panel_data(profile, a, b)
        n_eval += 7
        total_err += err
        heapq.heappush(heap, (-err, uid, a, b, y))
        uid += 1

    tol_interp = 0.5 * mode.abs_tol
    while total_err > tol_interp and n_eval + 14 <= budget:
        neg_err, _, a, b, _ = heapq.heappop(heap)
        total_err += neg_err  # remove parent's contribution
        m = 0.5 * (a + b)
        for aa, bb in ((a, m), (m, b)):
            y, err = _panel_data(profile, aa, bb)
            total_err += err
            heapq.heappush(heap, (-err, uid, aa, bb, y))
            uid += 1
        n_eval += 14

    achieved = total_err + cut_mass
    if achieved > mode.abs_tol:
        raise QuadratureError(
            f"kernel quadrature stalled at estimated error {achieved:.3e} "
            f"(requested {mode.abs_tol:.3e}) after {n_eval} density evaluations",
            achieved_tol=achieved)

    panels = sorted((a, b, y) for _, _, a, b, y in heap)
    centers = np.array([0.5 * (a + b) for a, b, _ in panels])
    widths = np.array([0.5 * (b - a) for a, b, _ in panels])
    beta = np.array([_TO_MONO @ y for _, _, y in panels])  # (P, 4)

    out = np.zeros(t.shape, dtype=complex)
    chunk = max(1, min(len(t), 2_000_000 // max(len(panels), 1)))
    for lo in range(0, len(t), chunk):
        ts = t[lo:lo + chunk]
        theta = widths[:, None] * ts[None, :]
        mom = _moments(theta)
        poly = np.einsum("pk,kpt->pt", beta, mom)
        phase = np.exp(-1j * centers[:, None] * ts[None, :])
        out[lo:lo + chunk] = np.einsum("p,pt,pt->t", widths, phase, poly)
    return out
