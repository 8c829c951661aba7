"""Brute-force bath discretization and joint propagation."""

import math

import numpy as np
import pytest

from driventls import (
    ConfigurationError,
    DiscretizedBath,
    DomainError,
    KernelMode,
    KernelSolution,
    Lorentzian,
    SpinBoson,
    TimeGrid,
    correlation_kernel,
    discretize,
    excited_state,
    ground_state,
    plus_state,
    propagate_full,
    sigma_z_series,
    solve_u,
    undriven_analytic,
)

SPEC = Lorentzian(decay_rate=1.0, width=1.0, peak_offset=0.01)
DETUNING = 0.3


def _bath(n_modes=400, **kw):
    return discretize(SPEC, DETUNING, n_modes, **kw)


# ---------------------------------------------------------------------------
# discretization


def test_default_window_coverage():
    bath = _bath()
    assert bath.n_modes == 400
    assert bath.coverage == pytest.approx(0.984088, abs=1e-5)
    # window integral and Riemann sum of g_k^2 agree on the midpoint rule
    assert bath.total_weight == pytest.approx(0.492044, abs=1e-4)
    # and both sit within 2% of the full-line weight decay_rate*width/2
    assert bath.total_weight == pytest.approx(0.5, rel=0.02)
    assert bath.revival_time == pytest.approx(2.0 * math.pi / bath.spacing)
    assert bath.horizon == 5.0


def test_kernel_error_profile():
    bath = _bath()
    # the sup norm is pinned at t = 0 by the spectral weight outside the
    # window; past the first tenth of the horizon the gap is much smaller
    assert bath.kernel_error < 1e-2
    t = np.linspace(0.1, bath.horizon, 801)
    cont = correlation_kernel(SPEC, DETUNING, KernelMode.closed_form(), t)
    assert np.max(np.abs(bath.kernel(t) - cont)) < 1.5e-3


def test_coverage_gate():
    with pytest.raises(ConfigurationError, match="covers"):
        _bath(window=(-2.0, 2.0))  # narrow window, default min_coverage
    bath = _bath(window=(-2.0, 2.0), min_coverage=0.5)
    assert bath.coverage < 0.98
    assert bath.window == (-2.0, 2.0)


def test_single_mode_kernel_has_constant_modulus():
    bath = _bath(n_modes=1, window=(0.0, 0.58), min_coverage=0.0)
    assert bath.n_modes == 1
    assert bath.spacing == math.inf
    assert bath.revival_time == math.inf
    assert bath.freqs[0] == pytest.approx(0.29)
    t = np.linspace(0.0, 20.0, 101)
    mod = np.abs(bath.kernel(t))
    assert np.ptp(mod) < 1e-14


def test_discretize_validation():
    with pytest.raises(ConfigurationError):
        _bath(n_modes=0)
    with pytest.raises(ConfigurationError):
        _bath(window=(2.0, 2.0))
    with pytest.raises(ConfigurationError, match="revival"):
        _bath(horizon=100.0)
    with pytest.raises(ConfigurationError, match="window"):
        discretize(SpinBoson(mass=5.0, width=0.05, osc_freq=1.3), 0.3, 100)


def test_spin_boson_discretization():
    spec = SpinBoson(mass=5.0, width=0.05, osc_freq=1.3)
    bath = discretize(spec, 0.3, 400, window=(-1.0, 3.0), min_coverage=0.9)
    t = np.linspace(0.0, bath.horizon, 401)
    cont = correlation_kernel(spec, 0.3, KernelMode.numeric(), t)
    assert np.max(np.abs(bath.kernel(t) - cont)) < 5e-3


def test_doubling_modes_converges_the_kernel():
    errs = [_bath(n_modes=n).kernel_error for n in (100, 200, 400)]
    assert errs[0] > errs[1] - 1e-4
    assert errs[1] > errs[2] - 1e-4
    assert errs[2] < 1e-2


# ---------------------------------------------------------------------------
# joint propagation


def test_undriven_joint_propagation_matches_the_amplitude():
    bath = _bath()
    grid = TimeGrid(0.0, 5.0, 500)
    trace = propagate_full(excited_state(), bath, DETUNING, 0.0, 1, grid)
    sol = solve_u(SPEC, DETUNING, KernelMode.closed_form(), grid)
    gap = np.abs(trace.rho[:, 0, 0].real - np.abs(sol.u) ** 2)
    assert np.max(gap) < 5e-5
    assert trace.method == "oracle"
    assert trace.warning is None  # leak monitor is armed by the drive only


def test_joint_propagation_is_physical():
    bath = _bath(n_modes=100)
    grid = TimeGrid(0.0, 3.0, 120)
    trace = propagate_full(plus_state(), bath, DETUNING, 0.0, 1, grid)
    herm = trace.rho - np.conj(np.swapaxes(trace.rho, 1, 2))
    assert np.max(np.abs(herm)) < 1e-10
    tr = np.einsum("tii->t", trace.rho).real
    assert np.max(np.abs(tr - 1.0)) < 1e-10
    # coherence follows u itself, not |u|^2 (tolerance set by the
    # 100-mode kernel error, about 1e-3)
    sol = solve_u(SPEC, DETUNING, KernelMode.closed_form(), grid)
    assert np.max(np.abs(trace.rho[:, 0, 1] - 0.5 * sol.u)) < 5e-3


def test_mixed_initial_state():
    bath = _bath(n_modes=100)
    grid = TimeGrid(0.0, 3.0, 120)
    rho0 = np.array([[0.7, 0.0], [0.0, 0.3]], dtype=complex)
    trace = propagate_full(rho0, bath, DETUNING, 0.0, 1, grid)
    sol = solve_u(SPEC, DETUNING, KernelMode.closed_form(), grid)
    assert np.max(np.abs(trace.rho[:, 0, 0].real - 0.7 * np.abs(sol.u) ** 2)) < 5e-3
    assert trace.rho[0, 1, 1].real == pytest.approx(0.3, abs=1e-12)


def test_zero_coupling_bath_reduces_to_rabi():
    # hand-built silent bath: the drive term is then the whole dynamics
    bath = DiscretizedBath(freqs=np.array([0.5]), couplings=np.array([0.0]),
                           window=(0.0, 1.0), coverage=1.0, kernel_error=0.0,
                           horizon=10.0)
    grid = TimeGrid(0.0, 10.0, 400)
    trace = propagate_full(excited_state(), bath, 0.0, 0.5, 1, grid)
    assert np.max(np.abs(sigma_z_series(trace) - np.cos(grid.times))) < 1e-8


def test_driven_run_attaches_leak_warning_when_truncated():
    # a driven run inside a deliberately tight shell must confess
    bath = _bath(n_modes=40, window=(-20.0, 20.0), min_coverage=0.4)
    grid = TimeGrid(0.0, 5.0, 250)
    trace = propagate_full(excited_state(), bath, DETUNING, 1.0, 1, grid,
                           leak_tol=1e-6)
    assert trace.warning is not None
    assert "truncation leak" in trace.warning
    assert np.all(np.isfinite(trace.rho))  # the run is still returned


def test_propagation_validation():
    bath = _bath(n_modes=10, window=(-3.0, 3.0), min_coverage=0.5)
    with pytest.raises(ConfigurationError):
        propagate_full(excited_state(), bath, DETUNING, 0.0, 0,
                       TimeGrid(0.0, 1.0, 10))
    with pytest.raises(ConfigurationError):
        propagate_full(excited_state(), bath, DETUNING, 0.0, 1,
                       TimeGrid(0.5, 1.0, 10))


# ---------------------------------------------------------------------------
# analytic undriven map


def test_undriven_analytic_ground_state_is_stationary():
    sol = solve_u(SPEC, DETUNING, KernelMode.closed_form(), TimeGrid(0.0, 5.0, 50))
    trace = undriven_analytic(ground_state(), sol)
    assert np.max(np.abs(trace.rho - ground_state()[None])) < 1e-15
    assert trace.method == "undriven_analytic"


def test_undriven_analytic_exponential_map():
    grid = TimeGrid(0.0, 4.0, 200)
    u = np.exp(-0.5 * grid.times).astype(complex)
    sol = KernelSolution(grid=grid, u=u, u_dot=-0.5 * u, spec=SPEC,
                         detuning=0.0, mode=KernelMode.closed_form())
    trace = undriven_analytic(plus_state(), sol)
    assert np.max(np.abs(trace.rho[:, 0, 0].real - 0.5 * np.exp(-grid.times))) < 1e-14
    assert np.max(np.abs(trace.rho[:, 0, 1] - 0.5 * u)) < 1e-14
    assert np.max(np.abs(np.einsum("tii->t", trace.rho).real - 1.0)) < 1e-14


def test_undriven_analytic_rejects_driven_solutions():
    from driventls import solve_h
    sol = solve_u(SPEC, DETUNING, KernelMode.closed_form(), TimeGrid(0.0, 2.0, 20))
    driven = solve_h(sol, 0.5)
    with pytest.raises(DomainError):
        undriven_analytic(excited_state(), driven)
