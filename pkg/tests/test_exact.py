"""Exact time-local master equation and its coefficient extraction."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driventls import (
    CoefficientTrack,
    KernelMode,
    KernelSolution,
    Lorentzian,
    SolverError,
    TimeGrid,
    build_coefficients,
    excited_state,
    generator_stack,
    plus_state,
    propagate_exact,
    sigma_z_series,
    solve_h,
    solve_u,
)

MODE = KernelMode.closed_form()


def _solved(width=1.0, detuning=0.3, drive=None, t_end=10.0, n=10_000):
    spec = Lorentzian(decay_rate=1.0, width=width, peak_offset=0.01)
    sol = solve_u(spec, detuning, MODE, TimeGrid(0.0, t_end, n))
    if drive is not None:
        sol = solve_h(sol, drive)
    return sol


# ---------------------------------------------------------------------------
# coefficients


def test_coefficients_match_finite_differences():
    sol = _solved(drive=0.5)
    ct = build_coefficients(sol)
    h = sol.grid.h
    m = sol.u_dot / sol.u
    # central difference of u as an independent route to m = u'/u
    m_fd = np.empty_like(m)
    m_fd[1:-1] = (sol.u[2:] - sol.u[:-2]) / (2.0 * h * sol.u[1:-1])
    m_fd[0], m_fd[-1] = m[0], m[-1]
    assert np.max(np.abs(ct.s + m_fd.imag)) < 1e-4
    assert np.max(np.abs(ct.gamma + m_fd.real)) < 1e-4
    # r from the drive response
    r_ref = 1j * (sol.h_dot - sol.h * m)
    assert np.max(np.abs(ct.r - r_ref)) < 1e-12


def test_undriven_coefficients_have_no_drive_term():
    ct = build_coefficients(_solved())
    assert np.all(ct.r == 0.0)
    assert not ct.singular_flags.any()


def test_all_singular_is_an_error():
    grid = TimeGrid(0.0, 1.0, 10)
    u = np.full(11, 1e-9, dtype=complex)
    ks = KernelSolution(grid=grid, u=u, u_dot=np.zeros_like(u),
                        spec=Lorentzian(decay_rate=1.0, width=1.0),
                        detuning=0.0, mode=MODE)
    with pytest.raises(SolverError, match="coefficients undefined"):
        build_coefficients(ks)


def test_flagged_nodes_are_filled_linearly():
    grid = TimeGrid(0.0, 1.0, 4)
    u = np.array([1.0, 0.5, 1e-9, 0.5, 1.0], dtype=complex)
    u_dot = np.array([0.0, 1.0, 0.0, -1.0, 0.0], dtype=complex)
    ks = KernelSolution(grid=grid, u=u, u_dot=u_dot,
                        spec=Lorentzian(decay_rate=1.0, width=1.0),
                        detuning=0.0, mode=MODE)
    ct = build_coefficients(ks)
    assert list(ct.singular_flags) == [False, False, True, False, False]
    # gamma = -Re(u'/u): neighbors give -2 and +2, midpoint fills to 0
    assert ct.gamma[2] == pytest.approx(0.0, abs=1e-12)


@given(s=st.floats(-5, 5), gamma=st.floats(-2, 2),
       rr=st.floats(-3, 3), ri=st.floats(-3, 3))
@settings(max_examples=100, deadline=None)
def test_generator_conserves_trace(s, gamma, rr, ri):
    g = generator_stack(s, gamma, rr + 1j * ri)[0]
    # population rows cancel identically: d(tr rho)/dt = 0 for any rho
    assert np.max(np.abs(g[0] + g[3])) < 1e-14


def test_generator_against_commutator_form():
    s, gamma, r = 1.3, 0.4, 0.2 - 0.7j
    sp = np.array([[0.0, 1.0], [0.0, 0.0]])
    sm = sp.T
    ham = s * sp @ sm + r * sp + np.conj(r) * sm
    rho = np.array([[0.55, 0.2 - 0.1j], [0.2 + 0.1j, 0.45]])
    drho = -1j * (ham @ rho - rho @ ham) + gamma * (
        2.0 * sm @ rho @ sp - sp @ sm @ rho - rho @ sp @ sm)
    got = (generator_stack(s, gamma, r)[0] @ rho.reshape(4)).reshape(2, 2)
    assert np.max(np.abs(got - drho)) < 1e-14


# ---------------------------------------------------------------------------
# propagation


@pytest.mark.parametrize("width", [25.0, 1.0, 0.05])
def test_undriven_map_is_the_amplitude_square(width):
    sol = _solved(width=width)
    trace = propagate_exact(plus_state(), build_coefficients(sol))
    assert np.max(np.abs(trace.rho[:, 0, 0] - 0.5 * np.abs(sol.u) ** 2)) < 1e-6
    assert np.max(np.abs(trace.rho[:, 0, 1] - 0.5 * sol.u)) < 1e-6


def test_exact_trace_is_physical():
    sol = _solved(width=1.0, drive=0.02)
    trace = propagate_exact(excited_state(), build_coefficients(sol))
    tr = np.einsum("tii->t", trace.rho)
    assert np.max(np.abs(tr - 1.0)) < 1e-9
    herm = trace.rho - np.conj(np.swapaxes(trace.rho, 1, 2))
    assert np.max(np.abs(herm)) < 1e-9
    eigs = np.linalg.eigvalsh(trace.rho)
    assert eigs.min() > -1e-9
    assert trace.halt_reason is None
    assert trace.method == "exact"


def test_sigma_z_of_excited_start():
    sol = _solved(width=1.0)
    trace = propagate_exact(excited_state(), build_coefficients(sol))
    sz = sigma_z_series(trace)
    assert sz[0] == pytest.approx(1.0, abs=1e-12)
    assert sz[-1] < 0.0  # decays toward the ground state


def test_propagation_halts_at_a_singular_node():
    grid = TimeGrid(0.0, 1.0, 10)
    t = grid.times
    u = np.exp(-0.5 * t).astype(complex)
    u[7:] = 1e-9  # amplitude collapses past node 6
    ks = KernelSolution(grid=grid, u=u, u_dot=-0.5 * u,
                        spec=Lorentzian(decay_rate=1.0, width=1.0),
                        detuning=0.0, mode=MODE)
    trace = propagate_exact(excited_state(), build_coefficients(ks))
    assert trace.truncated_at == pytest.approx(t[6])
    assert "singular amplitude" in trace.halt_reason
    assert np.all(np.isfinite(trace.rho[:7]))
    assert np.all(np.isnan(trace.rho[7:]))
    assert trace.valid_slice() == slice(0, 7)


def test_singular_from_the_start():
    grid = TimeGrid(0.0, 1.0, 10)
    u = np.ones(11, dtype=complex)
    u[1:] = 1e-9
    ks = KernelSolution(grid=grid, u=u, u_dot=np.zeros_like(u),
                        spec=Lorentzian(decay_rate=1.0, width=1.0),
                        detuning=0.0, mode=MODE)
    with pytest.raises(SolverError, match="singular from the start"):
        propagate_exact(excited_state(), build_coefficients(ks))


def test_coefficient_track_is_reusable():
    sol = _solved(width=1.0, drive=0.5, n=2_000)
    ct = build_coefficients(sol)
    assert isinstance(ct, CoefficientTrack)
    a = propagate_exact(excited_state(), ct)
    b = propagate_exact(excited_state(), ct)
    assert np.array_equal(a.rho, b.rho)
