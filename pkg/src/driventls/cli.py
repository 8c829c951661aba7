"""Command line front end: configs, figure presets, CSV emission, validation.

The CSV schema is deliberately flat so one reader serves every data
set: t, method, sz, rho_ee_re, rho_eg_re, rho_eg_im, gamma, s, r_re,
r_im, fidelity_vs_exact, min_eig, trace_dev.  Quantities a row does not
carry are emitted as empty fields.  Floats are printed with 17
significant digits, so a rerun with the same config reproduces the file
byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError, SolverError
from .exact import CoefficientTrack, build_coefficients, generator_stack, propagate_exact
from .kernel import TimeGrid, solve_h, solve_u
from .observables import (
    EvolutionTrace,
    as_density,
    classify_regime,
    excited_state,
    fidelity,
    ground_state,
    physicality_scan,
    plus_state,
    sigma_z_series,
)
from .oracle import discretize, propagate_full
from .perturbative import (
    propagate_markovian,
    propagate_nz,
    propagate_tcl_expanded,
    propagate_tcl_timelocal,
)
from .spectral import FlatMemoryless, KernelMode, Lorentzian, SpinBoson
from ._rk4 import propagate_density_vec, rk4_step_matrices

__all__ = [
    "ScenarioConfig",
    "ScenarioResult",
    "FIGURE_IDS",
    "figure_preset",
    "load_config",
    "run_scenario",
    "write_scenario",
    "reproduce_figure",
    "run_validation",
    "main",
]

CSV_COLUMNS = ("t", "method", "sz", "rho_ee_re", "rho_eg_re", "rho_eg_im",
               "gamma", "s", "r_re", "r_im", "fidelity_vs_exact",
               "min_eig", "trace_dev")

METHODS = ("exact", "nz", "tcl", "tcl_secular", "markovian", "oracle")

_MODELS = ("lorentzian", "flat", "spin_boson")
_STATES = {"excited": excited_state, "ground": ground_state, "plus": plus_state}

# close to 2000 output rows regardless of grid resolution
_TARGET_ROWS = 2000


def _threads() -> int:
    raw = os.environ.get("DRIVENTLS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"DRIVENTLS_THREADS={raw!r} is not an integer") from exc
    return max(1, n)


@dataclass(frozen=True)
class ScenarioConfig:
    """One solvable scenario: spectral model, system parameters, grid, methods."""

    name: str
    model: str
    detuning: float
    drive: float
    t_end: float
    n_steps: int
    methods: tuple[str, ...]
    decay_rate: float = 1.0
    width: float = 1.0
    peak_offset: float = 0.0
    mass: float = 1.0
    osc_freq: float = 1.0
    laser_freq: float | None = None
    lower_limit: str = "minus_infinity"
    state: str = "excited"
    state_matrix: tuple | None = None
    out: str | None = None

    def spectral(self):
        if self.model == "lorentzian":
            return Lorentzian(decay_rate=self.decay_rate, width=self.width,
                              peak_offset=self.peak_offset)
        if self.model == "flat":
            return FlatMemoryless(decay_rate=self.decay_rate)
        return SpinBoson(mass=self.mass, width=self.width, osc_freq=self.osc_freq)

    def kernel_mode(self) -> KernelMode:
        if self.lower_limit == "minus_laser_freq":
            return KernelMode.numeric(lower_limit="minus_laser_freq",
                                      laser_freq=self.laser_freq)
        if self.model == "lorentzian":
            return KernelMode.closed_form()
        return KernelMode.numeric()

    def initial_state(self) -> np.ndarray:
        if self.state == "custom":
            # stored as nested (re, im) float pairs to stay hashable
            mat = np.array([[complex(re, im) for re, im in row]
                            for row in self.state_matrix])
            return as_density(mat)
        return _STATES[self.state]()

    def grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.t_end, self.n_steps)


def _config_error(name: str, detail: str) -> ConfigurationError:
    return ConfigurationError(f"field '{name}': {detail}")


def _as_float(data: dict, key: str, default=None) -> float:
    if key not in data:
        if default is None:
            raise _config_error(key, "missing")
        return default
    try:
        return float(data[key])
    except (TypeError, ValueError):
        raise _config_error(key, f"expected a number, got {data[key]!r}") from None


def config_from_mapping(data: dict, name: str) -> ScenarioConfig:
    """Validate a plain mapping (parsed YAML) into a ScenarioConfig.

    Every rejection names the offending field; the CLI surfaces these
    with exit code 1.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a key-value mapping")
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    for key in data:
        if key not in known:
            raise _config_error(key, "unknown field")

    model = data.get("model", "lorentzian")
    if model not in _MODELS:
        raise _config_error("model", f"must be one of {_MODELS}, got {model!r}")

    methods = data.get("methods")
    if not methods or not isinstance(methods, (list, tuple)):
        raise _config_error("methods", "select at least one method")
    for m in methods:
        if m not in METHODS:
            raise _config_error("methods", f"unknown method {m!r}")
    # canonical order, duplicates dropped, so output is reproducible
    methods = tuple(m for m in METHODS if m in methods)

    t_end = _as_float(data, "t_end")
    if not t_end > 0.0:
        raise _config_error("t_end", "must be positive")
    try:
        n_steps = int(data.get("n_steps", 0))
    except (TypeError, ValueError):
        raise _config_error("n_steps", f"expected an integer, got {data.get('n_steps')!r}") from None
    if n_steps < 2:
        raise _config_error("n_steps", "need at least 2 steps")

    decay_rate = _as_float(data, "decay_rate", 1.0)
    width = _as_float(data, "width", 1.0)
    mass = _as_float(data, "mass", 1.0)
    for key, val in (("decay_rate", decay_rate), ("width", width), ("mass", mass)):
        if not val > 0.0:
            raise _config_error(key, "rates must be positive")

    state = data.get("state", "excited")
    state_matrix = None
    if state == "custom":
        raw = data.get("state_matrix")
        if raw is None:
            raise _config_error("state_matrix", "required when state is custom")
        try:
            mat = np.array([[complex(*e) if isinstance(e, (list, tuple)) else complex(e)
                             for e in row] for row in raw])
            as_density(mat)
        except (TypeError, ValueError, ConfigurationError) as exc:
            raise _config_error("state_matrix", str(exc)) from None
        state_matrix = tuple(tuple((z.real, z.imag) for z in row) for row in mat)
    elif state not in _STATES:
        raise _config_error("state", f"must be excited, ground, plus or custom, got {state!r}")

    lower_limit = data.get("lower_limit", "minus_infinity")
    laser_freq = data.get("laser_freq")
    if laser_freq is not None:
        laser_freq = _as_float(data, "laser_freq")
    if lower_limit == "minus_laser_freq":
        if laser_freq is None or not laser_freq > 0.0:
            raise _config_error("laser_freq", "minus_laser_freq needs a positive laser_freq")
    elif lower_limit != "minus_infinity":
        raise _config_error("lower_limit", f"unknown mode {lower_limit!r}")

    if model == "spin_boson":
        osc = _as_float(data, "osc_freq")
        if not osc > _as_float(data, "detuning"):
            raise _config_error("osc_freq", "needs osc_freq > detuning (positive laser frequency)")

    return ScenarioConfig(
        name=str(data.get("name", name)),
        model=model,
        detuning=_as_float(data, "detuning"),
        drive=_as_float(data, "drive", 0.0),
        t_end=t_end,
        n_steps=n_steps,
        methods=methods,
        decay_rate=decay_rate,
        width=width,
        peak_offset=_as_float(data, "peak_offset", 0.0),
        mass=mass,
        osc_freq=_as_float(data, "osc_freq", 1.0),
        laser_freq=laser_freq,
        lower_limit=lower_limit,
        state=state,
        state_matrix=state_matrix,
        out=data.get("out"),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return config_from_mapping(data, name=path.stem)


# ---------------------------------------------------------------------------
# Figure presets.  System parameters are triples (detuning, drive,
# peak_offset) in units of the decay rate; each figure fixes one width.

_FIG_PANELS: dict[str, dict] = {
    "2": {"width": 25.0, "t_end": 10.0,
          "panels": {"a": (0.3, 0.02, 0.01), "b": (0.3, 1.0, 0.01),
                     "c": (5.0, 1.0, 0.01), "d": (1.0, 1.0, 10.0)}},
    "3": {"width": 1.0, "t_end": 10.0,
          "panels": {"a": (0.3, 0.02, 0.01), "b": (10.0, 1.0, 0.01),
                     "c": (10.0, 0.02, 0.2), "d": (10.0, 1.0, 0.2)}},
    "5": {"width": 0.05, "t_end": 50.0,
          "panels": {"a": (0.3, 0.02, 0.01), "b": (3.5, 0.4, 0.01),
                     "c": (10.0, 0.02, 0.08), "d": (0.3, 0.02, 0.14)}},
    "7": {"width": 10.0, "t_end": 10.0,
          "panels": {"a": (0.0, 0.5, 40.0), "b": (0.5, 0.2, 10.0),
                     "c": (10.0, 2.0, 60.0), "d": (0.1, 0.2, 5.0),
                     "e": (10.0, 0.2, 60.0), "f": (1.0, 0.5, 10.0)}},
    "8": {"width": 0.8, "t_end": 10.0,
          "panels": {"a": (2.0, 0.2, 15.0), "b": (0.04, 0.06, 0.4),
                     "c": (0.0, 0.2, 10.0), "d": (0.05, 0.1, 1.8),
                     "e": (20.0, 1.0, 5.0), "f": (0.5, 0.2, 2.5)}},
}

# widths of the three bath regimes revisited by figures 4, 6 and 9;
# panel parameters are those of figures 2a / 3a / 5a
_REGIME_WIDTHS = {"a": (25.0, 10.0), "b": (1.0, 10.0), "c": (0.05, 50.0)}

_BASE_STEP = 1e-3

FIGURE_IDS = ("2", "3", "4", "5", "6", "7", "8", "9")


def _steps(t_end: float) -> int:
    return round(t_end / _BASE_STEP)


def figure_preset(fig: str, panel: str) -> ScenarioConfig:
    """The ScenarioConfig behind one figure panel, caption values verbatim."""
    if fig in _FIG_PANELS:
        info = _FIG_PANELS[fig]
        if panel not in info["panels"]:
            raise ConfigurationError(f"figure {fig} has no panel {panel!r}")
        det, drv, off = info["panels"][panel]
        methods = ("exact", "tcl", "nz") if fig in ("2", "3", "5") \
            else ("exact", "tcl", "tcl_secular")
        return ScenarioConfig(
            name=f"fig{fig}{panel}", model="lorentzian", detuning=det, drive=drv,
            t_end=info["t_end"], n_steps=_steps(info["t_end"]), methods=methods,
            width=info["width"], peak_offset=off)
    if fig in ("4", "6", "9"):
        if panel not in _REGIME_WIDTHS:
            raise ConfigurationError(f"figure {fig} has no panel {panel!r}")
        width, t_end = _REGIME_WIDTHS[panel]
        base = dict(name=f"fig{fig}{panel}", model="lorentzian", detuning=0.3,
                    drive=0.02, t_end=t_end, n_steps=_steps(t_end), width=width,
                    peak_offset=0.01)
        if fig == "4":
            return ScenarioConfig(methods=("exact", "tcl", "nz"), **base)
        # the lower-limit study and the spin-boson comparison fix the
        # absolute frame: osc_freq = 1.3, laser_freq = 1
        return ScenarioConfig(methods=("exact",), laser_freq=1.0, **base)
    raise ConfigurationError(f"unknown figure id {fig!r}")


# ---------------------------------------------------------------------------
# Scenario execution.


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    grid: TimeGrid
    traces: dict[str, EvolutionTrace]
    tracks: dict[str, CoefficientTrack]
    runtimes: dict[str, float]


def _exact_flat(config: ScenarioConfig, grid: TimeGrid) -> EvolutionTrace:
    # the memoryless limit of the exact equation is the constant-
    # coefficient generator itself
    gen = generator_stack(np.full(1, config.detuning),
                          np.full(1, 0.5 * config.decay_rate),
                          np.full(1, complex(config.drive)))[0]
    half = np.broadcast_to(gen, (2 * grid.n_steps + 1, 4, 4))
    steps = rk4_step_matrices(half, grid.h)
    ys = propagate_density_vec(steps, config.initial_state().reshape(-1))
    return EvolutionTrace(grid=grid, rho=ys.reshape(-1, 2, 2), method="exact")


def _oracle_trace(config: ScenarioConfig, grid: TimeGrid) -> EvolutionTrace:
    spec = config.spectral()
    if not isinstance(spec, Lorentzian):
        raise ConfigurationError("the oracle needs a Lorentzian density")
    centre = config.detuning - config.peak_offset
    if config.drive == 0.0:
        bath = discretize(spec, config.detuning, 400)
        n_max = 1
    else:
        # narrow window, low coverage: keeps the driven basis desk-sized
        half_width = 20.0 * config.decay_rate
        bath = discretize(spec, config.detuning, 40,
                          window=(centre - half_width, centre + half_width),
                          min_coverage=0.4)
        n_max = 2
    return propagate_full(config.initial_state(), bath, config.detuning,
                          config.drive, n_max, grid)


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Execute every selected method on the shared grid."""
    grid = config.grid()
    spec = config.spectral()
    mode = config.kernel_mode()
    rho0 = config.initial_state()
    flat = isinstance(spec, FlatMemoryless)

    traces: dict[str, EvolutionTrace] = {}
    tracks: dict[str, CoefficientTrack] = {}
    runtimes: dict[str, float] = {}
    for method in config.methods:
        start = time.perf_counter()
        try:
            if method == "exact":
                if flat:
                    traces[method] = _exact_flat(config, grid)
                else:
                    sol = solve_h(solve_u(spec, config.detuning, mode, grid),
                                  config.drive)
                    tracks[method] = build_coefficients(sol)
                    traces[method] = propagate_exact(rho0, tracks[method])
            elif method == "nz":
                traces[method] = propagate_nz(rho0, config.detuning, config.drive,
                                              spec, grid, mode=mode)
            elif method == "tcl":
                traces[method] = propagate_tcl_timelocal(
                    rho0, config.detuning, config.drive, spec, grid, mode=mode)
            elif method == "tcl_secular":
                traces[method] = propagate_tcl_expanded(
                    rho0, config.detuning, config.drive, spec, grid,
                    secular=True, mode=mode)
            elif method == "markovian":
                traces[method] = propagate_markovian(
                    rho0, config.detuning, config.drive, config.decay_rate, grid)
            elif method == "oracle":
                traces[method] = _oracle_trace(config, grid)
        except (SolverError, ConfigurationError) as exc:
            raise type(exc)(f"[{method}] {exc}") from exc
        runtimes[method] = time.perf_counter() - start
    return ScenarioResult(config=config, grid=grid, traces=traces,
                          tracks=tracks, runtimes=runtimes)


# ---------------------------------------------------------------------------
# CSV emission.


def _fmt(x: float | None) -> str:
    if x is None or not math.isfinite(x):
        return ""
    # + 0.0 folds negative zero into plain zero
    return "%.17g" % (x + 0.0)


def _project_cone(rho: np.ndarray) -> np.ndarray:
    """Nearest physical state: clip negative eigenvalues, renormalise.

    Keeps the fidelity column defined on the unphysical stretches of
    the perturbative solvers while penalising them for leaving the
    state space.
    """
    herm = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(herm)
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if s <= 0.0:
        return np.diag([0.5, 0.5]).astype(complex)
    return (v * (w / s)) @ v.conj().T


def _fidelity_column(base: EvolutionTrace | None, trace: EvolutionTrace) -> np.ndarray:
    n = trace.rho.shape[0]
    out = np.full(n, np.nan)
    if base is None or trace is base:
        return out
    for i in range(n):
        a, b = base.rho[i], trace.rho[i]
        if not (np.all(np.isfinite(a.view(float))) and np.all(np.isfinite(b.view(float)))):
            continue
        out[i] = fidelity(_project_cone(a), _project_cone(b), clip_tol=math.inf)
    return out


def csv_lines(grid: TimeGrid, series: dict[str, EvolutionTrace],
              tracks: dict[str, CoefficientTrack],
              fidelity_base: str = "exact") -> list[str]:
    """Flat-schema rows for one scenario file, decimated to ~2000 per method."""
    stride = max(1, grid.n_steps // _TARGET_ROWS)
    idx = list(range(0, grid.n_steps + 1, stride))
    if idx[-1] != grid.n_steps:
        idx.append(grid.n_steps)
    times = grid.times
    base = series.get(fidelity_base)
    lines = [",".join(CSV_COLUMNS)]
    for method, trace in series.items():
        rho = trace.rho
        sz = sigma_z_series(trace)
        eigs = np.linalg.eigvalsh(
            np.nan_to_num(0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1)))), nan=0.0))
        trace_dev = np.abs(rho[:, 0, 0] + rho[:, 1, 1] - 1.0).real
        fid = _fidelity_column(base, trace)
        track = tracks.get(method)
        for i in idx:
            if not np.all(np.isfinite(rho[i].view(float))):
                continue  # truncated tail rows carry no state
            cells = [
                _fmt(times[i]), method, _fmt(sz[i]),
                _fmt(rho[i, 0, 0].real), _fmt(rho[i, 0, 1].real), _fmt(rho[i, 0, 1].imag),
                _fmt(track.gamma[i]) if track is not None else "",
                _fmt(track.s[i]) if track is not None else "",
                _fmt(track.r[i].real) if track is not None else "",
                _fmt(track.r[i].imag) if track is not None else "",
                _fmt(fid[i]), _fmt(eigs[i].min()), _fmt(trace_dev[i]),
            ]
            lines.append(",".join(cells))
    return lines


def _summary(result: ScenarioResult) -> dict:
    config = result.config
    regime = None
    if config.model == "lorentzian":
        label = classify_regime(config.detuning, config.drive, config.decay_rate,
                                config.width, config.peak_offset)
        regime = {"markovianity": label.markovianity, "secularity": label.secularity,
                  "region": label.region, "ratios": list(label.ratios)}
    methods = {}
    for name, trace in result.traces.items():
        rep = physicality_scan(trace)
        n = rep.checked_nodes
        methods[name] = {
            "runtime_s": round(result.runtimes.get(name, 0.0), 6),
            "min_eig": float(rep.min_eig[:n].min()) if n else None,
            "max_trace_dev": float(rep.trace_dev[:n].max()) if n else None,
            "max_sz_violation": float(rep.sz_violation[:n].max()) if n else None,
            "first_violation": rep.first_violation,
            "physical": rep.first_violation is None,
            "truncated_at": trace.truncated_at,
            "halt_reason": trace.halt_reason,
            "warning": trace.warning,
        }
    return {"name": config.name, "model": config.model, "regime": regime,
            "grid": {"t_end": config.t_end, "n_steps": config.n_steps},
            "methods": methods}


def write_scenario(result: ScenarioResult, out_dir: str | Path,
                   series: dict[str, EvolutionTrace] | None = None,
                   tracks: dict[str, CoefficientTrack] | None = None) -> Path:
    """Write <name>.csv and <name>.summary.json, returning the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.config.name}.csv"
    lines = csv_lines(result.grid,
                      series if series is not None else result.traces,
                      tracks if tracks is not None else result.tracks)
    path.write_text("\n".join(lines) + "\n")
    (out / f"{result.config.name}.summary.json").write_text(
        json.dumps(_summary(result), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# Figure reproduction.


def _density_lines(width: float, detuning: float, peak_offset: float) -> list[str]:
    """Rotating-frame density profile in units of decay_rate/2pi, flat schema.

    t doubles as the frequency axis and sz as the normalised density;
    the plotting side knows figure-6 bottom panels read this way.
    """
    peak = detuning - peak_offset
    half = max(3.0 * width, 1.5)
    xs = np.linspace(peak - half, peak + half, 1201)
    dens = width**2 / ((xs - peak) ** 2 + width**2)
    lines = [",".join(CSV_COLUMNS)]
    for x, j in zip(xs, dens):
        lines.append(",".join([_fmt(x), "spectral", _fmt(j)] + [""] * 10))
    return lines


def _figure_panel(fig: str, panel: str, out_dir: Path) -> list[Path]:
    config = figure_preset(fig, panel)
    if fig == "6":
        base = run_scenario(config)
        shifted_cfg = dataclasses.replace(config, lower_limit="minus_laser_freq")
        shifted = run_scenario(shifted_cfg)
        series = {"exact": base.traces["exact"],
                  "exact_shifted": shifted.traces["exact"]}
        tracks = {"exact": base.tracks["exact"],
                  "exact_shifted": shifted.tracks["exact"]}
        merged = ScenarioResult(config=config, grid=base.grid, traces=series,
                                tracks=tracks,
                                runtimes={**base.runtimes,
                                          "exact_shifted": shifted.runtimes["exact"]})
        paths = [write_scenario(merged, out_dir, series=series, tracks=tracks)]
        # companion density panel: a -> d, b -> e, c -> f
        twin = chr(ord(panel) + 3)
        dens_path = out_dir / f"fig6{twin}.csv"
        dens_path.write_text("\n".join(
            _density_lines(config.width, config.detuning, config.peak_offset)) + "\n")
        return paths + [dens_path]
    if fig == "9":
        base = run_scenario(config)
        sb_cfg = dataclasses.replace(config, model="spin_boson", mass=5.0,
                                     osc_freq=1.3)
        sb = run_scenario(sb_cfg)
        series = {"exact": base.traces["exact"],
                  "exact_spin_boson": sb.traces["exact"]}
        tracks = {"exact": base.tracks["exact"],
                  "exact_spin_boson": sb.tracks["exact"]}
        merged = ScenarioResult(config=config, grid=base.grid, traces=series,
                                tracks=tracks,
                                runtimes={**base.runtimes,
                                          "exact_spin_boson": sb.runtimes["exact"]})
        return [write_scenario(merged, out_dir, series=series, tracks=tracks)]
    result = run_scenario(config)
    return [write_scenario(result, out_dir)]


def reproduce_figure(fig: str, out_dir: str | Path) -> list[Path]:
    """Run every panel of one figure, one CSV per panel."""
    fig = fig.removeprefix("fig")
    if fig not in FIGURE_IDS:
        raise ConfigurationError(
            f"unknown figure id {fig!r}; known: {', '.join(FIGURE_IDS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panels = sorted(_FIG_PANELS[fig]["panels"]) if fig in _FIG_PANELS \
        else sorted(_REGIME_WIDTHS)
    workers = min(_threads(), len(panels))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out_paths = pool.map(lambda p: _figure_panel(fig, p, out), panels)
            return [p for chunk in out_paths for p in chunk]
    return [p for panel in panels for p in _figure_panel(fig, panel, out)]


# ---------------------------------------------------------------------------
# Validation suite.


@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail", or "insufficient resolution"
    detail: str

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def _check(name: str, ok: bool, detail: str) -> CheckResult:
    return CheckResult(name, "pass" if ok else "fail", detail)


def run_validation(n_steps: int = 10_000, perturb: str | None = None) -> list[CheckResult]:
    """Five self-contained consistency checks, a few seconds in total.

    perturb is a debug hook for testing the suite itself: "gamma_sign"
    flips the damping sign inside the Markovian-reduction comparison,
    which must make exactly that check fail.
    """
    from .kernel import closed_form_u  # local: only validation needs it

    checks: list[CheckResult] = []
    t_end = 10.0

    # 1: kernel solver against the closed form
    if t_end / n_steps > 2e-3:
        checks.append(CheckResult(
            "kernel_convergence", "insufficient resolution",
            f"step {t_end / n_steps:g} too coarse for the 1e-6 target; "
            f"need n_steps >= {int(t_end / 2e-3)}"))
    else:
        worst = 0.0
        for width in (25.0, 1.0, 0.05):
            spec = Lorentzian(decay_rate=1.0, width=width, peak_offset=0.01)
            grid = TimeGrid(0.0, t_end, n_steps)
            sol = solve_u(spec, 0.3, KernelMode.closed_form(), grid)
            ref = closed_form_u(1.0, width, 0.3, 0.01, grid.times)
            worst = max(worst, float(np.max(np.abs(sol.u - ref))))
        checks.append(_check("kernel_convergence", worst <= 1e-6,
                             f"max |u - closed form| = {worst:.3e}"))

    # 2: Markovian reduction of the flat density, against a Lindblad
    # superoperator assembled from scratch (Kronecker products plus the
    # matrix exponential, no shared generator code)
    from scipy.linalg import expm

    n_flat = 10_000  # n_steps only parameterises the convergence check
    grid = TimeGrid(0.0, t_end, n_flat)
    sign = -1.0 if perturb == "gamma_sign" else 1.0
    lower = np.array([[0.0, 0.0], [1.0, 0.0]])
    number = lower.T @ lower
    ident = np.eye(2)
    ham = 0.3 * number + 0.3 * np.array([[0.0, 1.0], [1.0, 0.0]])
    lind = (-1j * (np.kron(ham, ident) - np.kron(ident, ham.T))
            + sign * (np.kron(lower, lower)
                      - 0.5 * (np.kron(number, ident) + np.kron(ident, number))))
    flat_cfg = ScenarioConfig(name="flat", model="flat", detuning=0.3, drive=0.3,
                              t_end=t_end, n_steps=n_flat, methods=("exact",))
    flat = _exact_flat(flat_cfg, grid)
    sample = range(0, n_flat + 1, n_flat // 20)
    gap = max(float(np.max(np.abs(
        flat.rho[i].reshape(-1) - expm(lind * grid.times[i]) @ excited_state().reshape(-1))))
        for i in sample)
    coeff_gap = float(np.max(np.abs(
        generator_stack(np.full(1, 0.3), np.full(1, 0.5), np.full(1, 0.3 + 0.0j))[0]
        - lind)))
    ok = gap <= 1e-8 and coeff_gap <= 1e-10
    checks.append(_check("markovian_reduction", ok,
                         f"max |flat exact - expm| = {gap:.3e}, "
                         f"generator entries off by {coeff_gap:.3e}"))

    # 3: TCL dual form on the first figure scenario
    spec = Lorentzian(decay_rate=1.0, width=25.0, peak_offset=0.01)
    g2 = TimeGrid(0.0, 5.0, 5000)
    a = propagate_tcl_timelocal(excited_state(), 0.3, 0.02, spec, g2)
    b = propagate_tcl_expanded(excited_state(), 0.3, 0.02, spec, g2)
    gap = float(np.max(np.abs(a.rho - b.rho)))
    checks.append(_check("tcl_dual_form", gap <= 1e-6,
                         f"max |time-local - expanded| = {gap:.3e}"))

    # 4: undriven discretized-bath oracle vs |u|^2
    spec = Lorentzian(decay_rate=1.0, width=1.0, peak_offset=0.01)
    g4 = TimeGrid(0.0, 5.0, 1000)
    bath = discretize(spec, 0.3, 400)
    tr = propagate_full(excited_state(), bath, 0.3, 0.0, 1, g4)
    sol = solve_u(spec, 0.3, KernelMode.closed_form(), g4)
    gap = float(np.max(np.abs(tr.rho[:, 0, 0].real - np.abs(sol.u) ** 2)))
    checks.append(_check("undriven_oracle", gap <= 1e-3,
                         f"max |rho_ee - |u|^2| = {gap:.3e}"))

    # 5: driven oracle vs the exact equation
    spec = Lorentzian(decay_rate=1.0, width=25.0, peak_offset=0.01)
    centre = 0.3 - 0.01
    bath = discretize(spec, 0.3, 40, window=(centre - 20.0, centre + 20.0),
                      min_coverage=0.4)
    tr = propagate_full(excited_state(), bath, 0.3, 0.02, 2, g4)
    sol = solve_h(solve_u(spec, 0.3, KernelMode.closed_form(), g4), 0.02)
    ex = propagate_exact(excited_state(), build_coefficients(sol))
    gap = float(np.max(np.abs(sigma_z_series(tr) - sigma_z_series(ex))))
    checks.append(_check("driven_oracle", gap <= 5e-2,
                         f"max sigma_z gap = {gap:.3e}; {tr.warning or 'no leak warning'}"))
    return checks


# ---------------------------------------------------------------------------
# Entry point.


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_scenario(config)
    out = args.out or config.out or "."
    path = write_scenario(result, out)
    print(f"wrote {path}")
    for name, trace in result.traces.items():
        rep = physicality_scan(trace)
        flag = "ok" if rep.first_violation is None else \
            f"unphysical from t={rep.first_violation:g}"
        print(f"  {name}: {result.runtimes[name]:.2f}s {flag}")
    return 0


def _cmd_figure(args) -> int:
    paths = reproduce_figure(args.id, args.out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _parse_vary(raw: str) -> tuple[str, np.ndarray]:
    try:
        param, span = raw.split("=", 1)
        lo, hi, n = span.split(":")
        values = np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ConfigurationError(
            f"--vary expects PARAM=lo:hi:n, got {raw!r}") from None
    if values.size < 2:
        raise ConfigurationError("--vary needs at least 2 points")
    allowed = ("detuning", "drive", "peak_offset", "width", "decay_rate", "t_end")
    if param not in allowed:
        raise ConfigurationError(
            f"cannot vary {param!r}; choose from {', '.join(allowed)}")
    return param, values


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    param, values = _parse_vary(args.vary)
    out = Path(args.out or config.out or ".")
    written = []
    for i, value in enumerate(values):
        repl = {param: float(value)}
        if param == "t_end":  # keep the step size fixed while the span varies
            repl["n_steps"] = max(2, round(float(value) / config.grid().h))
        point = dataclasses.replace(config, name=f"{config.name}_{param}_{i:03d}",
                                    **repl)
        path = write_scenario(run_scenario(point), out)
        written.append({"value": float(value), "csv": path.name})
        print(f"wrote {path}  ({param} = {value:g})")
    (out / f"{config.name}_sweep.json").write_text(json.dumps(
        {"param": param, "points": written}, indent=2) + "\n")
    return 0


def _cmd_validate(args) -> int:
    checks = run_validation(n_steps=args.n_steps, perturb=args.perturb)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {c.status:<4}  {c.detail}")
    failed = [c for c in checks if not c.ok]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driventls",
        description="Solvers for the driven, damped two-level system")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario config")
    p_run.add_argument("config", help="YAML scenario file")
    p_run.add_argument("--out", help="output directory (default: config 'out' or .)")
    p_run.set_defaults(func=_cmd_run)

    p_fig = sub.add_parser("figure", help="reproduce one figure's CSV bundle")
    p_fig.add_argument("id", help="figure id (2-9)")
    p_fig.add_argument("--out", default=".", help="output directory")
    p_fig.set_defaults(func=_cmd_figure)

    p_sweep = sub.add_parser("sweep", help="run a config across a parameter range")
    p_sweep.add_argument("config", help="YAML scenario file")
    p_sweep.add_argument("--vary", required=True, metavar="PARAM=lo:hi:n")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="run the built-in consistency suite")
    p_val.add_argument("--n-steps", type=int, default=10_000, dest="n_steps")
    p_val.add_argument("--perturb", choices=("gamma_sign",), help=argparse.SUPPRESS)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
