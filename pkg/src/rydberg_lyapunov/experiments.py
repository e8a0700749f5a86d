"""Scenario registry, sweep driver and on-disk output layout.

A scenario is a set of dotted-path settings (see :mod:`.settings`) plus
optional extra curves and an optional 1D/2D sweep.  ``run_scenario`` writes

``<out>/<name>/trajectory.csv``
    the base run;
``<out>/<name>/trajectory_<curve>.csv``
    one file per extra curve;
``<out>/<name>/sweep.csv``
    the reducer matrix, when the scenario has a sweep;
``<out>/<name>/manifest.json``
    resolved settings, code version and wall time.
"""

from __future__ import annotations

import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, Sequence

import numpy as np

from . import __version__
from .dynamics import (
    FeedbackRule,
    InvariantViolation,
    Trajectory,
    integrate,
    time_to_threshold,
)
from .models import (
    OpenSystem,
    build_acc_generators,
    build_effective_model,
    build_full_model,
    build_noise_generators,
    build_stirap_model,
    initial_state,
    stirap_pulses,
)
from .operators import DensityMatrix
from .settings import ConfigError, ResolvedRun, canonical_key, normalise, resolve

Resolution = Literal["full", "ci"]
CI_MAX_TF = 300.0
CI_MAX_POINTS = 8
TIME_AXIS = "t"
COOPERATIVITY_AXIS = "params.cooperativity"


# -- building and running one configuration -----------------------------------


def build_system(run: ResolvedRun) -> tuple[OpenSystem, DensityMatrix]:
    """Open system and initial state for resolved settings."""
    p = run.params
    if run.kind == "stirap":
        system = build_stirap_model(run.stirap, p.gamma, p.kappa, p.cavity_truncation)
    else:
        if run.kind == "full":
            system = build_full_model(p, include_rydberg_decay=run.rydberg_decay)
        else:
            system = build_effective_model(p)
        system = system.with_controls(build_acc_generators(p, run.mus, run.kind))
        noise = [(h, eta) for h, eta in build_noise_generators(p, run.etas, run.kind) if eta]
        system = system.with_noise(noise)
    return system, initial_state(run.initial)


def _freeze(settings: Mapping[str, Any]) -> tuple:
    return tuple(sorted(settings.items()))


@lru_cache(maxsize=16)
def _noiseless_schedule(frozen: tuple):
    settings = dict(frozen)
    run = resolve(settings)
    system, rho0 = build_system(run)
    return integrate(system, rho0, run.integrator, run.rule).schedule()


def replay_source(run: ResolvedRun) -> dict[str, Any]:
    """Settings of the noiseless run whose controls are replayed (stride 1)."""
    src = dict(run.settings)
    for j in (1, 2, 3):
        src[f"noise.eta{j}"] = 0.0
    src["integrator.record_stride"] = 1
    src["integrator.verify_state"] = False
    return src


def simulate(settings: Mapping[str, Any]) -> Trajectory:
    """Integrate one configuration.

    Noisy runs with ``noise.replay`` on take their control amplitudes from a
    noiseless run with the same settings instead of from state feedback.
    """
    run = resolve(settings)
    system, rho0 = build_system(run)
    rule = run.rule
    if any(run.etas) and run.replay and system.control_generators:
        schedule = _noiseless_schedule(_freeze(replay_source(run)))
        rule = FeedbackRule(formula=rule.formula, replay=schedule)
    return integrate(system, rho0, run.integrator, rule)


# -- sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class Axis:
    """Sweep axis over a settings path, ``params.cooperativity`` or time ``t``."""

    path: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        path = self.path if self.path in (TIME_AXIS, COOPERATIVITY_AXIS) else canonical_key(self.path)
        object.__setattr__(self, "path", path)
        if int(self.count) != self.count or self.count < 2:
            raise ConfigError(f"axis {self.path}: point count must be an integer >= 2")
        if not (math.isfinite(self.min) and math.isfinite(self.max)) or self.max < self.min:
            raise ConfigError(f"axis {self.path}: need finite min <= max")
        if path == COOPERATIVITY_AXIS and self.min <= 0:
            raise ConfigError("cooperativity axis must be positive")

    def values(self) -> np.ndarray:
        # a degenerate axis collapses to one point
        return np.unique(np.linspace(self.min, self.max, int(self.count)))


REDUCERS = ("final_fidelity", "fidelity_at", "time_to_threshold", "min_purity",
            "max_fidelity", "cooperativity")


@dataclass(frozen=True)
class SweepGrid:
    axes: tuple[Axis, ...]
    reducer: str = "final_fidelity"
    argument: float | None = None

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= 2:
            raise ConfigError("a sweep has one or two axes")
        if len({a.path for a in axes}) != len(axes):
            raise ConfigError("sweep axes must be distinct")
        if self.reducer not in REDUCERS:
            raise ConfigError(f"unknown reducer {self.reducer!r}; choose from {REDUCERS}")
        timed = any(a.path == TIME_AXIS for a in axes)
        if timed and self.reducer != "fidelity_at":
            raise ConfigError("a time axis is only meaningful with the fidelity_at reducer")
        if (self.reducer in ("fidelity_at", "time_to_threshold") and self.argument is None
                and not timed):
            raise ConfigError(f"reducer {self.reducer} needs an argument")

    def capped(self, max_points: int) -> "SweepGrid":
        axes = tuple(Axis(a.path, a.min, a.max, min(a.count, max_points)) for a in self.axes)
        return SweepGrid(axes, self.reducer, self.argument)


def apply_axis(settings: dict[str, Any], path: str, value: float) -> None:
    if path == COOPERATIVITY_AXIS:
        # gamma = kappa = g / sqrt(C)
        rate = settings.get("params.g", 1.0) / math.sqrt(value)
        settings["params.gamma"] = rate
        settings["params.kappa"] = rate
    else:
        settings[path] = value


def _reduce(traj: Trajectory, reducer: str, argument: float | None,
            times: Sequence[float] | None) -> list[float]:
    if times is not None:
        return [traj.fidelity_at(t) for t in times]
    if reducer == "final_fidelity":
        return [float(traj.fidelity[-1])]
    if reducer == "max_fidelity":
        return [float(np.max(traj.fidelity))]
    if reducer == "min_purity":
        return [float(np.min(traj.purity))]
    if reducer == "fidelity_at":
        return [traj.fidelity_at(argument)]
    hit = time_to_threshold(traj, argument)
    if hit is None:
        warnings.warn(f"threshold {argument} not reached; cell set to NaN", stacklevel=2)
        return [math.nan]
    return [hit]


def _evaluate_point(settings: dict[str, Any], reducer: str, argument: float | None,
                    times: tuple[float, ...] | None) -> list[float]:
    """Reducer value(s) for one grid point.  Top level so that workers can pickle it."""
    if reducer == "cooperativity":
        try:
            return [resolve(settings).params.cooperativity]
        except (ValueError, ZeroDivisionError) as exc:
            warnings.warn(f"cooperativity undefined ({exc}); cell set to NaN", stacklevel=2)
            return [math.nan]
    return _reduce(simulate(settings), reducer, argument, times)


@dataclass(frozen=True)
class SweepResult:
    grid: SweepGrid
    axis_values: tuple[np.ndarray, ...]
    values: np.ndarray  # shape (len(axis0),) or (len(axis0), len(axis1))

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        """Rows follow the first axis; for 2D grids columns follow the second."""
        buf = io.StringIO()
        label = _reducer_label(self.grid)
        if len(self.axis_values) == 1:
            buf.write(f"{self.grid.axes[0].path},{label}\n")
            for x, v in zip(self.axis_values[0], self.values):
                buf.write(f"{x:.12g},{v:.12g}\n")
        else:
            a0, a1 = self.grid.axes
            buf.write(f"{a0.path}|{a1.path}:{label}," +
                      ",".join(f"{y:.12g}" for y in self.axis_values[1]) + "\n")
            for x, row in zip(self.axis_values[0], self.values):
                buf.write(f"{x:.12g}," + ",".join(f"{v:.12g}" for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _reducer_label(grid: SweepGrid) -> str:
    if grid.argument is None:
        return grid.reducer
    return f"{grid.reducer}({grid.argument:g})"


def run_sweep(grid: SweepGrid, base: Mapping[str, Any], workers: int = 1) -> SweepResult:
    """Evaluate the reducer on every grid point in row-major order.

    A time axis does not spawn extra runs: each remaining grid point is
    integrated once and sampled at all requested times.
    """
    base = normalise(base)
    axis_values = tuple(a.values() for a in grid.axes)
    time_pos = next((i for i, a in enumerate(grid.axes) if a.path == TIME_AXIS), None)
    run_axes = [i for i in range(len(grid.axes)) if i != time_pos]
    times = tuple(float(t) for t in axis_values[time_pos]) if time_pos is not None else None

    jobs = []
    if run_axes:
        i = run_axes[0]
        for x in axis_values[i]:
            s = dict(base)
            apply_axis(s, grid.axes[i].path, float(x))
            jobs.append(s)
    else:
        jobs.append(dict(base))
    if times is not None:
        for s in jobs:
            s["integrator.t_f"] = max(times) if max(times) > 0 else s.get("integrator.t_f", 1.0)
    elif len(run_axes) == 2:
        first = jobs
        jobs = []
        for s0 in first:
            for y in axis_values[1]:
                s = dict(s0)
                apply_axis(s, grid.axes[1].path, float(y))
                jobs.append(s)
    # validate every point before spending time on any of them
    for s in jobs:
        if grid.reducer != "cooperativity":
            resolve(s)

    args = [(s, grid.reducer, grid.argument, times) for s in jobs]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_point, *zip(*args)))
    else:
        results = [_evaluate_point(*a) for a in args]

    flat = np.array(results, dtype=float)
    shape = tuple(len(v) for v in axis_values)
    if times is not None and time_pos == 0 and len(shape) == 2:
        values = flat.T
    else:
        values = flat.reshape(shape)
    return SweepResult(grid, axis_values, values)


# -- registry -------------------------------------------------------------------

EFFECTIVE = {"model.kind": "effective", "params.gamma": 0.1, "params.kappa": 0.0}
FULL = {"model.kind": "full", "params.gamma": 0.1, "params.kappa": 0.1}
STIRAP = {"model.kind": "stirap", "params.gamma": 0.3, "params.kappa": 0.4,
          "integrator.t_f": 200.0, "stirap.t_f": 200.0}


@dataclass(frozen=True)
class Scenario:
    """One reproducible figure panel.

    ``curves`` maps a label to settings layered on top of the base for an
    extra trajectory; ``sweep`` is evaluated by :func:`run_sweep`.
    """

    name: str
    description: str
    settings: Mapping[str, Any]
    curves: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    sweep: SweepGrid | None = None
    extras: tuple[str, ...] = ()


def _scn(name, description, *layers, curves=None, sweep=None, extras=()):
    settings: dict[str, Any] = {}
    for layer in layers:
        settings.update(layer)
    return Scenario(name, description, settings, curves or {}, sweep, extras)


_MU1 = {"controls.mu1": 0.3}
_MU3 = {"controls.mu3": 0.2}
_NO_ACC = {"controls.mu1": 0.0, "controls.mu3": 0.0}
_C25 = {"params.gamma": 0.2, "params.kappa": 0.2}
_C833 = {"params.gamma": 0.3, "params.kappa": 0.4}

_SCENARIOS: tuple[Scenario, ...] = (
    _scn("fig2a", "full model without control at C = 100, 25 and 8.33",
         FULL, {"integrator.t_f": 1500.0},
         curves={"C25": _C25, "C8.33": _C833}),
    _scn("fig2b", "STIRAP baseline at gamma = 0.3, kappa = 0.4",
         STIRAP, curves={"C100": {"params.gamma": 0.1, "params.kappa": 0.1}},
         extras=("pulses",)),
    _scn("fig2c", "full model with H1 control, mu1 = 0.3",
         FULL, _MU1, {"integrator.t_f": 1000.0},
         curves={"C25": _C25, "C8.33": _C833}),
    _scn("fig2d", "full model: F(700) against cooperativity with gamma = kappa, "
         "with and without H1 control",
         FULL, {"integrator.t_f": 700.0},
         sweep=SweepGrid((Axis(COOPERATIVITY_AXIS, 10.0, 100.0, 5),
                          Axis("controls.mu1", 0.0, 0.3, 2)),
                         "final_fidelity")),
    _scn("fig3", "STIRAP pump pulses and the resulting singlet fidelity",
         STIRAP, extras=("pulses",)),
    _scn("fig4a", "effective model, o = 1: H1 control against H3 and no control",
         EFFECTIVE, _MU1, {"integrator.t_f": 1000.0},
         curves={"H3": {"controls.mu1": 0.0, "controls.mu3": 0.2}, "none": _NO_ACC}),
    _scn("fig4b", "effective model, o = 0.02: H3 control against H1 and no control",
         EFFECTIVE, _MU3, {"initial.o": 0.02, "integrator.t_f": 1000.0},
         curves={"H1": {"controls.mu1": 0.3, "controls.mu3": 0.0}, "none": _NO_ACC}),
    _scn("fig5", "control amplitudes f1 (o = 1) and f3 (o = 0.02)",
         EFFECTIVE, _MU1, {"integrator.t_f": 1000.0},
         curves={"H3": {"controls.mu1": 0.0, "controls.mu3": 0.2, "initial.o": 0.02}}),
    _scn("fig6a", "F(500) against the initial mixing o with H1 control",
         EFFECTIVE, _MU1, {"integrator.t_f": 500.0},
         sweep=SweepGrid((Axis("initial.o", 0.0, 1.0, 11),), "fidelity_at", 500.0)),
    _scn("fig6b", "F(500) against the initial mixing o with H3 control",
         EFFECTIVE, _MU3, {"integrator.t_f": 500.0},
         sweep=SweepGrid((Axis("initial.o", 0.0, 1.0, 11),), "fidelity_at", 500.0)),
    _scn("fig7a", "F(500) over the (mu1, mu2) plane",
         EFFECTIVE, _MU1, {"integrator.t_f": 500.0},
         sweep=SweepGrid((Axis("controls.mu1", 0.0, 0.5, 11),
                          Axis("controls.mu2", 0.0, 0.5, 11)), "fidelity_at", 500.0)),
    _scn("fig7b", "F(500) over the (mu1, mu3) plane",
         EFFECTIVE, _MU1, {"integrator.t_f": 500.0},
         sweep=SweepGrid((Axis("controls.mu1", 0.0, 0.5, 11),
                          Axis("controls.mu3", 0.0, 0.5, 11)), "fidelity_at", 500.0)),
    _scn("fig8", "purity with H1 control against no control",
         EFFECTIVE, _MU1, {"integrator.t_f": 1000.0},
         curves={"none": _NO_ACC}),
    _scn("fig9a", "F over (Omega, t) with H1 control",
         EFFECTIVE, _MU1, {"integrator.t_f": 1000.0},
         sweep=SweepGrid((Axis("params.Omega", 0.01, 0.15, 15),
                          Axis(TIME_AXIS, 0.0, 1000.0, 21)), "fidelity_at")),
    _scn("fig9b", "F over (omega, t) with H1 control",
         EFFECTIVE, _MU1, {"integrator.t_f": 1000.0},
         sweep=SweepGrid((Axis("params.omega", 0.005, 0.05, 10),
                          Axis(TIME_AXIS, 0.0, 1000.0, 21)), "fidelity_at")),
    _scn("fig10a", "F(700) over amplitude-noise intensities (eta1, eta2), replayed f1",
         EFFECTIVE, _MU1, {"integrator.t_f": 700.0},
         sweep=SweepGrid((Axis("noise.eta1", -0.1, 0.1, 9),
                          Axis("noise.eta2", -0.1, 0.1, 9)), "final_fidelity")),
    _scn("fig10b", "F(700) over amplitude-noise intensities (eta1, eta3), replayed f1",
         EFFECTIVE, _MU1, {"integrator.t_f": 700.0},
         sweep=SweepGrid((Axis("noise.eta1", -0.1, 0.1, 9),
                          Axis("noise.eta3", -0.1, 0.1, 9)), "final_fidelity")),
)

REGISTRY: dict[str, Scenario] = {s.name: s for s in _SCENARIOS}


def scenario_names() -> list[str]:
    return [s.name for s in _SCENARIOS]


def get_scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {name!r}; available: {', '.join(scenario_names())}"
        ) from None


# -- scenario execution -----------------------------------------------------------


@dataclass
class ScenarioPlan:
    """Fully resolved run list for one scenario, validated before any work."""

    scenario: Scenario
    resolution: Resolution
    runs: dict[str, dict[str, Any]]  # file stem -> settings
    sweep: SweepGrid | None
    sweep_base: dict[str, Any] | None


def _cap_time(settings: dict[str, Any], resolution: Resolution) -> None:
    if resolution == "ci" and settings.get("integrator.t_f", 0.0) > CI_MAX_TF:
        settings["integrator.t_f"] = CI_MAX_TF


def plan_scenario(name: str, overrides: Mapping[str, Any] | None = None,
                  resolution: Resolution = "full",
                  mode: Literal["simulate", "sweep", "all"] = "all") -> ScenarioPlan:
    """Resolve and validate every run of a scenario; raises ConfigError early."""
    if resolution not in ("full", "ci"):
        raise ConfigError(f"resolution must be 'full' or 'ci', got {resolution!r}")
    scenario = get_scenario(name)
    user = normalise(overrides or {})
    base = normalise(scenario.settings)
    base.update(user)
    _cap_time(base, resolution)

    runs: dict[str, dict[str, Any]] = {}
    if mode in ("simulate", "all"):
        runs["trajectory"] = dict(base)
        for label, delta in scenario.curves.items():
            s = dict(base)
            s.update(normalise(delta))
            _cap_time(s, resolution)
            runs[f"trajectory_{label}"] = s
    sweep = None
    if mode in ("sweep", "all") and scenario.sweep is not None:
        sweep = scenario.sweep
        if resolution == "ci":
            sweep = sweep.capped(CI_MAX_POINTS)
        # sampling times never extend past the end of the run
        t_end = resolve(base).integrator.t_f
        sweep = SweepGrid(
            tuple(Axis(a.path, min(a.min, t_end), min(a.max, t_end), a.count)
                  if a.path == TIME_AXIS else a for a in sweep.axes),
            sweep.reducer,
            min(sweep.argument, t_end) if sweep.reducer == "fidelity_at"
            and sweep.argument is not None else sweep.argument)
    elif mode == "sweep":
        raise ConfigError(f"scenario {name!r} defines no sweep")
    for s in runs.values():
        resolve(s)
    if sweep is not None:
        for axis in sweep.axes:
            if axis.path in user:
                raise ConfigError(f"{axis.path} is a sweep axis of {name!r} and cannot be overridden")
        resolve(base)
    return ScenarioPlan(scenario, resolution, runs, sweep, dict(base) if sweep else None)


@dataclass
class ScenarioOutput:
    directory: Path
    files: list[Path]
    trajectories: dict[str, Trajectory]
    sweep: SweepResult | None
    manifest: dict[str, Any]


def _pulses_csv(settings: Mapping[str, Any], path: Path) -> None:
    run = resolve(settings)
    t = np.linspace(0.0, run.stirap.t_f, 401)
    om_a, om_b = stirap_pulses(run.stirap, t)
    with open(path, "w", newline="") as fh:
        fh.write("t,Omega_A,Omega_B\n")
        for row in zip(t, om_a, om_b):
            fh.write(",".join(f"{float(x):.12g}" for x in row) + "\n")


def _json_ready(settings: Mapping[str, Any]) -> dict[str, Any]:
    return {k: settings[k] for k in sorted(settings)}


def run_scenario(name: str, overrides: Mapping[str, Any] | None = None,
                 out_dir: str | os.PathLike = "out", resolution: Resolution = "full",
                 mode: Literal["simulate", "sweep", "all"] = "all", workers: int = 1,
                 log: Callable[[str], None] | None = None) -> ScenarioOutput:
    """Run a registered scenario and write its files under ``out_dir/name``.

    On an invariant violation the partial trajectory is written together with
    a ``FAILED`` marker and the exception is re-raised.
    """
    plan = plan_scenario(name, overrides, resolution, mode)
    directory = Path(out_dir) / name
    directory.mkdir(parents=True, exist_ok=True)
    marker = directory / "FAILED"
    if marker.exists():
        marker.unlink()
    started = time.perf_counter()
    files: list[Path] = []
    trajectories: dict[str, Trajectory] = {}
    manifest: dict[str, Any] = {
        "scenario": name,
        "description": plan.scenario.description,
        "version": __version__,
        "resolution": resolution,
        "mode": mode,
        "overrides": _json_ready(normalise(overrides or {})),
        "runs": {},
    }

    def write_manifest():
        manifest["wall_time_s"] = round(time.perf_counter() - started, 3)
        manifest["files"] = [f.name for f in files]
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    try:
        for stem, settings in plan.runs.items():
            if log:
                log(f"{name}: {stem}")
            manifest["runs"][stem] = _json_ready(resolve(settings).settings)
            try:
                traj = simulate(settings)
            except InvariantViolation as exc:
                if exc.partial is not None:
                    path = directory / f"{stem}.csv"
                    exc.partial.to_csv(path)
                    files.append(path)
                raise
            path = directory / f"{stem}.csv"
            traj.to_csv(path)
            files.append(path)
            trajectories[stem] = traj
        if "pulses" in plan.scenario.extras and plan.runs:
            path = directory / "pulses.csv"
            _pulses_csv(plan.runs["trajectory"], path)
            files.append(path)
        result = None
        if plan.sweep is not None:
            if log:
                log(f"{name}: sweep")
            grid = plan.sweep
            manifest["sweep"] = {
                "base": _json_ready(resolve(plan.sweep_base).settings),
                "axes": [[a.path, a.min, a.max, a.count] for a in grid.axes],
                "reducer": grid.reducer,
                "argument": grid.argument,
            }
            result = run_sweep(grid, plan.sweep_base, workers=workers)
            path = directory / "sweep.csv"
            result.to_csv(path)
            files.append(path)
    except InvariantViolation as exc:
        marker.write_text(f"t={exc.time:.12g}\n{exc}\n")
        manifest["failed"] = str(exc)
        write_manifest()
        raise
    write_manifest()
    files.append(directory / "manifest.json")
    return ScenarioOutput(directory, files, trajectories, result, manifest)
