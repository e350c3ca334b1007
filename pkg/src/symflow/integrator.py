"""Fixed-step RK4 with optional constraint projection and invariant recording."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .cartan import EpsForm

__all__ = [
    "IntegrationError",
    "Trajectory",
    "InvariantDrift",
    "DriftReport",
    "rk4_step",
    "integrate",
    "drift_report",
    "sphere_projection",
]

Field = Callable[[np.ndarray], np.ndarray]
Invariant = Callable[[np.ndarray], float]


class IntegrationError(RuntimeError):
    """Raised when a step produces non-finite values or leaves the state manifold."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t = {time:.17g})")
        self.time = time


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    invariants: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise ValueError("states must be a 2-D array with one row per time")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        inv = {k: np.asarray(v, dtype=float) for k, v in self.invariants.items()}
        for name, series in inv.items():
            if series.shape != times.shape:
                raise ValueError(f"invariant {name!r} has {series.shape[0]} samples, expected {times.size}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "invariants", inv)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class InvariantDrift:
    initial: float
    max_abs_drift: float
    max_rel_drift: float


@dataclass(frozen=True)
class DriftReport:
    entries: dict[str, InvariantDrift]

    def __getitem__(self, name: str) -> InvariantDrift:
        return self.entries[name]

    def __iter__(self):
        return iter(self.entries)

    def passes(self, thresholds: Mapping[str, float], default: float | None = None) -> dict[str, bool]:
        """Per-invariant pass flags, comparing max relative drift to a threshold."""
        out = {}
        for name, d in self.entries.items():
            thr = thresholds.get(name, default)
            out[name] = True if thr is None else bool(d.max_rel_drift < thr)
        return out


def rk4_step(f: Field, state: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of the autonomous field f."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    y = np.asarray(state, dtype=float)
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationError("non-finite derivative in RK4 stage")
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _time_grid(t_end: float, dt: float) -> np.ndarray:
    # full steps k*dt, then one shortened step onto t_end if needed
    nfull = int(math.floor(t_end / dt * (1.0 + 1e-12)))
    grid = dt * np.arange(nfull + 1)
    if grid[-1] > t_end:
        grid[-1] = t_end
    if t_end - grid[-1] > 1e-12 * dt:
        grid = np.append(grid, t_end)
    else:
        grid[-1] = t_end
    return grid


def integrate(
    f: Field,
    state0: np.ndarray,
    t_end: float,
    dt: float,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    invariants: Mapping[str, Invariant] | None = None,
) -> Trajectory:
    """Integrate from t = 0 to t_end, recording every grid point.

    The last step is shortened so the grid lands exactly on t_end.  When
    ``project`` is given it is applied after each step (not to the initial
    state).
    """
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end!r}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    invariants = dict(invariants or {})
    times = _time_grid(float(t_end), float(dt))
    y = np.array(state0, dtype=float)
    states = np.empty((times.size, y.size))
    series = {name: np.empty(times.size) for name in invariants}

    def record(i: int, y: np.ndarray) -> None:
        states[i] = y
        for name, g in invariants.items():
            series[name][i] = g(y)

    record(0, y)
    for i in range(1, times.size):
        h = times[i] - times[i - 1]
        try:
            y = rk4_step(f, y, h)
            if project is not None:
                y = project(y)
        except IntegrationError as exc:
            raise IntegrationError(str(exc), float(times[i - 1])) from exc
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state", float(times[i]))
        record(i, y)
    return Trajectory(times, states, series)


def drift_report(traj: Trajectory) -> DriftReport:
    """Initial value, max |value - initial| and its relative version per invariant.

    The relative drift divides by max(1, |initial|).
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    entries = {}
    for name, series in traj.invariants.items():
        init = float(series[0])
        absd = float(np.max(np.abs(series - init)))
        entries[name] = InvariantDrift(init, absd, absd / max(1.0, abs(init)))
    return DriftReport(entries)


def sphere_projection(form: EpsForm, radius: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Projection for flat states [x, y] onto ||x||_eps = radius, (x, y)_eps = 0.

    x <- x * radius / ||x||_eps, then y <- y - ((x,y)_eps / ||x||_eps^2) x.
    Only the ||x||_eps^2 > 0 region is admissible.
    """
    d = form.dim
    sig = form.signature

    def project(v: np.ndarray) -> np.ndarray:
        x = v[:d]
        y = v[d:]
        nx2 = float(np.dot(sig * x, x))
        if not nx2 > 0:
            raise IntegrationError("state left the ||x||_eps^2 > 0 sheet")
        x = x * (radius / math.sqrt(nx2))
        y = y - (float(np.dot(sig * x, y)) / radius**2) * x
        return np.concatenate([x, y])

    return project
