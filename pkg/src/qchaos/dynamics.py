"""Chaotic benchmark systems, fixed-step RK4 integration, and train/test sampling.

Systems are pure right-hand sides f(x) for autonomous ODEs dx/dt = f(x):
Lorenz, Roessler, and the cyclic Lorenz-96 lattice. Integration uses
classical fourth-order Runge-Kutta on a uniform grid; sampling snaps
requested times to that grid so every sample carries exact grid-truth
coordinates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

SYSTEM_KINDS = ("lorenz", "rossler", "lorenz96")


class IntegrationDivergedError(RuntimeError):
    """Raised when an integrated state stops being finite."""

    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"integration diverged at step {step} (t = {t:g})")


@dataclass(frozen=True)
class PhasePoint:
    """One sampled state: coordinates plus the time they were observed."""

    coords: np.ndarray
    t: float

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class SystemSpec:
    """An autonomous ODE system identified by kind plus its parameters."""

    kind: str
    params: dict
    dim: int

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        for name, value in self.params.items():
            if not np.isfinite(value):
                raise ValueError(f"parameter {name}={value} is not finite")
        if self.dim < 1:
            raise ValueError(f"system dimension must be positive, got {self.dim}")


def lorenz(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> SystemSpec:
    """Lorenz system at the classic chaotic parameters by default."""
    return SystemSpec(kind="lorenz", params={"sigma": sigma, "rho": rho, "beta": beta}, dim=3)


def rossler(a: float = 0.2, b: float = 0.2, c: float = 5.7) -> SystemSpec:
    """Roessler system at the classic chaotic parameters by default."""
    return SystemSpec(kind="rossler", params={"a": a, "b": b, "c": c}, dim=3)


def lorenz96(n: int = 8, forcing: float = 8.0) -> SystemSpec:
    """Cyclic Lorenz-96 lattice with n >= 4 sites and constant forcing."""
    if n < 4:
        raise ValueError(f"Lorenz-96 needs at least 4 sites, got {n}")
    return SystemSpec(kind="lorenz96", params={"forcing": forcing}, dim=n)


def _coords_of(state) -> np.ndarray:
    if isinstance(state, PhasePoint):
        return state.coords
    return np.asarray(state, dtype=float)


def rhs(system: SystemSpec, state) -> np.ndarray:
    """Time derivative f(x). Accepts a PhasePoint or a plain coordinate array."""
    x = _coords_of(state)
    if x.shape != (system.dim,):
        raise ValueError(f"state has shape {x.shape}, system dimension is {system.dim}")
    p = system.params
    if system.kind == "lorenz":
        return np.array(
            [
                p["sigma"] * (x[1] - x[0]),
                x[0] * (p["rho"] - x[2]) - x[1],
                x[0] * x[1] - p["beta"] * x[2],
            ]
        )
    if system.kind == "rossler":
        return np.array(
            [
                -x[1] - x[2],
                x[0] + p["a"] * x[1],
                p["b"] + x[2] * (x[0] - p["c"]),
            ]
        )
    # lorenz96: dx_i = (x_{i+1} - x_{i-2}) * x_{i-1} - x_i + F, indices cyclic
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + p["forcing"]


def rhs_jacobian(system: SystemSpec, state) -> np.ndarray:
    """Jacobian df/dx of the right-hand side at a state."""
    x = _coords_of(state)
    if x.shape != (system.dim,):
        raise ValueError(f"state has shape {x.shape}, system dimension is {system.dim}")
    p = system.params
    if system.kind == "lorenz":
        return np.array(
            [
                [-p["sigma"], p["sigma"], 0.0],
                [p["rho"] - x[2], -1.0, -x[0]],
                [x[1], x[0], -p["beta"]],
            ]
        )
    if system.kind == "rossler":
        return np.array(
            [
                [0.0, -1.0, -1.0],
                [1.0, p["a"], 0.0],
                [x[2], 0.0, x[0] - p["c"]],
            ]
        )
    n = system.dim
    jac = -np.eye(n)
    for i in range(n):
        jac[i, (i + 1) % n] += x[(i - 1) % n]
        jac[i, (i - 2) % n] += -x[(i - 1) % n]
        jac[i, (i - 1) % n] += x[(i + 1) % n] - x[(i - 2) % n]
    return jac


@dataclass(frozen=True)
class Trajectory:
    """States on a uniform time grid (the final step may be shorter to hit t_end)."""

    times: np.ndarray
    states: np.ndarray
    dt: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or states.ndim != 2 or len(times) != len(states):
            raise ValueError("times and states must be aligned 1-d / 2-d arrays")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.times)

    def point(self, index: int) -> PhasePoint:
        return PhasePoint(coords=self.states[index], t=self.times[index])


def _rk4_step(system: SystemSpec, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(system, x)
    k2 = rhs(system, x + 0.5 * dt * k1)
    k3 = rhs(system, x + 0.5 * dt * k2)
    k4 = rhs(system, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: SystemSpec, x0, dt: float, t_end: float) -> Trajectory:
    """Integrate dx/dt = f(x) from t=0 to t_end with fixed-step RK4.

    The grid is t_i = i * dt; when t_end is not a multiple of dt a final
    truncated step lands exactly on t_end.
    """
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.dim,):
        raise ValueError(f"x0 has shape {x.shape}, system dimension is {system.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    if dt <= 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if t_end < 0 or not np.isfinite(t_end):
        raise ValueError(f"t_end must be nonnegative and finite, got {t_end}")

    n_steps = int(np.floor(t_end / dt + 1e-9))
    remainder = t_end - n_steps * dt
    times = [0.0]
    states = [x]
    for i in range(n_steps):
        x = _rk4_step(system, x, dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError(step=i + 1, t=(i + 1) * dt)
        times.append((i + 1) * dt)
        states.append(x)
    if remainder > 1e-12 * max(1.0, abs(t_end)):
        x = _rk4_step(system, x, remainder)
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError(step=n_steps + 1, t=t_end)
        times.append(t_end)
        states.append(x)
    return Trajectory(times=np.array(times), states=np.array(states), dt=dt)


@dataclass(frozen=True)
class SampleSplit:
    """Train and test samples drawn from one trajectory."""

    train: tuple[PhasePoint, ...]
    test: tuple[PhasePoint, ...]
    train_interval: tuple[float, float]
    test_interval: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))

    def train_states(self) -> np.ndarray:
        return np.stack([p.coords for p in self.train])

    def test_states(self) -> np.ndarray:
        return np.stack([p.coords for p in self.test])

    def train_times(self) -> np.ndarray:
        return np.array([p.t for p in self.train])

    def test_times(self) -> np.ndarray:
        return np.array([p.t for p in self.test])


def _snap_to_grid(traj: Trajectory, t: float) -> int:
    idx = int(round(t / traj.dt))
    return min(max(idx, 0), len(traj) - 1)


def make_split(
    traj: Trajectory,
    n_train: int,
    train_end: float,
    n_test: int,
    test_end: float,
) -> SampleSplit:
    """Sample n_train points uniformly over [0, train_end] and n_test points
    uniformly over (train_end, test_end], snapping each requested time to the
    nearest grid point.

    The open left end of the test interval keeps the last train time from
    reappearing as a test sample.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one train and one test sample")
    if not 0 < train_end < test_end:
        raise ValueError(f"need 0 < train_end < test_end, got {train_end}, {test_end}")
    if test_end > traj.times[-1] + 1e-9:
        raise ValueError(f"test_end {test_end} exceeds trajectory end {traj.times[-1]}")

    train_req = np.linspace(0.0, train_end, n_train)
    test_req = np.linspace(train_end, test_end, n_test + 1)[1:]
    train = tuple(traj.point(_snap_to_grid(traj, t)) for t in train_req)
    test = tuple(traj.point(_snap_to_grid(traj, t)) for t in test_req)
    return SampleSplit(
        train=train,
        test=test,
        train_interval=(0.0, train_end),
        test_interval=(train_end, test_end),
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV with columns t, x0, x1, ... at 17 significant digits."""
    dim = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{d}" for d in range(dim)])
        for t, row in zip(traj.times, traj.states):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
