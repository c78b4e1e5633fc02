"""Time grids, paths and the basic integrators.

Euler-Maruyama for SDE paths (X_{k+1} = X_k + a(X_k) dt + xi_k with
xi_k ~ N(0, dt)), classical RK4 for the deterministic flow of du/dt = a(u),
and the exact transition step for linear drift (Ornstein-Uhlenbeck).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import DriftSpec
from .streams import NoiseStream

__all__ = [
    "TimeGrid",
    "Path",
    "gaussian_increments",
    "integrate_sde",
    "euler_ensemble",
    "ode_flow_h",
    "ou_exact_step",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = t_start + k * dt, k = 0..n_steps."""

    t_start: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * self.n_steps

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time t; raises if t is off-grid or out of range."""
        k = (t - self.t_start) / self.dt
        ki = int(round(k))
        if abs(k - ki) > tol * max(1.0, abs(k)):
            raise ValueError(f"time {t} is not on the grid (dt={self.dt})")
        if not 0 <= ki <= self.n_steps:
            raise ValueError(f"time {t} outside [{self.t_start}, {self.t_end}]")
        return ki


@dataclass(frozen=True)
class Path:
    """Values sampled on a TimeGrid; finite everywhere."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError(
                f"path has {v.shape[0]} values for {self.grid.n_steps + 1} grid points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path contains non-finite values")

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])


def gaussian_increments(noise: NoiseStream, n: int, variance: float) -> np.ndarray:
    """n i.i.d. N(0, variance) increments from the given stream."""
    return noise.normals(n, variance)


def euler_ensemble(
    drift: DriftSpec,
    x0,
    grid: TimeGrid,
    noise: NoiseStream | None = None,
    increments: np.ndarray | None = None,
    keep_path: bool = False,
):
    """Euler-Maruyama for a batch of independent paths sharing a grid.

    x0: scalar or 1-d array of starting points.  Increments are drawn from
    ``noise`` one time-slice at a time (shape (n_paths,) per step) unless an
    explicit (n_steps, n_paths) matrix is supplied.  Returns the final
    values, or the full (n_steps+1, n_paths) array when keep_path is set.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n_paths = x0.shape[0]
    dt = grid.dt
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (grid.n_steps, n_paths):
            raise ValueError("increments must have shape (n_steps, n_paths)")
    elif noise is None:
        raise ValueError("need a noise stream or an increment matrix")

    x = x0.copy()
    out = None
    if keep_path:
        out = np.empty((grid.n_steps + 1, n_paths))
        out[0] = x
    for k in range(grid.n_steps):
        if increments is not None:
            xi = increments[k]
        else:
            xi = noise.normals(n_paths, dt)
        x = x + drift.eval(x) * dt + xi
        if keep_path:
            out[k + 1] = x
    return out if keep_path else x


def integrate_sde(
    drift: DriftSpec, x0: float, grid: TimeGrid, noise: NoiseStream
) -> Path:
    """One Euler-Maruyama path from x0 with increments from ``noise``."""
    xi = gaussian_increments(noise, grid.n_steps, grid.dt)
    values = euler_ensemble(
        drift, [x0], grid, increments=xi[:, None], keep_path=True
    )[:, 0]
    return Path(grid, values)


def ode_flow_h(drift: DriftSpec, s: float, t: float, u, substeps: int = 16):
    """Deterministic flow h(s, t, u) of du/dr = a(u) from time s to t.

    Classical RK4 with ``substeps`` fixed steps.  h(s, s, u) == u exactly.
    t < s integrates backward (the flow of -a over |t - s|).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = np.asarray(u, dtype=float)
    span = t - s
    if span == 0.0:
        return u + 0.0
    h = span / substeps
    y = u + 0.0
    for _ in range(substeps):
        k1 = drift.eval(y)
        k2 = drift.eval(y + 0.5 * h * k1)
        k3 = drift.eval(y + 0.5 * h * k2)
        k4 = drift.eval(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def ou_exact_step(rate: float, z, dt: float, xi) -> np.ndarray:
    """Exact transition of dZ = -rate * Z dt + dW over dt.

    z -> z e^{-rate dt} + sqrt((1 - e^{-2 rate dt}) / (2 rate)) * xi with
    xi ~ N(0,1).  rate = 0 degenerates to the Brownian step z + sqrt(dt) xi.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if rate == 0.0:
        return z + np.sqrt(dt) * xi
    decay = np.exp(-rate * dt)
    sd = np.sqrt((1.0 - np.exp(-2.0 * rate * dt)) / (2.0 * rate))
    return z * decay + sd * xi
