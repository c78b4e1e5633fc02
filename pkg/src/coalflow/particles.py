"""n-point coalescing diffusions.

Particles advance as independent Euler-Maruyama diffusions under a shared
drift field.  When two spatially adjacent particles meet, detected by an
endpoint ordering flip or by a Brownian-bridge crossing test between the
endpoints, they merge: the lower-id particle survives, both take the
midpoint of their endpoint values at the merge step, and from then on the
absorbed particle copies the survivor bitwise and the pair consumes the
survivor's noise stream.

Every particle and every adjacent pair draws from its own keyed stream, so
replicates are order-independent and a subset of the starting points replays
the same marginal trajectories until a merge involves an excluded particle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .drift import DriftSpec
from .sde import Path, TimeGrid
from .streams import NoiseStream

__all__ = [
    "CoalescenceError",
    "CoalescenceEvent",
    "ParticleRecord",
    "ParticleSystem",
    "detect_meeting",
    "simulate_n_point",
    "meeting_time_ensemble",
    "SecondMomentEstimate",
    "SecondMomentBound",
    "second_moment_diag",
    "second_moment_table",
    "write_trajectories_csv",
    "write_events_csv",
]


class CoalescenceError(ValueError):
    """Input or logic error in the coalescing particle system."""


@dataclass(frozen=True)
class CoalescenceEvent:
    """One merge: ``absorbed_id`` stopped existing at ``time``."""

    time: float
    absorbed_id: int
    surviving_id: int


@dataclass(frozen=True)
class ParticleRecord:
    id: int
    start_position: float
    trajectory: Path
    merged_into: int | None
    merge_time: float | None


def detect_meeting(xi_prev, xi_next, xj_prev, xj_next, dt, uniform_draw):
    """Did particles i and j meet during one step of length dt?

    True when the endpoint difference changes sign (or touches zero), and
    otherwise with the Brownian-bridge crossing probability
    exp(-d_prev * d_next / dt) for the difference of two independent unit
    diffusions (difference diffusion coefficient 2), tested against
    ``uniform_draw``.  Accepts scalars or same-shape arrays.
    """
    if dt <= 0:
        raise CoalescenceError("dt must be > 0")
    d_prev = np.asarray(xi_prev, dtype=float) - np.asarray(xj_prev, dtype=float)
    d_next = np.asarray(xi_next, dtype=float) - np.asarray(xj_next, dtype=float)
    prod = d_prev * d_next
    u = np.asarray(uniform_draw, dtype=float)
    met = (prod <= 0) | (u < np.exp(-np.clip(prod, 0.0, None) / dt))
    return bool(met) if met.ndim == 0 else met


class ParticleSystem:
    """State of an n-point coalescing run on a fixed time grid.

    Positions live in a (n_steps+1, n) matrix filled row by row; merged
    particles are represented through a root pointer so blocks of coalesced
    particles stay contiguous and share one value per row.
    """

    def __init__(self, grid: TimeGrid, starts, ids=None):
        starts = np.asarray(starts, dtype=float)
        if starts.ndim != 1 or starts.size < 1:
            raise CoalescenceError("need a 1-d array of at least one start")
        if np.any(np.diff(starts) < 0):
            raise CoalescenceError("starts must be sorted non-decreasing")
        if not np.all(np.isfinite(starts)):
            raise CoalescenceError("starts must be finite")
        n = starts.size
        if ids is None:
            ids = tuple(range(n))
        else:
            ids = tuple(int(i) for i in ids)
            if len(ids) != n or len(set(ids)) != n or list(ids) != sorted(ids):
                raise CoalescenceError("ids must be strictly increasing and unique")
        self.grid = grid
        self.ids = ids
        self.n = n
        self._index = {pid: k for k, pid in enumerate(ids)}
        self._traj = np.full((grid.n_steps + 1, n), np.nan)
        self._traj[0] = starts
        self._frontier = 0
        self._root = np.arange(n)
        self.merged_into: list[int | None] = [None] * n
        self.merge_time: list[float | None] = [None] * n
        self.events: list[CoalescenceEvent] = []

    # -- queries ------------------------------------------------------------

    @property
    def starts(self) -> np.ndarray:
        return self._traj[0].copy()

    @property
    def frontier_time(self) -> float:
        return self.grid.t_start + self._frontier * self.grid.dt

    def is_live(self, pid: int) -> bool:
        return self.merged_into[self._index[pid]] is None

    def live_indices(self) -> list[int]:
        return [k for k in range(self.n) if self.merged_into[k] is None]

    def live_ids(self) -> list[int]:
        return [self.ids[k] for k in self.live_indices()]

    def positions(self, k: int | None = None) -> np.ndarray:
        """Row of positions at step index k (default: current frontier)."""
        k = self._frontier if k is None else int(k)
        if not 0 <= k <= self._frontier:
            raise CoalescenceError(f"row {k} not filled yet")
        return self._traj[k].copy()

    def trajectory_matrix(self) -> np.ndarray:
        """(n_steps+1, n) matrix of all positions; rows beyond the frontier are NaN."""
        return self._traj.copy()

    @property
    def particles(self) -> list[ParticleRecord]:
        """Per-particle records; trajectories require a completed run."""
        if self._frontier != self.grid.n_steps:
            raise CoalescenceError("run not complete: trajectory rows missing")
        return [
            ParticleRecord(
                id=self.ids[k],
                start_position=float(self._traj[0, k]),
                trajectory=Path(self.grid, self._traj[:, k]),
                merged_into=self.merged_into[k],
                merge_time=self.merge_time[k],
            )
            for k in range(self.n)
        ]

    # -- mutation -----------------------------------------------------------

    def advance_row(self, root_values: dict[int, float]) -> None:
        """Append the next row: live roots take their new value, absorbed
        particles copy their root bitwise."""
        if self._frontier >= self.grid.n_steps:
            raise CoalescenceError("grid exhausted")
        row = np.empty(self.n)
        for k in range(self.n):
            row[k] = root_values[self._root[k]]
        self._frontier += 1
        self._traj[self._frontier] = row

    def merge(self, pid_a: int, pid_b: int, time: float) -> None:
        """Merge two live adjacent particles at a grid time.

        The lower id survives; both blocks take the midpoint of the two
        current positions at that row.
        """
        if pid_a not in self._index or pid_b not in self._index:
            raise CoalescenceError(f"unknown particle id in ({pid_a}, {pid_b})")
        a, b = sorted((self._index[pid_a], self._index[pid_b]))
        if a == b:
            raise CoalescenceError("cannot merge a particle with itself")
        if self.merged_into[a] is not None or self.merged_into[b] is not None:
            raise CoalescenceError("cannot merge an absorbed particle")
        live = self.live_indices()
        if live.index(b) != live.index(a) + 1:
            raise CoalescenceError(
                f"particles {self.ids[a]} and {self.ids[b]} are not adjacent"
            )
        k = self.grid.index_of(time)
        if k != self._frontier:
            raise CoalescenceError(
                f"merge time {time} is not the current frontier row"
            )
        mid = 0.5 * (self._traj[k, a] + self._traj[k, b])
        members = (self._root == a) | (self._root == b)
        self._traj[k, members] = mid
        self._root[self._root == b] = a
        self.merged_into[b] = self.ids[a]
        self.merge_time[b] = float(time)
        self.events.append(
            CoalescenceEvent(float(time), self.ids[b], self.ids[a])
        )

    def _merge_roots_cascade(self, time: float) -> None:
        # restore strict sorting of live roots after midpoint adjustments;
        # an inversion here is itself an endpoint ordering flip
        while True:
            live = self.live_indices()
            row = self._traj[self._frontier]
            for p in range(len(live) - 1):
                if row[live[p]] > row[live[p + 1]]:
                    self.merge(self.ids[live[p]], self.ids[live[p + 1]], time)
                    break
            else:
                return


def simulate_n_point(
    drift: DriftSpec,
    starts,
    grid: TimeGrid,
    seed: int,
    replicate: int = 0,
    particle_ids=None,
) -> ParticleSystem:
    """Run one realization of the n-point coalescing motion.

    Each particle's increments come from its own stream keyed by its id;
    each adjacent pair's bridge draws come from a pair-keyed stream.  A
    subset of the starting points (with the same ids) therefore replays
    identical trajectories until a merge involves an excluded particle.
    """
    system = ParticleSystem(grid, starts, ids=particle_ids)
    dt = grid.dt
    streams = {
        k: NoiseStream(seed, replicate=replicate, particle=system.ids[k], purpose="sde")
        for k in range(system.n)
    }
    pair_streams: dict[tuple[int, int], NoiseStream] = {}

    def pair_uniform(id_a: int, id_b: int) -> float:
        key = (id_a, id_b)
        if key not in pair_streams:
            # Cantor pairing keeps the (id, id) -> stream key collision-free
            code = (id_a + id_b) * (id_a + id_b + 1) // 2 + id_b
            pair_streams[key] = NoiseStream(
                seed, replicate=replicate, particle=code, purpose="bridge"
            )
        return float(pair_streams[key].uniforms(1)[0])

    def merge_duplicates(time: float) -> None:
        while True:
            live = system.live_indices()
            row = system.positions()
            for p in range(len(live) - 1):
                if row[live[p]] == row[live[p + 1]]:
                    system.merge(system.ids[live[p]], system.ids[live[p + 1]], time)
                    break
            else:
                return

    # equal starting points coalesce before any motion
    merge_duplicates(grid.t_start)

    for k in range(grid.n_steps):
        t_next = grid.t_start + (k + 1) * dt
        live = system.live_indices()
        prev = system.positions(k)
        drift_vals = drift.eval(prev[live])
        root_values = {
            idx: prev[idx] + drift_vals[p] * dt + streams[idx].normals(1, dt)[0]
            for p, idx in enumerate(live)
        }
        system.advance_row(root_values)
        row = system.positions()

        # meeting tests on the pre-step adjacency, one uniform per pair
        flagged: list[tuple[int, int]] = []
        for p in range(len(live) - 1):
            i, j = live[p], live[p + 1]
            u = pair_uniform(system.ids[i], system.ids[j])
            if detect_meeting(prev[i], row[i], prev[j], row[j], dt, u):
                flagged.append((i, j))
        for i, j in flagged:
            # chained flags: merge the blocks the pair now belongs to
            ri = int(system._root[i])
            rj = int(system._root[j])
            if ri != rj:
                system.merge(system.ids[ri], system.ids[rj], t_next)
        system._merge_roots_cascade(t_next)

    return system


def meeting_time_ensemble(
    drift: DriftSpec,
    start_low: float,
    start_high: float,
    horizon: float,
    dt: float,
    replicates: int,
    seed: int,
    replicate_offset: int = 0,
    use_bridge: bool = True,
    batch: int = 100_000,
) -> np.ndarray:
    """Meeting times for a two-particle system, one value per replicate.

    A vectorized twin of simulate_n_point for the n=2 case: both particles
    advance by Euler-Maruyama with independent draws, and meetings are
    detected per step by sign flip plus (optionally) the bridge-crossing
    test.  Unmet replicates report inf.  ``use_bridge=False`` disables the
    sub-step test and is only meant for demonstrating the resulting bias.
    """
    if start_low >= start_high:
        raise CoalescenceError("need start_low < start_high")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise CoalescenceError("horizon must be a positive multiple of dt")
    if replicates < 1:
        raise CoalescenceError("need at least one replicate")

    times = np.full(replicates, np.inf)
    done = 0
    chunk = 0
    while done < replicates:
        m = min(batch, replicates - done)
        rep = replicate_offset + chunk
        sx = NoiseStream(seed, replicate=rep, purpose="pair-x")
        sy = NoiseStream(seed, replicate=rep, purpose="pair-y")
        su = NoiseStream(seed, replicate=rep, purpose="pair-u")
        x = np.full(m, float(start_low))
        y = np.full(m, float(start_high))
        # global replicate index of each still-alive pair in this chunk
        idx = np.arange(done, done + m)
        for k in range(n_steps):
            if idx.size == 0:
                break
            xn = x + drift.eval(x) * dt + sx.normals(idx.size, dt)
            yn = y + drift.eval(y) * dt + sy.normals(idx.size, dt)
            d0 = y - x
            d1 = yn - xn
            met = d1 <= 0
            if use_bridge:
                u = su.uniforms(idx.size)
                met |= u < np.exp(-np.clip(d0 * d1, 0.0, None) / dt)
            times[idx[met]] = (k + 1) * dt
            keep = ~met
            x, y, idx = xn[keep], yn[keep], idx[keep]
        done += m
        chunk += 1
    return times


@dataclass(frozen=True)
class SecondMomentEstimate:
    x: float
    t: float
    estimate: float
    se: float
    n: int


@dataclass(frozen=True)
class SecondMomentBound:
    """Smallest single constant covering E X^2 <= c (1 + x^2) on a grid."""

    c_hat: float
    entries: tuple[SecondMomentEstimate, ...]


def second_moment_diag(
    drift: DriftSpec,
    x: float,
    t: float,
    replicates: int,
    dt: float = 0.01,
    seed: int = 0,
) -> SecondMomentEstimate:
    """Monte Carlo estimate of E X_x(t)^2 with its standard error."""
    if t < 0:
        raise CoalescenceError("t must be >= 0")
    if t == 0.0:
        return SecondMomentEstimate(x, t, float(x) ** 2, 0.0, replicates)
    n_steps = int(round(t / dt))
    if abs(n_steps * dt - t) > 1e-9 * max(1.0, t):
        raise CoalescenceError("t must be a multiple of dt")
    from .sde import euler_ensemble

    grid = TimeGrid(0.0, dt, n_steps)
    stream = NoiseStream(seed, purpose="second-moment")
    final = euler_ensemble(drift, np.full(replicates, float(x)), grid, noise=stream)
    sq = final**2
    est = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(replicates))
    return SecondMomentEstimate(x, t, est, se, replicates)


def second_moment_table(
    drift: DriftSpec,
    xs,
    ts,
    replicates: int,
    dt: float = 0.01,
    seed: int = 0,
) -> SecondMomentBound:
    """Estimates over the (x, t) grid plus the fitted covering constant."""
    entries = []
    for i, x in enumerate(xs):
        for j, t in enumerate(ts):
            entries.append(
                second_moment_diag(
                    drift, float(x), float(t), replicates, dt=dt, seed=seed + 1000 * i + j
                )
            )
    c_hat = max((e.estimate + 2.0 * e.se) / (1.0 + e.x**2) for e in entries)
    return SecondMomentBound(c_hat=float(c_hat), entries=tuple(entries))


def write_trajectories_csv(system: ParticleSystem, path) -> None:
    """Rows (time, particle_id, position, live_flag), grid-major order."""
    times = system.grid.times()
    traj = system.trajectory_matrix()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "particle_id", "position", "live_flag"])
        for k, t in enumerate(times):
            for p in range(system.n):
                mt = system.merge_time[p]
                live = 1 if (mt is None or t < mt) else 0
                w.writerow([f"{t:.10g}", system.ids[p], repr(float(traj[k, p])), live])


def write_events_csv(system: ParticleSystem, path) -> None:
    """Rows (time, absorbed, survivor) in merge order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "absorbed", "survivor"])
        for ev in system.events:
            w.writerow([f"{ev.time:.10g}", ev.absorbed_id, ev.surviving_id])
