"""One random realization of the coalescing flow over a time window.

A FlowRealization holds a trajectory forest: particles injected on a
space-time grid, advanced by Euler-Maruyama, merged on meeting.  Two-time
evaluation follows the stored forest, so the evolutionary identity
evaluate(r,t,x) = evaluate(s,t, evaluate(r,s,x)) and monotonicity in x are
exact, not approximate.  On top of evaluation sit the pullback procedure,
the stationary-point estimator (pull back from deeper and deeper past until
all probes collapse to one value), the stationarity identity check, and the
two-query disagreement estimator.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .analysis import TailEstimate, exp_fit, wilson_interval
from .drift import DriftSpec
from .sde import TimeGrid, euler_ensemble
from .streams import NoiseStream

__all__ = [
    "FlowError",
    "FlowRealization",
    "StationaryPointEstimate",
    "PullbackSequence",
    "StationarityReport",
    "FlowAudit",
    "build_flow",
    "pullback",
    "stationary_point",
    "stationarity_check",
    "disagreement_probability",
    "disagreement_decay",
    "audit_realization",
    "summary_dict",
    "write_summary_json",
    "write_forest_csv",
]

_NONE = -1  # sentinel in the int bookkeeping arrays


class FlowError(ValueError):
    """Range, resource, or input error in flow construction/evaluation."""


@dataclass(frozen=True)
class StationaryPointEstimate:
    value: float | None
    stabilization_time: float | None
    stabilized: bool
    window_used: float


@dataclass(frozen=True)
class PullbackSequence:
    times: tuple[float, ...]
    values: tuple[float, ...]
    constant_from: float | None


@dataclass(frozen=True)
class StationarityReport:
    h: float
    stabilized_at_zero: bool
    stabilized_at_h: bool
    passed: bool | None
    eta_zero: float | None
    eta_h: float | None

    @property
    def applicable(self) -> bool:
        return self.stabilized_at_zero and self.stabilized_at_h


@dataclass(frozen=True)
class FlowAudit:
    cocycle_checked: int
    cocycle_failures: int
    monotone_checked: int
    monotone_failures: int
    identity_checked: int
    identity_failures: int
    absorbing_checked: int
    absorbing_failures: int
    escaped_count: int

    @property
    def clean(self) -> bool:
        return (
            self.cocycle_failures == 0
            and self.monotone_failures == 0
            and self.identity_failures == 0
            and self.absorbing_failures == 0
        )


class FlowRealization:
    """Trajectory forest of one flow realization on [-t_back, t_fwd].

    Particle ids are injection order.  A merged particle points at its
    absorber from its merge row on, so coalesced trajectories literally
    share storage; runaway trajectories are frozen at their last in-range
    value and flagged instead of propagating.
    """

    def __init__(
        self,
        drift: DriftSpec,
        t_back: float,
        t_fwd: float,
        dt: float,
        x_min: float,
        x_max: float,
        dx: float,
        inject_every: int,
        seed: int,
        replicate: int = 0,
        live_cap: int = 10_000,
    ):
        if t_back < 0 or t_fwd < 0 or t_back + t_fwd <= 0:
            raise FlowError("window must have positive length with t_back, t_fwd >= 0")
        if dx <= 0 or x_min >= x_max:
            raise FlowError("need x_min < x_max and dx > 0")
        if inject_every < 1:
            raise FlowError("inject_every must be >= 1")
        n_steps = int(round((t_back + t_fwd) / dt))
        if abs(n_steps * dt - (t_back + t_fwd)) > 1e-9 or n_steps < 1:
            raise FlowError("window length must be a positive multiple of dt")
        self.drift = drift
        self.t_back = float(t_back)
        self.t_fwd = float(t_fwd)
        self.grid = TimeGrid(-float(t_back), float(dt), n_steps)
        self.x_min = float(x_min)
        self.x_max = float(x_max)
        self.dx = float(dx)
        self.inject_every = int(inject_every)
        self.seed = int(seed)
        self.replicate = int(replicate)
        self.live_cap = int(live_cap)
        n_slots = int(round((x_max - x_min) / dx)) + 1
        self._slots = x_min + dx * np.arange(n_slots)
        if drift.monotone_rate:
            margin = 10.0 / math.sqrt(2.0 * drift.monotone_rate)
        else:
            margin = 10.0 * math.sqrt(t_back + t_fwd)
        self.escape_low = self.x_min - margin
        self.escape_high = self.x_max + margin

        n_rows = n_steps + 1
        cap = 4 * n_slots
        self._val = np.full((cap, n_rows), np.nan)
        self._inject = np.full(cap, _NONE, dtype=np.int64)
        self._into = np.full(cap, _NONE, dtype=np.int64)
        self._mstep = np.full(cap, _NONE, dtype=np.int64)
        self._estep = np.full(cap, _NONE, dtype=np.int64)
        self._n = 0
        self.events: list[tuple[int, int, int]] = []  # (row, absorbed, survivor)
        self.live_counts: list[int] = []
        self._build()

    # -- bookkeeping views ------------------------------------------------------

    @property
    def n_particles(self) -> int:
        return self._n

    @property
    def inject_step(self) -> list[int]:
        return [int(v) for v in self._inject[: self._n]]

    @property
    def merged_into(self) -> list[int | None]:
        return [None if v == _NONE else int(v) for v in self._into[: self._n]]

    @property
    def merge_step(self) -> list[int | None]:
        return [None if v == _NONE else int(v) for v in self._mstep[: self._n]]

    @property
    def escape_step(self) -> list[int | None]:
        return [None if v == _NONE else int(v) for v in self._estep[: self._n]]

    # -- construction -----------------------------------------------------------

    def _new_particle(self, row: int, x: float) -> int:
        if self._n == self._val.shape[0]:
            grow = self._val.shape[0]
            self._val = np.vstack([self._val, np.full_like(self._val, np.nan)])
            for name in ("_inject", "_into", "_mstep", "_estep"):
                arr = getattr(self, name)
                setattr(self, name, np.concatenate([arr, np.full(grow, _NONE, dtype=np.int64)]))
        pid = self._n
        self._n += 1
        self._val[pid, row] = x
        self._inject[pid] = row
        return pid

    def _build(self) -> None:
        drift, dt = self.drift, self.grid.dt
        sde = NoiseStream(self.seed, replicate=self.replicate, purpose="flow-sde")
        bridge = NoiseStream(self.seed, replicate=self.replicate, purpose="flow-bridge")
        live: list[int] = []  # pids in ascending spatial order
        pos = np.empty(0)  # positions aligned with live

        def merge(row: int, pid_a: int, pid_b: int, i: int) -> None:
            # pair sits at slots i, i+1 of live; the lower id survives and
            # both take the midpoint of their current values
            nonlocal pos
            a, b = (pid_a, pid_b) if pid_a < pid_b else (pid_b, pid_a)
            mid = 0.5 * (self._val[pid_a, row] + self._val[pid_b, row])
            self._val[a, row] = mid
            self._val[b, row] = mid
            self._into[b] = a
            self._mstep[b] = row
            self.events.append((row, b, a))
            drop = i if live[i] == b else i + 1
            keep = i + 1 if drop == i else i
            pos[keep] = mid
            del live[drop]
            pos = np.delete(pos, drop)

        for k in range(self.grid.n_steps + 1):
            if k % self.inject_every == 0:
                if pos.size:
                    free = np.min(np.abs(self._slots[:, None] - pos[None, :]), axis=1) > self.dx / 2
                else:
                    free = np.ones(self._slots.size, dtype=bool)
                new_pids = [self._new_particle(k, x) for x in self._slots[free]]
                if new_pids:
                    all_pos = np.concatenate([pos, self._slots[free]])
                    all_pids = live + new_pids
                    order = np.argsort(all_pos, kind="stable")
                    live = [all_pids[i] for i in order]
                    pos = all_pos[order]
                if len(live) > self.live_cap:
                    raise FlowError(
                        f"live-particle count {len(live)} exceeds cap {self.live_cap}"
                    )
            self.live_counts.append(len(live))
            if k == self.grid.n_steps:
                break

            xi = sde.normals(len(live), dt)
            nxt = pos + drift.eval(pos) * dt + xi
            runaway = (nxt < self.escape_low) | (nxt > self.escape_high)
            nxt[runaway] = pos[runaway]
            self._val[np.array(live, dtype=np.int64), k + 1] = nxt
            if np.any(runaway):
                for i in np.nonzero(runaway)[0]:
                    self._estep[live[i]] = k + 1
                keep = ~runaway
                live = [p for p, m in zip(live, keep) if m]
                prev = pos[keep]
                nxt = nxt[keep]
            else:
                prev = pos
            pos = nxt

            if len(live) > 1:
                d0 = np.diff(prev)
                d1 = np.diff(pos)
                prod = d0 * d1
                u = bridge.uniforms(len(live) - 1)
                met = (prod <= 0) | (u < np.exp(-np.clip(prod, 0.0, None) / dt))
                flagged = [(live[i], live[i + 1]) for i in np.nonzero(met)[0]]
                for pa, pb in flagged:
                    ra, rb = self._root_at(pa, k + 1), self._root_at(pb, k + 1)
                    if ra != rb:
                        merge(k + 1, ra, rb, live.index(ra))
                # cascade: midpoints may leapfrog a neighbor; restore strict order
                while True:
                    bad = np.nonzero(np.diff(pos) <= 0)[0]
                    if bad.size == 0:
                        break
                    i = int(bad[0])
                    merge(k + 1, live[i], live[i + 1], i)
        self._final_live = list(live)

    # -- forest queries -----------------------------------------------------------

    def _root_at(self, pid: int, row: int) -> int:
        while self._mstep[pid] != _NONE and self._mstep[pid] <= row:
            pid = int(self._into[pid])
        return pid

    def value_at(self, pid: int, row: int) -> float:
        """Position of particle pid at grid row (follows merge pointers)."""
        if not 0 <= pid < self._n:
            raise FlowError(f"no particle {pid}")
        if row < self._inject[pid]:
            raise FlowError(f"particle {pid} not injected yet at row {row}")
        pid = self._root_at(pid, row)
        es = self._estep[pid]
        if es != _NONE and es <= row:
            return float(self._val[pid, es])
        return float(self._val[pid, row])

    def _resolved_row(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        """(root pid, position) of every particle at a row, vectorized.

        Positions of particles not yet injected at the row are NaN; callers
        filter on inject_step.
        """
        n = self._n
        parent = np.arange(n)
        applicable = (self._mstep[:n] != _NONE) & (self._mstep[:n] <= row)
        parent[applicable] = self._into[:n][applicable]
        while True:
            pp = parent[parent]
            if np.array_equal(pp, parent):
                break
            parent = pp
        vals = self._val[parent, row].copy()
        esc = self._estep[:n][parent]
        frozen = (esc != _NONE) & (esc <= row)
        if np.any(frozen):
            vals[frozen] = self._val[parent[frozen], esc[frozen]]
        return parent, vals

    def particles_at(self, row: int) -> list[int]:
        """Pids with a defined position at this row, ascending by position."""
        _, vals = self._resolved_row(row)
        pids = np.nonzero(self._inject[: self._n] <= row)[0]
        order = np.lexsort((pids, vals[pids]))
        return [int(p) for p in pids[order]]

    def snap(self, s: float, x: float) -> int:
        """Pid of the nearest occupied point at time s (ties toward lower value)."""
        row = self.grid.index_of(s)
        _, vals = self._resolved_row(row)
        pids = np.nonzero(self._inject[: self._n] <= row)[0]
        if pids.size == 0:
            raise FlowError(f"no injected points at time {s}")
        v = vals[pids]
        order = np.lexsort((pids, v, np.abs(v - x)))
        return int(pids[order[0]])

    def evaluate(self, s: float, t: float, x: float) -> float:
        """Flow map from (s, x) to time t along the stored forest."""
        ks = self.grid.index_of(s)
        kt = self.grid.index_of(t)
        if ks > kt:
            raise FlowError("need s <= t")
        pid = self.snap(s, x)
        return self.value_at(pid, kt)

    def escaped_count(self) -> int:
        return int(np.count_nonzero(self._estep[: self._n] != _NONE))


def build_flow(
    drift: DriftSpec,
    t_back: float,
    t_fwd: float,
    dt: float,
    x_min: float,
    x_max: float,
    dx: float,
    inject_every: int,
    seed: int,
    replicate: int = 0,
    live_cap: int = 10_000,
) -> FlowRealization:
    """Construct one flow realization over [-t_back, t_fwd]."""
    return FlowRealization(
        drift,
        t_back,
        t_fwd,
        dt,
        x_min,
        x_max,
        dx,
        inject_every,
        seed,
        replicate=replicate,
        live_cap=live_cap,
    )


# ---------------------------------------------------------------------------
# pullback and the stationary point
# ---------------------------------------------------------------------------


def _injection_depths(flow: FlowRealization, max_depth: float | None = None) -> list[float]:
    """Pullback depths t (time -t is an injection row) with 0 < t <= t_back."""
    depths = []
    step = flow.inject_every * flow.grid.dt
    t = step
    limit = flow.t_back if max_depth is None else min(max_depth, flow.t_back)
    while t <= limit + 1e-9:
        depths.append(round(t / flow.grid.dt) * flow.grid.dt)
        t += step
    return depths


def pullback(flow: FlowRealization, x: float, probe_times) -> PullbackSequence:
    """Evaluate psi_{-t, 0}(x) along increasing depths t.

    constant_from is the first depth after which the sequence stays constant
    bitwise (None when it keeps changing through the last depth or there is
    only one depth).
    """
    times = [float(t) for t in probe_times]
    if any(t < 0 or t > flow.t_back + 1e-12 for t in times):
        raise FlowError("probe times must lie in [0, t_back]")
    if sorted(times) != times:
        raise FlowError("probe times must be increasing")
    values = [flow.evaluate(-t, 0.0, x) for t in times]
    constant_from = None
    if len(values) >= 2 and values[-1] == values[-2]:
        i = len(values) - 1
        while i > 0 and values[i - 1] == values[i]:
            i -= 1
        constant_from = times[i]
    return PullbackSequence(tuple(times), tuple(values), constant_from)


def _probe_collapse(
    flow: FlowRealization, c: float, target_row: int, max_depth: float | None
) -> tuple[float | None, float | None, bool]:
    """Shared core of stationary_point/stationarity_check.

    For each injection depth t, gather the target-row values of all points
    occupying [-c - dx/2, c + dx/2] at time -t.  Stabilized means every
    depth from some t0 through the deepest probed depth is singleton-valued
    with one shared bitwise value, and the suffix covers at least half the
    probed window (2 t0 <= deepest depth): the estimate must survive a full
    doubling of the pullback depth, not just agree on two adjacent rows.
    Without that margin a driftless flow gets credited with spurious
    stabilizations whenever its two deepest cross-sections happen to
    coalesce, at T = 20 roughly a tenth of the time.
    """
    depths = _injection_depths(flow, max_depth)
    if not depths:
        return None, None, False
    lo, hi = -c - flow.dx / 2, c + flow.dx / 2
    _, target_vals = flow._resolved_row(target_row)
    inject = flow._inject[: flow._n]
    row_sets: list[np.ndarray] = []
    for t in depths:
        row = flow.grid.index_of(-t)
        _, vals = flow._resolved_row(row)
        mask = (inject <= row) & (vals >= lo) & (vals <= hi)
        row_sets.append(np.unique(target_vals[mask]))
    i = len(depths)
    common: np.ndarray | None = None
    while i > 0 and row_sets[i - 1].size == 1 and (
        common is None or row_sets[i - 1][0] == common
    ):
        common = row_sets[i - 1][0]
        i -= 1
    suffix_len = len(depths) - i
    if suffix_len >= 2 and common is not None and 2.0 * depths[i] <= depths[-1] + 1e-9:
        return float(common), float(depths[i]), True
    return None, None, False


def stationary_point(
    flow: FlowRealization, c: float = 5.0, max_depth: float | None = None
) -> StationaryPointEstimate:
    """Estimate the flow's stationary point by pullback collapse.

    Pull every occupied point of the probe interval [-c, c] back from depth
    t to time 0; the estimate stands once all depths from some t0 on give
    one and the same value and the window extends to at least 2 t0, so the
    candidate value has survived a doubling of the depth.  stabilized=False
    (value None) is a valid outcome, expected for drifts without a strictly
    monotone rate.
    """
    if c <= 0:
        raise FlowError("probe half-width c must be > 0")
    row0 = flow.grid.index_of(0.0)
    value, t0, ok = _probe_collapse(flow, c, row0, max_depth)
    used = flow.t_back if max_depth is None else min(max_depth, flow.t_back)
    return StationaryPointEstimate(value, t0, ok, used)


def stationarity_check(flow: FlowRealization, h: float, c: float = 5.0) -> StationarityReport:
    """Within one realization: does the flow map the time-0 stationary point
    to the time-h one?  Requires pullback stabilization at both targets."""
    if h < 0 or h > flow.t_fwd + 1e-12:
        raise FlowError("need 0 <= h <= t_fwd")
    row0 = flow.grid.index_of(0.0)
    rowh = flow.grid.index_of(h)
    eta0, _, ok0 = _probe_collapse(flow, c, row0, None)
    etah, _, okh = _probe_collapse(flow, c, rowh, None)
    if not (ok0 and okh):
        return StationarityReport(h, ok0, okh, None, eta0, etah)
    moved = flow.evaluate(0.0, h, eta0)
    return StationarityReport(h, True, True, moved == etah, eta0, etah)


# ---------------------------------------------------------------------------
# disagreement probability (two pullbacks, different depths/points)
# ---------------------------------------------------------------------------


def disagreement_probability(
    drift: DriftSpec,
    x: float,
    y: float,
    s: float,
    t: float,
    replicates: int,
    dt: float = 0.002,
    seed: int = 0,
    batch: int = 100_000,
) -> TailEstimate:
    """P(psi_{-t,0}(x) != psi_{-s,0}(y)) by Monte Carlo, t >= s >= 0.

    Uses the evolutionary identity: the x-query first flows alone from -t to
    -s, then the pair (psi_{-t,-s}(x), y) runs the coalescing two-point
    motion over the remaining s; the queries disagree exactly when that pair
    has not met by time 0.
    """
    if s < 0 or t < s:
        raise FlowError("need t >= s >= 0")
    if x == y and t == s:
        return TailEstimate(0.0, replicates, 0.0, 0.0, note="identical query")
    if s == 0:
        return TailEstimate(1.0, replicates, 1.0, 1.0, note="zero-depth query")
    n_lead = int(round((t - s) / dt))
    n_pair = int(round(s / dt))
    if abs(n_lead * dt - (t - s)) > 1e-9 or abs(n_pair * dt - s) > 1e-9:
        raise FlowError("s and t - s must be multiples of dt")
    misses = 0
    done = 0
    chunk = 0
    while done < replicates:
        m = min(batch, replicates - done)
        sx = NoiseStream(seed, replicate=chunk, purpose="lead")
        sp = NoiseStream(seed, replicate=chunk, purpose="pair-a")
        sq = NoiseStream(seed, replicate=chunk, purpose="pair-b")
        su = NoiseStream(seed, replicate=chunk, purpose="pair-u")
        if n_lead:
            lead_grid = TimeGrid(0.0, dt, n_lead)
            a = euler_ensemble(drift, np.full(m, float(x)), lead_grid, noise=sx)
        else:
            a = np.full(m, float(x))
        b = np.full(m, float(y))
        alive = np.ones(m, dtype=bool)
        for _ in range(n_pair):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            aa, bb = a[idx], b[idx]
            an = aa + drift.eval(aa) * dt + sp.normals(idx.size, dt)
            bn = bb + drift.eval(bb) * dt + sq.normals(idx.size, dt)
            prod = (aa - bb) * (an - bn)
            u = su.uniforms(idx.size)
            met = (prod <= 0) | (u < np.exp(-np.clip(prod, 0.0, None) / dt))
            alive[idx[met]] = False
            a[idx[~met]] = an[~met]
            b[idx[~met]] = bn[~met]
        misses += int(np.count_nonzero(alive))
        done += m
        chunk += 1
    lo, hi = wilson_interval(misses, replicates)
    return TailEstimate(misses / replicates, replicates, lo, hi)


def disagreement_decay(
    drift: DriftSpec,
    x: float,
    y: float,
    s_values,
    replicates: int,
    dt: float = 0.002,
    seed: int = 0,
):
    """Disagreement estimates over a depth grid (t = s) plus the fitted
    exponential decay rate of p(s)."""
    estimates = [
        disagreement_probability(drift, x, y, float(s), float(s), replicates, dt=dt, seed=seed + i)
        for i, s in enumerate(s_values)
    ]
    fit = exp_fit(np.asarray(s_values, dtype=float), np.array([e.p_hat for e in estimates]))
    return estimates, fit


# ---------------------------------------------------------------------------
# audits and exports
# ---------------------------------------------------------------------------


def audit_realization(flow: FlowRealization, n_triples: int = 40, seed: int = 0) -> FlowAudit:
    """Exact invariants of one realization, checked bitwise.

    Samples grid triples r <= s <= t and probe points for the evolutionary
    identity, checks monotonicity row against row, the equal-time identity,
    and that merged particles shadow their absorber forever.
    """
    rng = np.random.default_rng(seed)
    times = flow.grid.times()
    n_rows = times.size
    coc_n = coc_bad = 0
    xs_probe = np.linspace(flow.x_min - 1.0, flow.x_max + 1.0, 9)
    for _ in range(n_triples):
        r, s, t = np.sort(rng.integers(0, n_rows, 3))
        for x in xs_probe:
            direct = flow.evaluate(times[r], times[t], x)
            mid = flow.evaluate(times[r], times[s], x)
            chained = flow.evaluate(times[s], times[t], mid)
            coc_n += 1
            coc_bad += direct != chained
    mono_n = mono_bad = 0
    for _ in range(n_triples):
        r, t = np.sort(rng.integers(0, n_rows, 2))
        vals = [flow.evaluate(times[r], times[t], x) for x in xs_probe]
        mono_n += len(vals) - 1
        mono_bad += int(np.sum(np.diff(vals) < 0))
    id_n = id_bad = 0
    for _ in range(n_triples):
        r = int(rng.integers(0, n_rows))
        pids = flow.particles_at(r)
        p = pids[int(rng.integers(0, len(pids)))]
        xv = flow.value_at(p, r)
        id_n += 1
        id_bad += flow.evaluate(times[r], times[r], xv) != xv
    abs_n = abs_bad = 0
    merge_steps = flow.merge_step
    merged_into = flow.merged_into
    for p in range(flow.n_particles):
        if merged_into[p] is None:
            continue
        q = merged_into[p]
        for row in range(merge_steps[p], n_rows, max(1, n_rows // 8)):
            abs_n += 1
            abs_bad += flow.value_at(p, row) != flow.value_at(q, row)
    return FlowAudit(
        coc_n, int(coc_bad), mono_n, int(mono_bad), id_n, int(id_bad),
        abs_n, int(abs_bad), flow.escaped_count(),
    )


def summary_dict(flow: FlowRealization, estimate: StationaryPointEstimate | None = None) -> dict:
    """JSON-ready realization summary."""
    out = {
        "seed": flow.seed,
        "replicate": flow.replicate,
        "window": [-flow.t_back, flow.t_fwd],
        "dt": flow.grid.dt,
        "space_grid": [flow.x_min, flow.x_max, flow.dx],
        "inject_every": flow.inject_every,
        "drift": {"kind": flow.drift.kind, "params": list(flow.drift.params)},
        "n_particles": flow.n_particles,
        "n_events": len(flow.events),
        "escaped": flow.escaped_count(),
        "live_counts": list(map(int, flow.live_counts)),
    }
    if estimate is not None:
        out["stationary_point"] = {
            "value": estimate.value,
            "stabilization_time": estimate.stabilization_time,
            "stabilized": estimate.stabilized,
            "window_used": estimate.window_used,
        }
    return out


def write_summary_json(flow: FlowRealization, path, estimate=None) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(flow, estimate), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_forest_csv(flow: FlowRealization, path) -> None:
    """Rows (time, particle_id, position, live_flag) for every injected row."""
    times = flow.grid.times()
    merge_steps = flow.merge_step
    escape_steps = flow.escape_step
    inject_steps = flow.inject_step
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "particle_id", "position", "live_flag"])
        for k, t in enumerate(times):
            for p in range(flow.n_particles):
                if inject_steps[p] > k:
                    continue
                ms = merge_steps[p]
                es = escape_steps[p]
                live = 1 if (ms is None or k < ms) and (es is None or k < es) else 0
                w.writerow([f"{t:.10g}", p, repr(flow.value_at(p, k)), live])
