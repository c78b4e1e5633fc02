"""Coupled forward/backward lattice flows and fractional-step drift insertion.

The driftless two-family construction lives on a space-time lattice: forward
walks follow fair random arrows, and backward walks take the uniquely
determined arrows that cannot cross them.  Duality is exact at machine level
because a forward and a backward segment can only conflict as the two
diagonals of one lattice cell, and the backward rule forbids exactly that
configuration.

Drift enters by operator splitting on a doubled clock.  Each macro cell of
length delta spends delta of deterministic drift motion followed by delta of
lattice noise, and physical time reads the doubled clock at half speed, so a
physical interval of length delta carries both drift-time delta and noise
variance delta.  Forward families traverse the drift substep with the ODE
flow of a; backward families traverse the same substep in reversed time and
therefore feel drift -a.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analysis import wilson_interval
from .drift import DriftSpec
from .particles import meeting_time_ensemble
from .sde import Path, ode_flow_h
from .streams import NoiseStream


class DualError(ValueError):
    """Lattice range violations and malformed dual-system input."""


# ---------------------------------------------------------------------------
# arrow field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrowField:
    """Fair forward arrows on a space-time lattice, dual arrows implied.

    Sites sit at x_min + i * delta_x for i in [0, n_sites).  Row r hosts a
    forward arrow at site i when r + i is even; the backward arrow leaving
    (r + 1, i) is the negation of the forward arrow at (r, i), which is the
    unique non-crossing choice.
    """

    delta_t: float
    delta_x: float
    n_rows: int
    x_min: float
    n_sites: int
    seed: int
    replicate: int
    xi: np.ndarray  # int8 of shape (n_rows, n_sites), entries +-1

    @property
    def x_max(self) -> float:
        return self.x_min + (self.n_sites - 1) * self.delta_x

    def site_position(self, i):
        return self.x_min + np.asarray(i) * self.delta_x

    def forward_arrow(self, row: int, site: int) -> int:
        if (row + site) % 2 != 0:
            raise DualError(f"({row}, {site}) is not a forward site")
        return int(self.xi[row, site])

    def backward_arrow(self, row: int, site: int) -> int:
        if (row + site) % 2 != 1:
            raise DualError(f"({row}, {site}) is not a backward site")
        if row == 0:
            raise DualError("no backward arrow below row 0")
        return -int(self.xi[row - 1, site])


def build_arrow_field(
    t_span: float,
    x_min: float,
    x_max: float,
    delta_t: float,
    seed: int,
    replicate: int = 0,
) -> ArrowField:
    """Draw a field of i.i.d. fair forward arrows with delta_x = sqrt(delta_t)."""
    if delta_t <= 0:
        raise DualError("delta_t must be positive")
    n_rows = int(round(t_span / delta_t))
    if n_rows < 1 or abs(n_rows * delta_t - t_span) > 1e-9 * max(1.0, abs(t_span)):
        raise DualError("t_span must be a positive multiple of delta_t")
    if x_max <= x_min:
        raise DualError("x_max must exceed x_min")
    dx = math.sqrt(delta_t)
    n_sites = int(math.floor((x_max - x_min) / dx + 1e-9)) + 1
    if n_sites < 4:
        raise DualError("extent too small for the requested lattice")
    stream = NoiseStream(seed, replicate=replicate, purpose="arrows")
    bits = stream.integers(n_rows * n_sites, 0, 2).astype(np.int8)
    xi = (2 * bits - 1).reshape(n_rows, n_sites)
    return ArrowField(delta_t, dx, n_rows, float(x_min), n_sites, seed, replicate, xi)


def _snap_sites(field: ArrowField, x, row: int, family: str) -> np.ndarray:
    """Nearest site indices of the family's parity at the given row.

    Forward sites at row r have i = r (mod 2), backward sites the opposite.
    Ties round toward the lower site.  Monotone in x, so snapping cannot
    reorder an ordered family.
    """
    want = (row + (0 if family == "f" else 1)) % 2
    u = (np.asarray(x, dtype=float) - field.x_min) / field.delta_x
    base = np.floor(u).astype(np.int64)
    k0 = base - ((base - want) % 2)
    k1 = k0 + 2
    idx = np.where(u - k0 <= k1 - u, k0, k1)
    if np.any(idx < 0) or np.any(idx >= field.n_sites):
        raise DualError("start outside the lattice extent")
    return idx


def forward_walk(field: ArrowField, start_row: int, site: int, end_row: int | None = None) -> np.ndarray:
    """Site indices at rows start_row..end_row along forward arrows."""
    if end_row is None:
        end_row = field.n_rows
    if not 0 <= start_row <= end_row <= field.n_rows:
        raise DualError("row range outside the field")
    if (start_row + site) % 2 != 0:
        raise DualError(f"({start_row}, {site}) is not a forward site")
    out = np.empty(end_row - start_row + 1, dtype=np.int64)
    site = int(site)
    out[0] = site
    for k, r in enumerate(range(start_row, end_row)):
        site = site + int(field.xi[r, site])
        if not 0 <= site < field.n_sites:
            raise DualError("walk left the extent; enlarge it")
        out[k + 1] = site
    return out


def backward_walk(field: ArrowField, start_row: int, site: int, end_row: int = 0) -> np.ndarray:
    """Site indices at rows end_row..start_row (ascending) along dual arrows."""
    if not 0 <= end_row <= start_row <= field.n_rows:
        raise DualError("row range outside the field")
    if (start_row + site) % 2 != 1:
        raise DualError(f"({start_row}, {site}) is not a backward site")
    out = np.empty(start_row - end_row + 1, dtype=np.int64)
    site = int(site)
    out[-1] = site
    for k, r in enumerate(range(start_row, end_row, -1)):
        site = site - int(field.xi[r - 1, site])
        if not 0 <= site < field.n_sites:
            raise DualError("walk left the extent; enlarge it")
        out[-2 - k] = site
    return out


def crossing_count(forward_walks, backward_walks) -> int:
    """Exact count of forward/backward segment crossings.

    Each walk is a (start_row, sites) pair.  Site differences between the
    families are odd, so a crossing on a shared row interval is exactly a
    sign change of the difference.
    """
    total = 0
    for fs, f in forward_walks:
        fe = fs + len(f) - 1
        for bs, b in backward_walks:
            be = bs + len(b) - 1
            lo, hi = max(fs, bs), min(fe, be)
            if hi <= lo:
                continue
            d = f[lo - fs : hi - fs + 1].astype(np.int64) - b[lo - bs : hi - bs + 1]
            total += int(np.count_nonzero(d[:-1] * d[1:] < 0))
    return total


def lattice_meeting_rows(
    gap_sites: int,
    horizon_rows: int,
    replicates: int,
    seed: int,
    replicate: int = 0,
) -> np.ndarray:
    """Meeting row of two coalescing forward walks started gap_sites apart.

    Only the difference walk is tracked: distinct sites draw independent
    arrows, so the gap moves by -2, 0, +2 with weights 1/4, 1/2, 1/4 until
    it hits zero.  Returns -1 for pairs still apart after horizon_rows.
    """
    if gap_sites <= 0 or gap_sites % 2 != 0:
        raise DualError("gap_sites must be positive and even")
    stream = NoiseStream(seed, replicate=replicate, purpose="lattice-pair")
    gap = np.full(replicates, gap_sites, dtype=np.int64)
    met = np.full(replicates, -1, dtype=np.int64)
    idx = np.arange(replicates)
    for r in range(1, horizon_rows + 1):
        n = idx.size
        if n == 0:
            break
        bits = stream.integers(2 * n, 0, 2).reshape(2, n)
        gap = gap + 2 * (bits[0] - bits[1])
        hit = gap <= 0
        met[idx[hit]] = r
        idx, gap = idx[~hit], gap[~hit]
    return met


# ---------------------------------------------------------------------------
# fractional-step dual system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualSystem:
    """Forward family f (from time 0) and backward family g (from t_end).

    Traces are stored on a shared physical time axis with n_macro blocks of
    m + 1 indices each: the first index of a block is the post-drift snap,
    the rest are lattice rows.  Interior trace values are lattice positions;
    only f at index 0 and g at index 0 are raw continuous values.
    """

    drift: DriftSpec
    t_end: float
    delta: float
    m: int
    field: ArrowField
    times: np.ndarray
    f_values: np.ndarray  # (n_f, n_times)
    g_values: np.ndarray  # (n_g, n_times)
    f_starts: tuple
    g_starts: tuple
    f_events: tuple  # (trace_idx, absorbed, survivor) in forward travel order
    g_events: tuple  # same, travel order is descending trace index
    f_merge_idx: tuple  # first trace index equal to the survivor, None if lone
    g_merge_idx: tuple

    @property
    def n_f(self) -> int:
        return self.f_values.shape[0]

    @property
    def n_g(self) -> int:
        return self.g_values.shape[0]

    @property
    def n_macro(self) -> int:
        return (self.times.size - 1) // (self.m + 1)

    def boundary_indices(self) -> np.ndarray:
        """Trace indices of the macro-cell boundaries (uniform spacing delta)."""
        return np.concatenate(([0], (np.arange(self.n_macro) + 1) * (self.m + 1)))

    def cell_slice(self, k: int) -> slice:
        """Trace indices of cell k's lattice rows k*m .. (k+1)*m."""
        base = 1 + k * (self.m + 1)
        return slice(base, base + self.m + 1)

    def f_macro(self) -> tuple[np.ndarray, np.ndarray]:
        """Values at macro boundaries plus a mask of non-duplicated increments."""
        b = self.boundary_indices()
        vals = self.f_values[:, b]
        valid = np.ones((self.n_f, b.size - 1), dtype=bool)
        for i, mi in enumerate(self.f_merge_idx):
            if mi is not None:
                valid[i, b[1:] >= mi] = False
        return vals, valid

    def g_macro(self) -> tuple[np.ndarray, np.ndarray]:
        """Backward-time macro series: index 0 is the start at t_end."""
        b = self.boundary_indices()[::-1]
        vals = self.g_values[:, b]
        valid = np.ones((self.n_g, b.size - 1), dtype=bool)
        for i, mi in enumerate(self.g_merge_idx):
            if mi is not None:
                valid[i, b[1:] <= mi] = False
        return vals, valid


def _union_events(values: np.ndarray, travel: np.ndarray) -> tuple[list, list]:
    """Merge events plus each path's first trace index equal to its survivor.

    values is (n_paths, n_times) with paths ordered by start; travel is the
    sequence of trace indices in the family's direction of motion.  Equality
    is absorbing along travel, so adjacent-pair checks see every merge.
    """
    n_paths = values.shape[0]
    root = list(range(n_paths))

    def find(i):
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    events = []
    for t in travel:
        col = values[:, t]
        for i in range(n_paths - 1):
            if col[i] == col[i + 1]:
                ri, rj = find(i), find(i + 1)
                if ri != rj:
                    lo, hi = min(ri, rj), max(ri, rj)
                    root[hi] = lo
                    events.append((int(t), hi, lo))
    merge_idx: list[int | None] = [None] * n_paths
    for i in range(n_paths):
        r = find(i)
        if r == i:
            continue
        eq = values[i, travel] == values[r, travel]
        merge_idx[i] = int(travel[int(np.argmax(eq))])
    return events, merge_idx


def fractional_step_dual(
    drift: DriftSpec,
    forward_starts,
    backward_starts,
    n_macro: int,
    m: int,
    seed: int,
    *,
    t_end: float = 1.0,
    x_min: float = -8.0,
    x_max: float = 8.0,
    replicate: int = 0,
    h_substeps: int = 16,
) -> DualSystem:
    """Run the split-step construction for both families on one arrow field.

    Each of the n_macro cells applies the drift flow for time delta followed
    by m lattice steps of total variance delta.  The forward family snaps to
    forward-parity sites before each lattice block; the backward family
    starts at t_end, walks the same blocks in reverse along dual arrows, and
    traverses the drift substeps in reversed time (drift -a).
    """
    f0 = np.asarray(forward_starts, dtype=float)
    g0 = np.asarray(backward_starts, dtype=float)
    if f0.ndim != 1 or g0.ndim != 1 or f0.size == 0 or g0.size == 0:
        raise DualError("starts must be non-empty 1-D sequences")
    if np.any(np.diff(f0) < 0) or np.any(np.diff(g0) < 0):
        raise DualError("starts must be sorted")
    if n_macro < 1 or m < 1:
        raise DualError("n_macro and m must be at least 1")
    if t_end <= 0:
        raise DualError("t_end must be positive")
    delta = t_end / n_macro
    dt_lat = delta / m
    field = build_arrow_field(n_macro * m * dt_lat, x_min, x_max, dt_lat, seed, replicate)
    if np.any(f0 < x_min) or np.any(f0 > x_max) or np.any(g0 < x_min) or np.any(g0 > x_max):
        raise DualError("start outside the lattice extent")

    n_times = n_macro * (m + 1) + 1
    times = np.empty(n_times)
    times[0] = 0.0
    for k in range(n_macro):
        base = 1 + k * (m + 1)
        times[base] = k * delta + delta / 2
        times[base + 1 : base + m + 1] = times[base] + np.arange(1, m + 1) * (dt_lat / 2)

    # forward family
    F = np.empty((f0.size, n_times))
    F[:, 0] = f0
    pos = f0.copy()
    for k in range(n_macro):
        base = 1 + k * (m + 1)
        pos = ode_flow_h(drift, 0.0, delta, pos, substeps=h_substeps)
        site = _snap_sites(field, pos, k * m, "f")
        F[:, base] = field.site_position(site)
        for j in range(m):
            site = site + field.xi[k * m + j, site]
            if np.any(site < 0) or np.any(site >= field.n_sites):
                raise DualError("forward walk left the extent; enlarge it")
            F[:, base + 1 + j] = field.site_position(site)
        pos = F[:, base + m].copy()

    # backward family
    G = np.empty((g0.size, n_times))
    site = _snap_sites(field, g0, n_macro * m, "g")
    G[:, n_times - 1] = field.site_position(site)
    for k in range(n_macro - 1, -1, -1):
        base = 1 + k * (m + 1)
        for j in range(m - 1, -1, -1):
            site = site - field.xi[k * m + j, site]
            if np.any(site < 0) or np.any(site >= field.n_sites):
                raise DualError("backward walk left the extent; enlarge it")
            G[:, base + j] = field.site_position(site)
        pos = ode_flow_h(drift, delta, 0.0, G[:, base], substeps=h_substeps)
        if k > 0:
            site = _snap_sites(field, pos, (k - 1) * m + m, "g")
            G[:, base - 1] = field.site_position(site)
        else:
            G[:, 0] = pos

    f_events, f_merge = _union_events(F, np.arange(n_times))
    g_events, g_merge = _union_events(G, np.arange(n_times)[::-1])
    return DualSystem(
        drift=drift,
        t_end=float(t_end),
        delta=delta,
        m=m,
        field=field,
        times=times,
        f_values=F,
        g_values=G,
        f_starts=tuple(map(float, f0)),
        g_starts=tuple(map(float, g0)),
        f_events=tuple(f_events),
        g_events=tuple(g_events),
        f_merge_idx=tuple(f_merge),
        g_merge_idx=tuple(g_merge),
    )


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


def _family_audit(values: np.ndarray, travel: np.ndarray) -> tuple[int, int]:
    order_violations = int(np.count_nonzero(np.diff(values, axis=0) < 0))
    non_absorbing = 0
    for i in range(values.shape[0] - 1):
        eq = values[i, travel] == values[i + 1, travel]
        if eq.any():
            first = int(np.argmax(eq))
            non_absorbing += int(np.count_nonzero(~eq[first:]))
    return order_violations, non_absorbing


def crossing_audit(system: DualSystem) -> dict:
    """Exact non-crossing and coalescence audit of a dual system.

    crossings counts sign changes of f - g site differences inside lattice
    blocks (exactly zero by forced duality); drift_phase_flips counts strict
    sign changes across a drift substep, skipping pairs that ever sit at
    exactly equal values there.
    """
    dx = system.field.delta_x
    x0 = system.field.x_min
    crossings = 0
    pairs = []
    for k in range(system.n_macro):
        slc = system.cell_slice(k)
        fs = np.rint((system.f_values[:, slc] - x0) / dx).astype(np.int64)
        gs = np.rint((system.g_values[:, slc] - x0) / dx).astype(np.int64)
        d = fs[:, None, :] - gs[None, :, :]
        flips = (d[:, :, :-1] * d[:, :, 1:]) < 0
        c = int(np.count_nonzero(flips))
        crossings += c
        if c:
            fi, gj, seg = np.nonzero(flips)
            for a, b, s in zip(fi[:10], gj[:10], seg[:10]):
                pairs.append({"cell": k, "f": int(a), "g": int(b), "segment": int(s)})

    drift_flips = 0
    b = system.boundary_indices()
    for k in range(system.n_macro):
        left = b[k]
        right = 1 + k * (system.m + 1)
        d0 = system.f_values[:, None, left] - system.g_values[None, :, left]
        d1 = system.f_values[:, None, right] - system.g_values[None, :, right]
        drift_flips += int(np.count_nonzero((d0 * d1 < 0) & (d0 != 0) & (d1 != 0)))

    f_order, f_nonabs = _family_audit(system.f_values, np.arange(system.times.size))
    g_order, g_nonabs = _family_audit(system.g_values, np.arange(system.times.size)[::-1])
    return {
        "crossings": crossings,
        "drift_phase_flips": drift_flips,
        "f_order_violations": f_order,
        "f_non_absorbing": f_nonabs,
        "g_order_violations": g_order,
        "g_non_absorbing": g_nonabs,
        "pairs": pairs,
    }


def write_crossing_audit_json(system: DualSystem, path) -> dict:
    report = crossing_audit(system)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def write_dual_csv(system: DualSystem, path) -> None:
    """Rows (time, family, path_id, position) for both families."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "family", "path_id", "position"])
        for name, vals in (("f", system.f_values), ("g", system.g_values)):
            for pid in range(vals.shape[0]):
                for t_idx in range(system.times.size):
                    w.writerow(
                        [f"{system.times[t_idx]:.10g}", name, pid, repr(vals[pid, t_idx])]
                    )


# ---------------------------------------------------------------------------
# covariation and martingale diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariationReport:
    meeting_time: float | None
    pre_slope: float | None
    pre_se: float | None
    post_slope: float | None
    post_se: float | None
    n_pre: int
    n_post: int


def _slope_with_product_se(t: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    """LS slope of cumsum(p) against t, with the error model p i.i.d.

    The cumulative process has autocorrelated residuals, so the naive OLS
    standard error is wrong; propagate the product variance through the
    slope weights instead.
    """
    c = np.cumsum(p)
    tc = t - t.mean()
    stt = float(np.dot(tc, tc))
    slope = float(np.dot(tc, c - c.mean())) / stt
    w = tc / stt
    a = np.cumsum(w[::-1])[::-1]  # a_k = sum of weights j >= k
    se = math.sqrt(max(float(np.var(p, ddof=1)), 0.0) * float(np.dot(a, a)))
    return slope, se


def quadratic_covariation(path_a, path_b, times=None) -> CovariationReport:
    """Piecewise slope of the cumulative increment-product process.

    Accepts two Path objects on a common grid, or two value arrays with an
    explicit common times array.  Meeting is the first index after which the
    paths agree exactly; the pre and post segments are fitted separately.
    """
    if isinstance(path_a, Path) or isinstance(path_b, Path):
        if not (isinstance(path_a, Path) and isinstance(path_b, Path)):
            raise DualError("mix of Path and array input")
        ga, gb = path_a.grid, path_b.grid
        if (ga.t_start, ga.dt, ga.n_steps) != (gb.t_start, gb.dt, gb.n_steps):
            raise DualError("paths must share a grid")
        t = ga.times()
        a, b = path_a.values, path_b.values
    else:
        if times is None:
            raise DualError("array input needs an explicit times array")
        t = np.asarray(times, dtype=float)
        a = np.asarray(path_a, dtype=float)
        b = np.asarray(path_b, dtype=float)
    if not (t.shape == a.shape == b.shape) or t.ndim != 1 or t.size < 3:
        raise DualError("need equal-length 1-D inputs with at least 3 points")

    eq = a == b
    if eq[-1]:
        neq = np.nonzero(~eq)[0]
        k_meet = int(neq[-1] + 1) if neq.size else 0
    else:
        k_meet = None

    p = np.diff(a) * np.diff(b)
    n = p.size
    if k_meet is None:
        pre_n, post_n = n, 0
    else:
        pre_n, post_n = k_meet, n - k_meet

    pre_slope = pre_se = post_slope = post_se = None
    if pre_n >= 3:
        pre_slope, pre_se = _slope_with_product_se(t[1 : pre_n + 1], p[:pre_n])
    if post_n >= 3:
        post_slope, post_se = _slope_with_product_se(t[k_meet + 1 :], p[k_meet:])
    meeting_time = float(t[k_meet]) if k_meet is not None else None
    return CovariationReport(meeting_time, pre_slope, pre_se, post_slope, post_se, pre_n, post_n)


@dataclass(frozen=True)
class MartingaleReport:
    n: int
    mean_z: float
    mean_pass: bool
    var_ratio: float
    var_pass: bool
    lag1_corr: float
    lag1_pass: bool
    level: float

    @property
    def passed(self) -> bool:
        return self.mean_pass and self.var_pass and self.lag1_pass


def martingale_diagnostic(values, dt: float, drift: DriftSpec | None = None,
                          level: float = 0.01, valid=None) -> MartingaleReport:
    """Test compensated increments for mean 0, variance dt, no lag-1 memory.

    values is (n_paths, n+1) or (n+1,) sampled at spacing dt; valid masks
    usable increments (drop duplicated post-merge segments).  The drift term
    a(x) dt uses the supplied model, so feeding a wrong model is a usable
    negative control.
    """
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    if V.ndim != 2 or V.shape[1] < 2 or dt <= 0:
        raise DualError("values must be (paths, steps+1) with positive dt")
    inc = np.diff(V, axis=1)
    comp = inc if drift is None else inc - drift.eval(V[:, :-1]) * dt
    mask = np.ones_like(comp, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if mask.shape != comp.shape:
        raise DualError("valid mask must match the increment shape")
    x = comp[mask]
    n = x.size
    if n < 10:
        raise DualError("need at least 10 usable increments")
    crit = stats.norm.ppf(1 - level / 2)

    mean_z = float(x.mean() / (x.std(ddof=1) / math.sqrt(n)))
    s2 = float(x.var(ddof=1))
    chi_lo, chi_hi = stats.chi2.ppf([level / 2, 1 - level / 2], n - 1)
    var_stat = (n - 1) * s2 / dt
    pair_mask = mask[:, :-1] & mask[:, 1:]
    y0 = comp[:, :-1][pair_mask] - x.mean()
    y1 = comp[:, 1:][pair_mask] - x.mean()
    denom = math.sqrt(float(np.dot(y0, y0)) * float(np.dot(y1, y1)))
    r = float(np.dot(y0, y1)) / denom if denom > 0 else 0.0
    return MartingaleReport(
        n=n,
        mean_z=mean_z,
        mean_pass=bool(abs(mean_z) < crit),
        var_ratio=s2 / dt,
        var_pass=bool(chi_lo <= var_stat <= chi_hi),
        lag1_corr=r,
        lag1_pass=bool(abs(r) * math.sqrt(y0.size) < crit),
        level=level,
    )


@dataclass(frozen=True)
class DriftFit:
    slope: float  # recovered drift slope per unit time
    stderr: float
    intercept: float
    n: int


def drift_recovery(values, dt: float, valid=None) -> DriftFit:
    """OLS of pooled increments on positions, rescaled to drift per unit time."""
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    inc = np.diff(V, axis=1)
    pos = V[:, :-1]
    mask = np.ones_like(inc, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    x, y = pos[mask], inc[mask]
    if x.size < 10:
        raise DualError("need at least 10 usable increments")
    res = stats.linregress(x, y)
    return DriftFit(
        slope=float(res.slope) / dt,
        stderr=float(res.stderr) / dt,
        intercept=float(res.intercept),
        n=x.size,
    )


# ---------------------------------------------------------------------------
# trapping demonstration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonexistenceReport:
    merged: bool
    inconclusive: bool
    degenerate: bool
    merge_time: float | None
    merge_row: int | None
    max_interior_at_or_below_merge: int | None  # exact, expect 0
    interior_counts: dict  # probe depth (time units) -> landed-inside count
    threaded_ok: bool | None
    hugging_fraction: float | None
    wall_low_start: float
    wall_high_start: float


def nonexistence_demo(field: ArrowField, a: float, b: float) -> NonexistenceReport:
    """Trapping geometry behind the no-stationary-point argument, on the lattice.

    Backward walls from levels a < b at the top row coalesce at some earlier
    row.  A forward walk can never change the sign of its offset to a wall,
    so no forward path started at or before the wall-merge row can land
    strictly between the walls' top-row levels: the interior count there is
    exactly zero.  Shallower starts do land inside, and each such path
    threads strictly between the walls the whole way.
    """
    if a > b:
        raise DualError("need a <= b")
    R = field.n_rows
    a_s = int(_snap_sites(field, np.array([a]), R, "g")[0])
    b_s = int(_snap_sites(field, np.array([b]), R, "g")[0])
    lo_pos = float(field.site_position(a_s))
    hi_pos = float(field.site_position(b_s))
    if a_s == b_s:
        return NonexistenceReport(
            merged=True, inconclusive=False, degenerate=True,
            merge_time=0.0, merge_row=R,
            max_interior_at_or_below_merge=None, interior_counts={},
            threaded_ok=None, hugging_fraction=None,
            wall_low_start=lo_pos, wall_high_start=hi_pos,
        )
    try:
        wall_a = backward_walk(field, R, a_s)
        wall_b = backward_walk(field, R, b_s)
    except DualError:
        return NonexistenceReport(
            merged=False, inconclusive=True, degenerate=False,
            merge_time=None, merge_row=None,
            max_interior_at_or_below_merge=None, interior_counts={},
            threaded_ok=None, hugging_fraction=None,
            wall_low_start=lo_pos, wall_high_start=hi_pos,
        )
    eq = wall_a == wall_b
    if not eq.any():
        return NonexistenceReport(
            merged=False, inconclusive=True, degenerate=False,
            merge_time=None, merge_row=None,
            max_interior_at_or_below_merge=None, interior_counts={},
            threaded_ok=None, hugging_fraction=None,
            wall_low_start=lo_pos, wall_high_start=hi_pos,
        )
    r_m = int(np.nonzero(eq)[0][-1])  # walls agree on rows 0..r_m exactly
    if not eq[: r_m + 1].all():
        raise DualError("wall coalescence is not absorbing; field is corrupt")

    # landing map: M[i] = top-row site of the forward walk from (r, i), -1 if
    # it leaves the extent before the top row
    n = field.n_sites
    sites = np.arange(n)
    M = sites.copy()
    counts = np.zeros(R + 1, dtype=np.int64)
    counts[R] = 0  # top row: paths have no room to land anywhere else
    per_row_maps: dict[int, np.ndarray] = {}
    for r in range(R - 1, -1, -1):
        dest = sites + field.xi[r]
        ok = (dest >= 0) & (dest < n)
        nxt = np.full(n, -1, dtype=np.int64)
        nxt[ok] = M[dest[ok]]
        M = nxt
        valid = (sites % 2) == (r % 2)  # forward parity at this row
        landed = M[valid]
        counts[r] = int(np.count_nonzero((landed > a_s) & (landed < b_s)))
        per_row_maps[r] = M
    max_interior = int(counts[: r_m + 1].max())

    probe_rows = sorted({0, r_m // 2, r_m, min(r_m + max(1, (R - r_m) // 2), R - 1), R - 1})
    interior_counts = {float((R - r) * field.delta_t): int(counts[r]) for r in probe_rows}

    # threading: every inside-landing path from a post-merge row stays
    # strictly between the walls, checked exactly
    threaded_ok = True
    r_q = None
    for r in range(R - 1, r_m, -1):
        if counts[r] > 0:
            r_q = r
            break
    if r_q is not None:
        Mq = per_row_maps[r_q]
        for i in range(r_q % 2, n, 2):
            if a_s < Mq[i] < b_s:
                walk = forward_walk(field, r_q, i)
                seg_a = wall_a[r_q:]
                seg_b = wall_b[r_q:]
                if not (np.all(seg_a < walk) and np.all(walk < seg_b)):
                    threaded_ok = False

    # hugging: forward walks from the sites adjacent to the merged wall at
    # the deepest row; fraction of rows spent at lattice distance 1 from a wall
    base = int(wall_a[0])
    fracs = []
    for i in (base - 1, base + 1):
        if 0 <= i < n:
            try:
                walk = forward_walk(field, 0, i)
            except DualError:
                continue
            d = np.minimum(np.abs(walk - wall_a), np.abs(walk - wall_b))
            fracs.append(float(np.mean(d == 1)))
    hugging = float(np.mean(fracs)) if fracs else None

    return NonexistenceReport(
        merged=True, inconclusive=False, degenerate=False,
        merge_time=float((R - r_m) * field.delta_t), merge_row=r_m,
        max_interior_at_or_below_merge=max_interior,
        interior_counts=interior_counts,
        threaded_ok=threaded_ok, hugging_fraction=hugging,
        wall_low_start=lo_pos, wall_high_start=hi_pos,
    )


# ---------------------------------------------------------------------------
# non-meeting of the repelling pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonmeetingReport:
    horizons: tuple
    survival: tuple
    ci_low: tuple
    ci_high: tuple
    positive: bool
    plateau: bool
    replicates: int

    @property
    def passed(self) -> bool:
        return self.positive and self.plateau


def nonmeeting_check(
    drift: DriftSpec,
    u1: float,
    u2: float,
    horizons=(5.0, 10.0, 20.0),
    replicates: int = 4000,
    dt: float = 0.01,
    seed: int = 0,
    plateau_tol: float = 0.02,
) -> NonmeetingReport:
    """Survival probability of two independent diffusions with drift -a.

    For strictly monotone a the reversed drift repels, so the pair avoids
    meeting with positive probability and the survival curve plateaus; for
    zero drift the curve keeps decaying instead.
    """
    if drift.monotone_rate is None and drift.kind != "zero":
        raise DualError("drift must be strictly monotone (or zero for the null case)")
    hs = tuple(float(h) for h in horizons)
    if len(hs) < 2 or any(h2 <= h1 for h1, h2 in zip(hs, hs[1:])) or hs[0] <= 0:
        raise DualError("horizons must be increasing and positive")
    if u1 == u2:
        lo, hi = wilson_interval(0, replicates)
        z = tuple(0.0 for _ in hs)
        return NonmeetingReport(hs, z, z, tuple(hi for _ in hs), False, True, replicates)
    tau = meeting_time_ensemble(
        drift.negated(), min(u1, u2), max(u1, u2), hs[-1], dt, replicates, seed
    )
    surv, clo, chi = [], [], []
    for h in hs:
        hits = int(np.count_nonzero(tau > h))
        lo, hi = wilson_interval(hits, replicates)
        surv.append(hits / replicates)
        clo.append(lo)
        chi.append(hi)
    positive = clo[-1] > 0.0
    plateau = (surv[-2] - surv[-1]) <= plateau_tol
    return NonmeetingReport(
        hs, tuple(surv), tuple(clo), tuple(chi), bool(positive), bool(plateau), replicates
    )
