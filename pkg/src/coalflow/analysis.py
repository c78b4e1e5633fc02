"""Closed-form laws, tail bounds and statistical verdict helpers.

The central objects are the zero-hitting law of the Ornstein-Uhlenbeck
difference process that governs meeting times under linear drift, the
reflection-principle tail of the Wiener minimum used by the escape bound,
and small fit/test utilities (Wilson intervals, KS, log-linear rate fits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, stats

from .drift import DriftSpec
from .streams import NoiseStream

__all__ = [
    "AnalysisError",
    "TailEstimate",
    "FitReport",
    "KSResult",
    "ou_hitting_density",
    "ou_hitting_tail",
    "ou_hitting_cdf",
    "meeting_cdf_from_density",
    "brownian_min_tail",
    "brownian_min_mc",
    "escape_probability",
    "escape_range_threshold",
    "wilson_interval",
    "ks_test",
    "exp_fit",
]


class AnalysisError(ValueError):
    """Raised for domain/parameter/input errors in analysis operations."""


@dataclass(frozen=True)
class TailEstimate:
    """A Monte Carlo probability estimate with a Wilson 95% interval."""

    p_hat: float
    n: int
    ci_low: float
    ci_high: float
    analytic_bound: float | None = None
    note: str = ""

    @property
    def resolvable(self) -> bool:
        """False when the event produced no hits (estimate is only an upper CI)."""
        return self.p_hat > 0.0


@dataclass(frozen=True)
class FitReport:
    """Result of a log-linear exponential fit p(s) ~ constant * exp(-rate s)."""

    rate: float
    constant: float
    r_squared: float
    n_points: int
    dropped: int = 0


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: int


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise AnalysisError("need n > 0 for an interval")
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    # exact endpoints at the boundary cases (center -+ half has rounding dust)
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == n else min(1.0, center + half)
    return lo, hi


# ---------------------------------------------------------------------------
# meeting-time law under linear drift
# ---------------------------------------------------------------------------

_TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)


def ou_hitting_density(rate: float, gap: float, t):
    """Density of the meeting time of two independent diffusions with drift
    slope -rate started ``gap`` apart (zero-hitting of the OU difference).

    p(t) = gap/(2 sqrt(pi)) * (2 rate / (e^{rate t} - e^{-rate t}))^{3/2}
           * exp(- rate gap^2 e^{-rate t} / (2 (e^{rate t} - e^{-rate t}))
                 + rate t / 2)

    Evaluated in log space; requires rate > 0, gap != 0, t > 0.
    """
    if rate <= 0:
        raise AnalysisError("hitting density needs a positive contraction rate")
    if gap == 0:
        raise AnalysisError("hitting density needs a nonzero gap")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise AnalysisError("hitting density is defined for t > 0 only")
    g = abs(gap)
    lt = rate * t
    # log(e^{rate t} - e^{-rate t}), stable for both small and large t
    log_diff = lt + np.log(-np.expm1(-2.0 * lt))
    # rate g^2 e^{-rate t} / (2 (e^{rate t} - e^{-rate t})) == rate g^2 / (2 expm1(2 rate t))
    with np.errstate(over="ignore"):  # expm1 -> inf at huge t gives the correct 0 term
        exponent = -rate * g * g / (2.0 * np.expm1(2.0 * lt)) + 0.5 * lt
    log_p = (
        np.log(g)
        - np.log(_TWO_SQRT_PI)
        + 1.5 * (np.log(2.0 * rate) - log_diff)
        + exponent
    )
    return np.exp(log_p)


def ou_hitting_tail(rate: float, gap: float, t: float) -> float:
    """P(meeting time > t): numerical tail integral of ou_hitting_density.

    The infinite tail is mapped to [0, 1) by s = t + u/(1-u) and integrated
    adaptively.
    """
    if t < 0:
        raise AnalysisError("tail is defined for t >= 0")
    t = float(t)

    def integrand(u):
        w = 1.0 - u
        return ou_hitting_density(rate, gap, t + u / w) / (w * w)

    val, _err = integrate.quad(
        integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=300
    )
    return min(1.0, max(0.0, val))


def ou_hitting_cdf(rate: float, gap: float, t):
    """Closed form of the meeting-time CDF, valid for any drift slope sign.

    For difference diffusion 2 and linear contraction ``rate`` (repelling
    when negative, Brownian when zero):

        F(t) = 2 Phi(- gap * sqrt(rate / (e^{2 rate t} - 1)))

    with the rate -> 0 limit 2 Phi(-gap / sqrt(2 t)).
    """
    if gap == 0:
        raise AnalysisError("meeting CDF needs a nonzero gap")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise AnalysisError("meeting CDF is defined for t >= 0")
    g = abs(gap)
    with np.errstate(divide="ignore"):
        if rate == 0.0:
            scale = np.where(t > 0, 1.0 / (2.0 * t), np.inf)
        else:
            scale = np.where(t > 0, rate / np.expm1(2.0 * rate * t), np.inf)
    return 2.0 * stats.norm.cdf(-g * np.sqrt(scale))


def meeting_cdf_from_density(rate: float, gap: float, horizon: float, n_knots: int = 800):
    """CDF callable built by integrating ou_hitting_density on [0, horizon].

    Piecewise adaptive quadrature on a log/linear knot grid with monotone
    (PCHIP) interpolation in between.  This is the density-first route; the
    closed form above is an independent cross-check, not an input.
    """
    if horizon <= 0:
        raise AnalysisError("horizon must be > 0")
    small = min(1e-4, horizon / 1000.0)
    knots = np.unique(
        np.concatenate(
            [
                [0.0],
                np.geomspace(small, horizon / 10.0, n_knots // 2),
                np.linspace(horizon / 10.0, horizon, n_knots // 2),
            ]
        )
    )
    masses = np.zeros(knots.size)
    for i in range(1, knots.size):
        masses[i], _ = integrate.quad(
            lambda s: ou_hitting_density(rate, gap, s),
            knots[i - 1],
            knots[i],
            epsabs=1e-13,
            epsrel=1e-10,
            limit=200,
        )
    cdf_vals = np.clip(np.cumsum(masses), 0.0, 1.0)
    # near-flat tail segments make PCHIP divide by subnormal slopes; the
    # result (zero slope for that segment) is correct, so mute the warning
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        interp = interpolate.PchipInterpolator(knots, cdf_vals, extrapolate=False)
    top = float(cdf_vals[-1])

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0, 0.0, np.where(t >= horizon, top, interp(np.clip(t, 0, horizon))))
        return np.clip(out, 0.0, 1.0)

    return cdf


# ---------------------------------------------------------------------------
# Wiener minimum and the escape bound
# ---------------------------------------------------------------------------


def brownian_min_tail(level: float, horizon: float) -> float:
    """P(min_{0 <= s <= horizon} W(s) <= level) = 2 Phi(level / sqrt(horizon))."""
    if level > 0:
        raise AnalysisError("level must be <= 0 for the running-minimum tail")
    if horizon <= 0:
        raise AnalysisError("horizon must be > 0")
    return float(2.0 * stats.norm.cdf(level / math.sqrt(horizon)))


def brownian_min_mc(
    level: float,
    horizon: float,
    dt: float,
    replicates: int,
    seed: int,
    batch: int = 250_000,
) -> TailEstimate:
    """MC estimate of the Wiener running-minimum tail.

    Endpoint checks plus the exact Brownian-bridge crossing probability
    exp(-2 d_prev d_next / dt) make the estimator unbiased at any dt.
    """
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9:
        raise AnalysisError("horizon must be a multiple of dt")
    hits = 0
    done = 0
    rep = 0
    while done < replicates:
        m = min(batch, replicates - done)
        stream = NoiseStream(seed, replicate=rep, purpose="wiener-min")
        x = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for _ in range(n_steps):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            xi = stream.normals(idx.size, dt)
            u = stream.uniforms(idx.size)
            xo = x[idx]
            xn = xo + xi
            d0 = xo - level
            d1 = xn - level
            cross = (d1 <= 0) | (u < np.exp(-2.0 * np.clip(d0 * d1, 0, None) / dt))
            hits += int(np.count_nonzero(cross))
            alive[idx[cross]] = False
            x[idx[~cross]] = xn[~cross]
        done += m
        rep += 1
    lo, hi = wilson_interval(hits, replicates)
    return TailEstimate(hits / replicates, replicates, lo, hi)


def escape_range_threshold(drift: DriftSpec, c: float) -> float:
    """Smallest admissible start: max(c, 2 (e^Lambda (c - x0) + x0))."""
    if drift.zero_x0 is None or drift.lipschitz <= 0:
        raise AnalysisError(
            "escape bound needs a drift with a declared zero and a positive "
            "Lipschitz constant (zero drift is degenerate here)"
        )
    lam = drift.lipschitz
    x0 = drift.zero_x0
    return max(c, 2.0 * (math.exp(lam) * (c - x0) + x0))


def escape_probability(
    drift: DriftSpec,
    c: float,
    start: float,
    replicates: int,
    dt: float = 0.01,
    seed: int = 0,
    enforce_range: bool = True,
    batch: int = 250_000,
) -> TailEstimate:
    """MC estimate of P(exists t in [0,1]: X(t) <= c) for X(0) = start.

    Compared against the analytic comparison bound
    brownian_min_tail(-start/2, (e^{2 Lambda} - 1) / (2 Lambda)), which is
    valid for start > max(c, 2 (e^Lambda (c - x0) + x0)) and c > x0; outside
    that range the bound inequality simply does not hold and the default
    guard refuses to run (enforce_range=False runs it anyway and reports).
    """
    if drift.zero_x0 is None or drift.lipschitz <= 0:
        raise AnalysisError(
            "escape bound needs a drift with a declared zero and a positive "
            "Lipschitz constant (zero drift is degenerate here)"
        )
    x0 = drift.zero_x0
    if c <= x0:
        raise AnalysisError(f"need c > x0 (got c={c}, x0={x0})")
    threshold = escape_range_threshold(drift, c)
    if enforce_range and start <= threshold:
        raise AnalysisError(
            f"start {start} <= max(c, 2(e^Lambda (c-x0)+x0)) = {threshold:.4f}; "
            "the comparison bound is only valid above this threshold "
            "(pass enforce_range=False to run outside it)"
        )
    if start <= c:
        raise AnalysisError("start must exceed the level c")

    lam = drift.lipschitz
    horizon = (math.exp(2.0 * lam) - 1.0) / (2.0 * lam)
    bound = brownian_min_tail(-start / 2.0, horizon)

    n_steps = int(round(1.0 / dt))
    hits = 0
    done = 0
    rep = 0
    while done < replicates:
        m = min(batch, replicates - done)
        stream = NoiseStream(seed, replicate=rep, purpose="escape")
        x = np.full(m, float(start))
        alive = np.ones(m, dtype=bool)
        for _ in range(n_steps):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            xi = stream.normals(idx.size, dt)
            u = stream.uniforms(idx.size)
            xo = x[idx]
            xn = xo + drift.eval(xo) * dt + xi
            d0 = xo - c
            d1 = xn - c
            cross = (d1 <= 0) | (u < np.exp(-2.0 * np.clip(d0 * d1, 0, None) / dt))
            hits += int(np.count_nonzero(cross))
            alive[idx[cross]] = False
            x[idx[~cross]] = xn[~cross]
        done += m
        rep += 1

    lo, hi = wilson_interval(hits, replicates)
    note = ""
    if hits == 0:
        note = (
            "no hits at this replicate count: consistent with the bound but "
            "unresolvable by Monte Carlo"
        )
    return TailEstimate(hits / replicates, replicates, lo, hi, analytic_bound=bound, note=note)


# ---------------------------------------------------------------------------
# statistics plumbing
# ---------------------------------------------------------------------------


def ks_test(samples, cdf) -> KSResult:
    """One-sample Kolmogorov-Smirnov test against a CDF callable."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 50:
        raise AnalysisError("KS test needs a 1-d sample of at least 50 points")
    res = stats.kstest(samples, cdf)
    return KSResult(float(res.statistic), float(res.pvalue), samples.size)


def exp_fit(s_values, p_values) -> FitReport:
    """Least-squares fit of log p against s: p ~ constant * exp(-rate s).

    Non-positive estimates are dropped; fewer than 3 surviving points is a
    fit error.
    """
    s = np.asarray(s_values, dtype=float)
    p = np.asarray(p_values, dtype=float)
    if s.shape != p.shape or s.ndim != 1:
        raise AnalysisError("exp_fit needs matching 1-d arrays")
    keep = p > 0
    dropped = int(np.count_nonzero(~keep))
    s, p = s[keep], p[keep]
    if s.size < 3:
        raise AnalysisError("exp_fit needs at least 3 positive estimates")
    y = np.log(p)
    slope, intercept = np.polyfit(s, y, 1)
    resid = y - (slope * s + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitReport(
        rate=float(-slope),
        constant=float(np.exp(intercept)),
        r_squared=r2,
        n_points=int(s.size),
        dropped=dropped,
    )
