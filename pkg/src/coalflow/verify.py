"""Nine-point acceptance suite with machine-readable verdicts.

Each criterion function runs one numbered check at its pinned scale and
returns a Verdict.  run_suite drives any subset.  Quick mode shrinks the
Monte Carlo scales so the whole suite finishes in well under a minute per
criterion; because the shrunken runs cannot support the stated statistical
power, quick-mode outcomes of the statistical criteria are reported as
"underpowered" whether they met the band or missed it narrowly.  A decisive
violation is never hidden: exact sub-checks (crossing counts, invariant
audits) and failures that reduced-scale confidence intervals already settle
(an escape estimate whose CI clears its bound, a meeting-time law rejected
in every run) stay "fail" at any scale.

Timing is deliberately kept out of Verdict.to_json so that verdict files are
byte-reproducible under a fixed seed; wall-clock numbers travel only in the
run manifest.

The only fault hook is fault="no-bridge": criterion 2 then simulates meeting
times without the bridge crossing test, a documented negative control that
must make the law check fail decisively.
"""

from __future__ import annotations

import filecmp
import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .analysis import (
    escape_probability,
    escape_range_threshold,
    exp_fit,
    ks_test,
    meeting_cdf_from_density,
    ou_hitting_density,
)
from .drift import linear_drift, linsin_drift, zero_drift
from .dual import (
    crossing_audit,
    drift_recovery,
    fractional_step_dual,
    nonmeeting_check,
    quadratic_covariation,
)
from .flow import (
    audit_realization,
    build_flow,
    disagreement_probability,
    stationarity_check,
    stationary_point,
)
from .particles import meeting_time_ensemble
from .sde import TimeGrid, euler_ensemble
from .streams import NoiseStream

STATISTICAL = frozenset({2, 3, 4, 5, 6, 7})
FAULTS = ("no-bridge",)


class VerifyError(ValueError):
    pass


@dataclass
class Verdict:
    number: int
    name: str
    status: str  # "pass" | "fail" | "underpowered"
    measured: dict
    detail: str
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    @property
    def line(self) -> str:
        return f"{self.status.upper():<12s} criterion {self.number}  {self.name}: {self.detail}"

    def to_json(self) -> dict:
        # no timing here: verdict files must be byte-stable under a fixed seed
        return {
            "number": self.number,
            "name": self.name,
            "status": self.status,
            "measured": self.measured,
            "detail": self.detail,
        }


def _f(x) -> float:
    return float(x)


def _status(ok: bool, quick: bool, decisive_fail: bool = False) -> str:
    """Quick runs of statistical criteria cannot certify a pass and should
    not fail on sampling noise either; only decisive evidence fails them."""
    if ok:
        return "underpowered" if quick else "pass"
    if quick and not decisive_fail:
        return "underpowered"
    return "fail"


# ---------------------------------------------------------------------------
# criterion 1: first-passage density normalization
# ---------------------------------------------------------------------------


def criterion_1(seed: int = 0, quick: bool = False, fault: str | None = None) -> Verdict:
    """The meeting-time density integrates to 1 over a rate/gap grid."""
    rows = []
    worst = 0.0
    for rate in (0.5, 1.0, 2.0):
        for gap in (0.5, 1.0, 2.0):
            mass, _ = integrate.quad(
                lambda t: ou_hitting_density(rate, gap, t),
                0.0,
                np.inf,
                epsabs=1e-12,
                epsrel=1e-10,
                limit=400,
            )
            rows.append({"rate": rate, "gap": gap, "mass": _f(mass)})
            worst = max(worst, abs(mass - 1.0))
    ok = worst <= 1e-6
    return Verdict(
        1,
        "density normalization",
        "pass" if ok else "fail",
        {"grid": rows, "worst_abs_error": _f(worst), "tolerance": 1e-6},
        f"max |integral - 1| = {worst:.2e} over 9 (rate, gap) pairs (tol 1e-06)",
    )


# ---------------------------------------------------------------------------
# criterion 2: meeting-time law under drift -x
# ---------------------------------------------------------------------------


def criterion_2(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    runs: int | None = None,
    replicates: int | None = None,
) -> Verdict:
    """KS of simulated meeting times against the density-derived law."""
    runs = runs if runs is not None else (4 if quick else 20)
    replicates = replicates if replicates is not None else (10_000 if quick else 100_000)
    dt = 1e-3
    horizon = 8.0
    use_bridge = fault != "no-bridge"
    cdf = meeting_cdf_from_density(1.0, 1.0, horizon)
    top = float(cdf(horizon))
    pvalues = []
    passes = 0
    for r in range(runs):
        tau = meeting_time_ensemble(
            linear_drift(-1.0),
            0.0,
            1.0,
            horizon,
            dt,
            replicates,
            seed=seed,
            replicate_offset=r * replicates,
            use_bridge=use_bridge,
        )
        met = tau[np.isfinite(tau)]
        res = ks_test(met, lambda t: cdf(t) / top)
        pvalues.append(_f(res.pvalue))
        passes += res.pvalue >= 0.01
    frac = passes / runs
    ok = frac >= 0.95
    status = _status(ok, quick, decisive_fail=(frac == 0.0))
    return Verdict(
        2,
        "meeting-time law",
        status,
        {
            "runs": runs,
            "replicates_per_run": replicates,
            "dt": dt,
            "bridge_correction": use_bridge,
            "ks_level": 0.01,
            "pass_fraction": _f(frac),
            "required_fraction": 0.95,
            "pvalues": pvalues,
        },
        f"KS at level 0.01 passed in {passes}/{runs} runs "
        f"(need >= 95%), bridge={'on' if use_bridge else 'OFF'}",
    )


# ---------------------------------------------------------------------------
# criterion 3: exponential decay of the disagreement probability
# ---------------------------------------------------------------------------


def criterion_3(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    replicates: int | None = None,
) -> Verdict:
    """P(two pullback queries disagree) decays at the drift's monotone rate."""
    replicates = replicates if replicates is not None else (2_500 if quick else 10_000)
    s_values = (1.0, 2.0, 3.0, 4.0) if quick else (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    drift = linear_drift(-1.0)
    estimates = []
    for i, s in enumerate(s_values):
        est = disagreement_probability(
            drift, 1.0, -1.0, s, s + 1.0, replicates, dt=0.002, seed=seed + i
        )
        estimates.append(est)
    fit = exp_fit(np.array(s_values), np.array([e.p_hat for e in estimates]))
    ok = bool(0.8 <= fit.rate <= 1.2 and fit.r_squared >= 0.95)
    status = _status(ok, quick)
    return Verdict(
        3,
        "disagreement decay rate",
        status,
        {
            "s_values": list(s_values),
            "replicates_per_point": replicates,
            "p_hat": [_f(e.p_hat) for e in estimates],
            "fitted_rate": _f(fit.rate),
            "rate_band": [0.8, 1.2],
            "r_squared": _f(fit.r_squared),
            "r_squared_min": 0.95,
        },
        f"fitted rate {fit.rate:.3f} in [0.8, 1.2], R^2 = {fit.r_squared:.4f} >= 0.95",
    )


# ---------------------------------------------------------------------------
# criterion 4: pullback stationary point under drift -x
# ---------------------------------------------------------------------------


def criterion_4(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    realizations: int | None = None,
) -> Verdict:
    """Stabilization, the stationarity identity, probe independence, and the
    stationary law's first two moments over an ensemble of realizations."""
    n = realizations if realizations is not None else (40 if quick else 1000)
    drift = linear_drift(-1.0)
    t_back = 20.0
    stabilized = 0
    identity_ok = 0
    unique_ok = 0
    values = []
    for r in range(n):
        fl = build_flow(drift, t_back, 1.0, 0.025, -5.0, 5.0, 0.25, 20, seed=seed, replicate=r)
        est = stationary_point(fl, c=5.0)
        if not est.stabilized:
            continue
        stabilized += 1
        values.append(est.value)
        rep = stationarity_check(fl, 1.0, c=5.0)
        if rep.passed:
            identity_ok += 1
        deep0 = fl.evaluate(-t_back, 0.0, 0.0)
        deep3 = fl.evaluate(-t_back, 0.0, 3.0)
        if deep0 == deep3 == est.value:
            unique_ok += 1
    frac = stabilized / n
    vals = np.array(values)
    mean = _f(vals.mean()) if stabilized else math.nan
    var = _f(vals.var(ddof=1)) if stabilized > 1 else math.nan
    se_mean = math.sqrt(0.5 / max(stabilized, 1))
    se_var = 0.5 * math.sqrt(2.0 / max(stabilized - 1, 1))
    ident_frac = identity_ok / max(stabilized, 1)
    checks = {
        "stabilized_fraction": bool(frac >= 0.99),
        "identity_fraction": bool(ident_frac >= 0.99),
        "probe_uniqueness": bool(unique_ok == stabilized),
        "mean": bool(abs(mean) <= 4 * se_mean),
        "variance": bool(abs(var - 0.5) <= 4 * se_var),
    }
    ok = all(checks.values())
    status = _status(ok, quick, decisive_fail=(frac < 0.9))
    return Verdict(
        4,
        "pullback stationary point",
        status,
        {
            "realizations": n,
            "window": t_back,
            "stabilized_fraction": _f(frac),
            "identity_fraction": _f(ident_frac),
            "unique_of_stabilized": [unique_ok, stabilized],
            "eta_mean": mean,
            "eta_mean_band": _f(4 * se_mean),
            "eta_variance": var,
            "eta_variance_target": 0.5,
            "eta_variance_band": _f(4 * se_var),
            "checks": checks,
        },
        f"stabilized {frac:.3f}, identity {ident_frac:.3f}, probes 0/3 bitwise equal "
        f"{unique_ok}/{stabilized}, mean {mean:.4f} (band {4 * se_mean:.4f}), "
        f"var {var:.4f} vs 0.5 (band {4 * se_var:.4f})",
    )


# ---------------------------------------------------------------------------
# criterion 5: no stationary point without drift
# ---------------------------------------------------------------------------


def criterion_5(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    replicates: int | None = None,
    flows: int | None = None,
) -> Verdict:
    """Pullback variance grows like t and nothing stabilizes at T=20."""
    replicates = replicates if replicates is not None else (5_000 if quick else 100_000)
    flows = flows if flows is not None else (15 if quick else 100)
    drift = zero_drift()
    var_rows = []
    var_ok = True
    for t in (1.0, 4.0, 16.0):
        grid = TimeGrid(-t, 0.025, int(round(t / 0.025)))
        noise = NoiseStream(seed, purpose=f"c5-var-{int(t)}")
        ends = euler_ensemble(drift, np.zeros(replicates), grid, noise=noise)
        v = _f(np.var(ends, ddof=1))
        var_rows.append({"t": t, "variance": v, "relative_error": _f(abs(v - t) / t)})
        var_ok = var_ok and abs(v - t) <= 0.10 * t
    stab = 0
    for r in range(flows):
        fl = build_flow(drift, 20.0, 1.0, 0.025, -5.0, 5.0, 0.25, 20, seed=seed, replicate=r)
        if stationary_point(fl, c=5.0).stabilized:
            stab += 1
    stab_frac = stab / flows
    ok = var_ok and stab_frac <= 0.01
    decisive = stab_frac > 0.2 or any(r["relative_error"] > 0.5 for r in var_rows)
    status = _status(ok, quick, decisive_fail=decisive)
    return Verdict(
        5,
        "driftless non-existence",
        status,
        {
            "replicates": replicates,
            "variance_rows": var_rows,
            "variance_tolerance": 0.10,
            "flow_realizations": flows,
            "stabilized_fraction": _f(stab_frac),
            "stabilized_max": 0.01,
        },
        "var errors "
        + str([round(r["relative_error"], 4) for r in var_rows])
        + f" (tol 0.10), stabilized {stab}/{flows} at T=20 (max 1%)",
    )


# ---------------------------------------------------------------------------
# criterion 6: dual construction
# ---------------------------------------------------------------------------


def criterion_6(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    recovery_replicates: int | None = None,
    nonmeeting_replicates: int | None = None,
) -> Verdict:
    """Exact non-crossing, covariation slopes, backward drift recovery, and
    the repelling dual pair's positive meeting-free probability."""
    rec_reps = recovery_replicates if recovery_replicates is not None else (12 if quick else 40)
    non_reps = nonmeeting_replicates if nonmeeting_replicates is not None else (
        1_000 if quick else 4_000
    )
    drift = linear_drift(-1.0)

    crossings = 0
    n_systems = 2 if quick else 5
    for r in range(n_systems):
        sy = fractional_step_dual(
            drift,
            np.linspace(-2, 2, 21),
            np.linspace(-1.5, 1.5, 11),
            25,
            50,
            seed=seed,
            replicate=r,
            t_end=1.0,
            x_min=-8,
            x_max=8,
        )
        crossings += crossing_audit(sy)["crossings"]
    sz = fractional_step_dual(
        zero_drift(), np.linspace(-1, 1, 9), [0.0], 25, 50, seed=seed,
        t_end=1.0, x_min=-8, x_max=8,
    )
    crossings += crossing_audit(sz)["crossings"]

    wide = fractional_step_dual(
        drift, [-3.0, 3.0], [0.0], 25, 50, seed=seed, replicate=100,
        t_end=1.0, x_min=-9, x_max=9,
    )
    pre = quadratic_covariation(wide.f_values[0], wide.f_values[1], times=wide.times)
    near = fractional_step_dual(
        drift, [-0.06, 0.06], [0.0], 25, 50, seed=seed, replicate=101,
        t_end=1.0, x_min=-9, x_max=9,
    )
    post = quadratic_covariation(near.f_values[0], near.f_values[1], times=near.times)

    gv, gm = [], []
    for r in range(rec_reps):
        sy = fractional_step_dual(
            drift,
            np.linspace(-2.8, 2.8, 8),
            np.linspace(-1.5, 1.5, 9),
            25,
            50,
            seed=seed + 1,
            replicate=r,
            t_end=1.0,
            x_min=-9,
            x_max=9,
        )
        v, m = sy.g_macro()
        gv.append(v)
        gm.append(m)
    rec = drift_recovery(np.vstack(gv), wide.delta, valid=np.vstack(gm))

    non = nonmeeting_check(drift, -1.0, 1.0, horizons=(5.0, 10.0, 20.0),
                           replicates=non_reps, seed=seed)

    checks = {
        "crossings_zero": bool(crossings == 0),
        "pre_slope": bool(pre.n_pre >= 1000 and abs(pre.pre_slope) <= 4 * pre.pre_se),
        "post_slope": bool(post.n_post >= 1000 and abs(post.post_slope - 1.0) <= 0.05),
        "backward_recovery": bool(abs(rec.slope - 1.0) <= 0.10),
        "nonmeeting": bool(non.passed),
    }
    ok = all(checks.values())
    status = _status(ok, quick, decisive_fail=(crossings != 0))
    return Verdict(
        6,
        "dual construction",
        status,
        {
            "crossings": int(crossings),
            "pre_slope": _f(pre.pre_slope),
            "pre_se": _f(pre.pre_se),
            "n_pre": pre.n_pre,
            "post_slope": _f(post.post_slope),
            "n_post": post.n_post,
            "recovery_slope": _f(rec.slope),
            "recovery_stderr": _f(rec.stderr),
            "recovery_target": 1.0,
            "nonmeeting_survival": [_f(s) for s in non.survival],
            "nonmeeting_horizons": list(non.horizons),
            "checks": checks,
        },
        f"crossings {crossings} (exact), pre {pre.pre_slope:+.4f} (4SE {4 * pre.pre_se:.4f}), "
        f"post {post.post_slope:.4f} (5% of 1, n {post.n_post}), backward recovery "
        f"{rec.slope:+.4f} (10% of +1), survival {[round(s, 4) for s in non.survival]}",
    )


# ---------------------------------------------------------------------------
# criterion 7: escape bound
# ---------------------------------------------------------------------------


def criterion_7(
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    replicates: int | None = None,
) -> Verdict:
    """MC escape probability against the running-minimum comparison bound.

    Pinned at start heights 6, 8, 10 for the Lipschitz-1.3 family, all of
    which sit below the bound's validity threshold (about 14.68); the two
    lowest starts genuinely exceed the bound, so this criterion reports the
    violation honestly instead of passing.
    """
    replicates = replicates if replicates is not None else (10_000 if quick else 1_000_000)
    drift = linsin_drift(-1.0, 0.3)
    threshold = escape_range_threshold(drift, 2.0)
    rows = []
    ok = True
    for n in (6, 8, 10):
        est = escape_probability(
            drift, 2.0, float(n), replicates, dt=0.005, seed=seed, enforce_range=False
        )
        within = bool(est.ci_low <= est.analytic_bound)
        ok = ok and within
        rows.append(
            {
                "start": n,
                "estimate": _f(est.p_hat),
                "ci": [_f(est.ci_low), _f(est.ci_high)],
                "bound": _f(est.analytic_bound),
                "bounded": within,
                "in_validity_range": n > threshold,
            }
        )
    # a reduced-scale CI that already clears its bound is a decisive failure
    status = _status(ok, quick, decisive_fail=not ok)
    summary = ", ".join(
        f"n={r['start']}: {r['estimate']:.4f} vs bound {r['bound']:.4f}"
        f" {'<=' if r['bounded'] else '>'}" for r in rows
    )
    return Verdict(
        7,
        "escape bound",
        status,
        {
            "replicates": replicates,
            "validity_threshold": _f(threshold),
            "rows": rows,
        },
        f"{summary}; validity needs start > {threshold:.2f}, so the pinned "
        "starts are outside the bound's range",
    )


# ---------------------------------------------------------------------------
# criterion 8: exact structural invariants
# ---------------------------------------------------------------------------


def criterion_8(seed: int = 0, quick: bool = False, fault: str | None = None) -> Verdict:
    """Cocycle, monotonicity, identity, absorbing coalescence: zero violations."""
    n_flows = 2 if quick else 5
    counts = {
        "cocycle": 0,
        "monotone": 0,
        "identity": 0,
        "absorbing": 0,
        "checked": 0,
        "dual_order": 0,
        "dual_non_absorbing": 0,
        "dual_crossings": 0,
    }
    for r in range(n_flows):
        for drift in (linear_drift(-1.0), zero_drift()):
            fl = build_flow(drift, 6.0, 1.0, 0.025, -5.0, 5.0, 0.25, 10, seed=seed, replicate=r)
            aud = audit_realization(fl, n_triples=40, seed=r)
            counts["cocycle"] += aud.cocycle_failures
            counts["monotone"] += aud.monotone_failures
            counts["identity"] += aud.identity_failures
            counts["absorbing"] += aud.absorbing_failures
            counts["checked"] += (
                aud.cocycle_checked
                + aud.monotone_checked
                + aud.identity_checked
                + aud.absorbing_checked
            )
        sy = fractional_step_dual(
            linear_drift(-1.0),
            np.linspace(-2, 2, 17),
            np.linspace(-1, 1, 9),
            20,
            40,
            seed=seed,
            replicate=r,
            t_end=1.0,
            x_min=-8,
            x_max=8,
        )
        aud = crossing_audit(sy)
        counts["dual_order"] += aud["f_order_violations"] + aud["g_order_violations"]
        counts["dual_non_absorbing"] += aud["f_non_absorbing"] + aud["g_non_absorbing"]
        counts["dual_crossings"] += aud["crossings"]
    violations = sum(
        counts[k]
        for k in (
            "cocycle",
            "monotone",
            "identity",
            "absorbing",
            "dual_order",
            "dual_non_absorbing",
            "dual_crossings",
        )
    )
    ok = violations == 0
    return Verdict(
        8,
        "exact structural invariants",
        "pass" if ok else "fail",
        {**counts, "violations": int(violations)},
        f"{violations} violations across {counts['checked']} flow checks plus "
        f"{2 * n_flows} flow audits and {n_flows} dual audits (zero permitted)",
    )


# ---------------------------------------------------------------------------
# criterion 9: byte determinism of the verify command
# ---------------------------------------------------------------------------

MANIFEST_TIMING_KEYS = ("wall_clock_seconds", "criterion_seconds")


def _stable_manifest(path: Path) -> str:
    data = json.loads(path.read_text())
    for key in MANIFEST_TIMING_KEYS:
        data.pop(key, None)
    return json.dumps(data, sort_keys=True)


def compare_run_dirs(dir_a, dir_b) -> list[str]:
    """Names of files that differ between two run directories.

    Every file must agree byte-for-byte except manifest.json, whose timing
    fields (the only legitimately run-dependent content) are stripped before
    comparison.
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    names_a = sorted(p.name for p in dir_a.iterdir() if p.is_file())
    names_b = sorted(p.name for p in dir_b.iterdir() if p.is_file())
    if names_a != names_b:
        return sorted(set(names_a) ^ set(names_b))
    diffs = []
    for name in names_a:
        if name == "manifest.json":
            if _stable_manifest(dir_a / name) != _stable_manifest(dir_b / name):
                diffs.append(name)
        elif not filecmp.cmp(dir_a / name, dir_b / name, shallow=False):
            diffs.append(name)
    return diffs


def criterion_9(seed: int = 0, quick: bool = False, fault: str | None = None) -> Verdict:
    """Two verify runs with one seed produce identical output files."""
    import contextlib
    import io

    from . import cli  # deferred: cli imports this module

    args = ["verify", "--quick", "--seed", str(seed), "--criteria", "1,3,6,8"]
    with tempfile.TemporaryDirectory() as tmp:
        d1 = str(Path(tmp) / "run1")
        d2 = str(Path(tmp) / "run2")
        with contextlib.redirect_stdout(io.StringIO()):
            rc1 = cli.main([*args, "--out", d1])
            rc2 = cli.main([*args, "--out", d2])
        diffs = compare_run_dirs(d1, d2)
        n_files = len([p for p in Path(d1).iterdir() if p.is_file()])
    ok = not diffs and rc1 == rc2
    return Verdict(
        9,
        "byte determinism",
        "pass" if ok else "fail",
        {
            "nested_criteria": [1, 3, 6, 8],
            "files_compared": n_files,
            "differing_files": diffs,
            "exit_codes": [rc1, rc2],
        },
        f"two nested verify runs: {n_files} files compared, "
        f"{len(diffs)} differ (timing fields excluded), exit codes "
        f"{rc1}/{rc2}",
    )


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------

CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}


def run_suite(
    criteria=None,
    seed: int = 0,
    quick: bool = False,
    fault: str | None = None,
    echo=None,
) -> list[Verdict]:
    """Run the requested criteria (all nine by default) in ascending order."""
    if fault is not None and fault not in FAULTS:
        raise VerifyError(f"unknown fault {fault!r}; known: {', '.join(FAULTS)}")
    numbers = sorted(set(criteria)) if criteria else sorted(CRITERIA)
    bad = [n for n in numbers if n not in CRITERIA]
    if bad:
        raise VerifyError(f"unknown criteria {bad}; valid numbers are 1..9")
    verdicts = []
    for n in numbers:
        start = time.perf_counter()
        v = CRITERIA[n](seed=seed, quick=quick, fault=fault)
        v.seconds = time.perf_counter() - start
        verdicts.append(v)
        if echo is not None:
            echo(v.line)
    return verdicts
