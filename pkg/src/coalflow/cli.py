"""Command-line front end.

Five subcommands drive the library end to end:

  simulate   n-point coalescing trajectories and merge events
  pullback   stationary-point estimation over an ensemble of realizations
  dual       fractional-step forward/backward pair with exact audits
  meeting    meeting-time ensembles against the closed-form law
  verify     the nine-criterion acceptance suite

Configuration is resolved in three layers: per-command defaults, then a
text config file of ``key = value`` lines (``--config``), then flags, which
win.  Unknown config keys are rejected.  Every run writes the fully
resolved configuration (resolved_config.txt) and a manifest (manifest.json)
listing each output file with its sha256 hash into the output directory.
The output path itself is kept out of all file contents so two runs of one
config are byte-comparable.

Exit codes: 0 success, 1 criterion failure (a failing verify criterion, a
dual crossing violation) or I/O failure, 2 usage and parameter errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ks_test, ou_hitting_cdf, wilson_interval
from .drift import DriftError, parse_drift
from .dual import (
    build_arrow_field,
    drift_recovery,
    fractional_step_dual,
    nonexistence_demo,
    quadratic_covariation,
    write_crossing_audit_json,
    write_dual_csv,
)
from .flow import (
    build_flow,
    stationarity_check,
    stationary_point,
    write_forest_csv,
)
from .particles import (
    meeting_time_ensemble,
    simulate_n_point,
    write_events_csv,
    write_trajectories_csv,
)
from .sde import TimeGrid
from .verify import VerifyError, run_suite


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration schema: key -> (type, default, help)
# types: int, float, str, bool, floats (comma list), ints (comma list)
# ---------------------------------------------------------------------------

SCHEMAS: dict[str, dict[str, tuple[str, object, str]]] = {
    "simulate": {
        "drift": ("str", "zero", "drift expression: zero | linear:<s> | linsin:<s>:<eps>"),
        "seed": ("int", 0, "base seed"),
        "replicates": ("int", 1, "independent realizations to write"),
        "dt": ("float", 0.01, "time step"),
        "window": ("float", 10.0, "simulation horizon"),
        "starts": ("floats", (0.0, 1.0), "sorted starting points, comma separated"),
    },
    "pullback": {
        "drift": ("str", "linear:-1", "drift expression"),
        "seed": ("int", 0, "base seed"),
        "replicates": ("int", 100, "flow realizations"),
        "dt": ("float", 0.025, "time step"),
        "window": ("float", 20.0, "pullback window depth T"),
        "h": ("float", 1.0, "forward shift for the stationarity identity"),
        "probe_c": ("float", 5.0, "probe interval half width"),
        "x_min": ("float", -5.0, "left edge of the injection extent"),
        "x_max": ("float", 5.0, "right edge of the injection extent"),
        "dx": ("float", 0.25, "injection spacing"),
        "inject_every": ("int", 10, "rows between re-injections"),
    },
    "dual": {
        "drift": ("str", "linear:-1", "drift expression"),
        "seed": ("int", 0, "base seed"),
        "replicates": ("int", 1, "independent dual systems to write"),
        "n_macro": ("int", 25, "macro cells"),
        "m": ("int", 50, "lattice rows per macro cell"),
        "t_end": ("float", 1.0, "physical end time"),
        "x_min": ("float", -8.0, "left lattice edge"),
        "x_max": ("float", 8.0, "right lattice edge"),
        "forward_starts": ("floats", (-2.0, -1.0, 0.0, 1.0, 2.0), "forward family starts"),
        "backward_starts": ("floats", (-1.5, 0.0, 1.5), "backward family starts"),
        "window": ("float", 12.0, "time span of the trapping-demo lattice (zero drift only)"),
        "dt": ("float", 0.01, "lattice time step of the trapping demo"),
        "a": ("float", -1.0, "lower wall start of the trapping demo"),
        "b": ("float", 1.0, "upper wall start of the trapping demo"),
    },
    "meeting": {
        "drift": ("str", "linear:-1", "drift expression"),
        "seed": ("int", 0, "base seed"),
        "replicates": ("int", 10_000, "two-point replicates per level"),
        "dt": ("float", 0.001, "coarsest time step"),
        "window": ("float", 8.0, "meeting horizon"),
        "starts": ("floats", (0.0, 1.0), "the two starting points"),
        "refine": ("int", 0, "extra refinement levels (dt halves per level)"),
    },
    "verify": {
        "seed": ("int", 0, "base seed"),
        "quick": ("bool", False, "reduced scales; passing statistical criteria "
                                 "are reported as underpowered"),
        "fault": ("str", "", "injected fault hook (no-bridge) for negative controls"),
        "criteria": ("ints", (), "subset of criteria to run, e.g. 1,3,6,8 (default all)"),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(command: str, key: str, raw: str):
    kind = SCHEMAS[command][key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "floats":
            return tuple(float(p) for p in raw.split(",") if p.strip())
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {exc}") from exc
    raise AssertionError(f"unhandled kind {kind}")


def _read_config_file(command: str, path: str) -> dict:
    schema = SCHEMAS[command]
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in schema:
            raise UsageError(
                f"{path}:{lineno}: unknown key {key!r} for command {command}; "
                f"known keys: {', '.join(sorted(schema))}"
            )
        out[key] = _parse_value(command, key, raw)
    return out


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags (flags win)."""
    schema = SCHEMAS[command]
    cfg = {key: default for key, (_, default, _) in schema.items()}
    if getattr(args, "config", None):
        cfg.update(_read_config_file(command, args.config))
    for key in schema:
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _parse_value(command, key, raw) if isinstance(raw, str) else raw
    return cfg


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _echo_config(command: str, cfg: dict, out_dir: Path) -> None:
    lines = [f"# coalflow {command} resolved configuration",
             "# out: the directory holding this file"]
    for key in sorted(cfg):
        lines.append(f"{key} = {_format_value(cfg[key])}")
    (out_dir / "resolved_config.txt").write_text("\n".join(lines) + "\n")


def _config_json(cfg: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.items())}


def _write_manifest(out_dir: Path, command: str, cfg: dict, wall: float, extra=None) -> None:
    files = {}
    for p in sorted(out_dir.iterdir()):
        if p.is_file() and p.name != "manifest.json":
            files[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "artifact": "coalflow",
        "version": __version__,
        "command": command,
        "config": _config_json(cfg),
        "wall_clock_seconds": wall,
        "files": files,
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def _dump_json(out_dir: Path, name: str, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    (out_dir / name).write_text(text + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out_dir: Path) -> int:
    drift = parse_drift(cfg["drift"])
    starts = cfg["starts"]
    if list(starts) != sorted(starts):
        raise UsageError("starts must be sorted increasingly")
    n_steps = int(round(cfg["window"] / cfg["dt"]))
    grid = TimeGrid(0.0, cfg["dt"], n_steps)
    total_events = 0
    for r in range(cfg["replicates"]):
        system = simulate_n_point(drift, starts, grid, cfg["seed"], replicate=r)
        write_trajectories_csv(system, out_dir / f"trajectories_r{r}.csv")
        write_events_csv(system, out_dir / f"events_r{r}.csv")
        total_events += len(system.events)
    print(f"simulate: {cfg['replicates']} realization(s) of {len(starts)} particles, "
          f"{total_events} merge event(s)")
    return 0


def cmd_pullback(cfg: dict, out_dir: Path) -> int:
    drift = parse_drift(cfg["drift"])
    h = cfg["h"]
    if h < 0:
        raise UsageError("h must be >= 0")
    t_fwd = max(h, cfg["dt"])
    records = []
    values = []
    for r in range(cfg["replicates"]):
        fl = build_flow(
            drift, cfg["window"], t_fwd, cfg["dt"], cfg["x_min"], cfg["x_max"],
            cfg["dx"], cfg["inject_every"], cfg["seed"], replicate=r,
        )
        est = stationary_point(fl, c=cfg["probe_c"])
        identity = None
        if est.stabilized and h > 0:
            identity = stationarity_check(fl, h, c=cfg["probe_c"]).passed
        if r == 0:
            write_forest_csv(fl, out_dir / "fan.csv")
        if est.stabilized:
            values.append(est.value)
        records.append(
            {
                "replicate": r,
                "stabilized": bool(est.stabilized),
                "eta": est.value,
                "t0": est.stabilization_time,
                "identity": identity,
            }
        )
    n = cfg["replicates"]
    frac = len(values) / n
    vals = np.array(values)
    summary = {
        "realizations": n,
        "window": cfg["window"],
        "stabilized_fraction": frac,
        "eta_mean": float(vals.mean()) if values else None,
        "eta_variance": float(vals.var(ddof=1)) if len(values) > 1 else None,
    }
    _dump_json(out_dir, "report.json", {"summary": summary, "realizations": records})
    print(f"pullback: {len(values)}/{n} realizations stabilized at window {cfg['window']}")
    if frac < 0.99:
        print(
            f"warning: stabilized fraction {frac:.3f} < 0.99; the window may be "
            "too small for this drift (or the drift admits no stationary point)",
            file=sys.stderr,
        )
    return 0


def cmd_dual(cfg: dict, out_dir: Path) -> int:
    drift = parse_drift(cfg["drift"])
    report: dict = {"systems": []}
    bad_crossings = 0
    for r in range(cfg["replicates"]):
        system = fractional_step_dual(
            drift,
            cfg["forward_starts"],
            cfg["backward_starts"],
            cfg["n_macro"],
            cfg["m"],
            cfg["seed"],
            replicate=r,
            t_end=cfg["t_end"],
            x_min=cfg["x_min"],
            x_max=cfg["x_max"],
        )
        write_dual_csv(system, out_dir / f"dual_r{r}.csv")
        audit = write_crossing_audit_json(system, out_dir / f"crossing_audit_r{r}.json")
        bad_crossings += audit["crossings"]
        entry = {"replicate": r, "crossings": audit["crossings"]}
        if system.n_f >= 2:
            cov = quadratic_covariation(
                system.f_values[0], system.f_values[1], times=system.times
            )
            entry["covariation"] = {
                "meeting_time": cov.meeting_time,
                "pre_slope": cov.pre_slope,
                "pre_se": cov.pre_se,
                "post_slope": cov.post_slope,
                "post_se": cov.post_se,
                "n_pre": cov.n_pre,
                "n_post": cov.n_post,
            }
        for family, (vals, valid) in (
            ("forward", system.f_macro()),
            ("backward", system.g_macro()),
        ):
            fit = drift_recovery(vals, system.delta, valid=valid)
            entry[f"{family}_recovery"] = {
                "slope": fit.slope, "stderr": fit.stderr, "n": fit.n,
            }
        report["systems"].append(entry)
    if drift.kind == "zero":
        half = max(abs(cfg["a"]), abs(cfg["b"])) + math.ceil(3.5 * math.sqrt(cfg["window"]))
        field = build_arrow_field(
            cfg["window"], -half, half, cfg["dt"], cfg["seed"], replicate=10_000
        )
        demo = nonexistence_demo(field, cfg["a"], cfg["b"])
        report["trapping_demo"] = {
            "window": cfg["window"],
            "extent": [-half, half],
            "walls": [cfg["a"], cfg["b"]],
            "merged": demo.merged,
            "inconclusive": demo.inconclusive,
            "merge_time": demo.merge_time,
            "max_interior_at_or_below_merge": demo.max_interior_at_or_below_merge,
            "interior_counts": {repr(t): c for t, c in sorted(demo.interior_counts.items())},
            "threaded_ok": demo.threaded_ok,
            "hugging_fraction": demo.hugging_fraction,
        }
    _dump_json(out_dir, "report.json", report)
    print(f"dual: {cfg['replicates']} system(s), total crossings {bad_crossings}")
    if bad_crossings:
        print("error: forward/backward crossings detected; the exact duality "
              "invariant is violated", file=sys.stderr)
        return 1
    return 0


def cmd_meeting(cfg: dict, out_dir: Path) -> int:
    drift = parse_drift(cfg["drift"])
    starts = cfg["starts"]
    if len(starts) != 2 or starts[0] >= starts[1]:
        raise UsageError("meeting needs exactly two increasing starts")
    gap = starts[1] - starts[0]
    horizon = cfg["window"]
    if cfg["refine"] < 0:
        raise UsageError("refine must be >= 0")
    rate = None
    if drift.kind == "linear":
        rate = -drift.params[0]
    elif drift.kind == "zero":
        rate = 0.0
    levels = []
    for level in range(cfg["refine"] + 1):
        dt = cfg["dt"] / 2**level
        tau = meeting_time_ensemble(
            drift, starts[0], starts[1], horizon, dt, cfg["replicates"],
            seed=cfg["seed"], replicate_offset=level * cfg["replicates"],
        )
        met = tau[np.isfinite(tau)]
        ci_low, ci_high = wilson_interval(met.size, tau.size)
        entry = {
            "dt": dt,
            "met_fraction": met.size / tau.size,
            "met_ci": [ci_low, ci_high],
        }
        if rate is not None:
            law = float(ou_hitting_cdf(rate, gap, horizon))
            entry["law_fraction"] = law
            if met.size >= 50 and law > 0:
                res = ks_test(met, lambda t: np.asarray(ou_hitting_cdf(rate, gap, t)) / law)
                entry["ks_statistic"] = res.statistic
                entry["ks_pvalue"] = res.pvalue
        if level == 0:
            with (out_dir / "meeting_times.csv").open("w") as fh:
                fh.write("replicate,tau\n")
                for i, t in enumerate(tau):
                    fh.write(f"{i},{'inf' if not np.isfinite(t) else repr(float(t))}\n")
        levels.append(entry)
    payload = {
        "drift": cfg["drift"],
        "gap": gap,
        "horizon": horizon,
        "oracle_rate": rate,
        "levels": levels,
    }
    _dump_json(out_dir, "law_check.json", payload)
    top = levels[0]
    extra = f", KS p={top['ks_pvalue']:.4f}" if "ks_pvalue" in top else ""
    print(f"meeting: met fraction {top['met_fraction']:.4f} at dt={top['dt']}{extra}")
    return 0


def cmd_verify(cfg: dict, out_dir: Path) -> int:
    criteria = cfg["criteria"] or None
    fault = cfg["fault"] or None
    verdicts = run_suite(
        criteria=criteria, seed=cfg["seed"], quick=cfg["quick"], fault=fault, echo=print
    )
    _dump_json(out_dir, "verdicts.json", [v.to_json() for v in verdicts])
    counts = {"pass": 0, "fail": 0, "underpowered": 0}
    for v in verdicts:
        counts[v.status] += 1
    print(
        f"verify: {counts['pass']} pass, {counts['fail']} fail, "
        f"{counts['underpowered']} underpowered"
    )
    # timing goes in the manifest only (verdict files stay byte-stable)
    extra = {
        "verdicts": [{"number": v.number, "status": v.status} for v in verdicts],
        "criterion_seconds": {str(v.number): round(v.seconds, 3) for v in verdicts},
    }
    cfg = dict(cfg)
    wall = time.perf_counter() - cfg.pop("_start")
    _echo_config("verify", cfg, out_dir)
    _write_manifest(out_dir, "verify", cfg, wall, extra=extra)
    return 1 if counts["fail"] else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "pullback": cmd_pullback,
    "dual": cmd_dual,
    "meeting": cmd_meeting,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coalflow",
        description="coalescing stochastic flow laboratory",
    )
    parser.add_argument("--version", action="version", version=f"coalflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in SCHEMAS.items():
        p = sub.add_parser(command, help=f"run the {command} command")
        p.add_argument("--config", help="key = value config file; flags override it")
        p.add_argument("--out", default=None, help=f"output directory (default out_{command})")
        for key, (kind, default, help_text) in schema.items():
            flag = "--" + key.replace("_", "-")
            if kind == "bool":
                p.add_argument(flag, dest=key, action="store_const", const="true",
                               default=None, help=help_text)
            else:
                shown = _format_value(default) if default != () else "all"
                p.add_argument(flag, dest=key, default=None, metavar="V",
                               help=f"{help_text} (default {shown})")
    return parser


_VALUE_FLAGS = {"--config", "--out"} | {
    "--" + key.replace("_", "-")
    for schema in SCHEMAS.values()
    for key, (kind, _, _) in schema.items()
    if kind != "bool"
}
_NEG_NUMBER = re.compile(r"^-(\.)?\d")


def _normalize_argv(argv) -> list[str]:
    """Join ``--flag -1,0,1`` into ``--flag=-1,0,1`` so argparse does not
    mistake leading-minus values for option names."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and _NEG_NUMBER.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize_argv(argv))
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        cfg = resolve_config(args.command, args)
        out_dir = Path(args.out) if args.out else Path(f"out_{args.command}")
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            cfg["_start"] = start
            return COMMANDS[args.command](cfg, out_dir)
        code = COMMANDS[args.command](cfg, out_dir)
        _echo_config(args.command, cfg, out_dir)
        _write_manifest(out_dir, args.command, cfg, time.perf_counter() - start)
        return code
    except (UsageError, DriftError, VerifyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
