"""``fuzzymarket`` command line.

Settings are layered: preset, then the YAML ``--config`` file, then flags.
A config file holds one mapping, optionally nested under the subcommand
name so one file can serve several subcommands.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import presets
from .errors import ConfigError, FuzzyMarketError, InvalidInputError, PreconditionError
from .estimator import (
    DEFAULT_LAMBDA,
    DEFAULT_P0,
    DEFAULT_V0,
    PiecewiseLinear,
    PriceSeries,
    SignalParams,
    estimate_series,
    series_signals,
    word_of_mouth_proportion,
)
from .market import (
    Behavior,
    RealPrice,
    manipulator_consensus_target,
    predicted_limit_log_price,
    run_simulation,
)
from .montecarlo import GRID_PRESETS, ExperimentGrid, run_grid, table_to_csv, table_to_json
from .verify import report_dict, run_checks

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _sidecar(out: Path) -> Path:
    return out.with_suffix(".json")


def _load_config(path, command: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"{path} is not valid YAML: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a mapping")
    if command in doc and isinstance(doc[command], dict):
        doc = doc[command]
    return dict(doc)


def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("set", f"expected KEY=VALUE, got {item!r}")
        out[key.strip()] = yaml.safe_load(raw)
    return out


def _layer(args, command: str) -> dict:
    cfg = _load_config(args.config, command)
    cfg.update(_parse_sets(getattr(args, "set", None)))
    if args.preset is not None:
        cfg["preset"] = args.preset
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


# --- simulate ---------------------------------------------------------------


def trace_csv(trace, with_indicators: bool) -> str:
    n = trace.centers.shape[1]
    header = ["t", "p"] + [f"pbar_{i + 1}" for i in range(n)] + [f"sigma_{i + 1}" for i in range(n)]
    if with_indicators:
        header += [f"indicator_{i + 1}" for i in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k in range(trace.t.size):
        row = [str(int(trace.t[k])), _fmt(trace.prices[k])]
        row += [_fmt(x) for x in trace.centers[k]]
        row += [_fmt(x) for x in trace.sdvs[k]]
        if with_indicators:
            row += [str(int(x)) for x in trace.indicators[k]]
        w.writerow(row)
    return buf.getvalue()


def _simulation_summary(setup, trace) -> dict:
    params = setup.params
    rec = trace.convergence
    doc = {
        "preset": setup.config.get("preset"),
        "seed": params.seed,
        "steps": trace.steps,
        "n": params.n,
        "scheme": setup.config["scheme"],
        "config": setup.config,
        "final_price": float(trace.prices[-1]),
        "price_divergence_step": trace.price_divergence_step,
        "convergence": {
            "converged": rec.converged,
            "t_N": rec.t_N,
            "groups": rec.partition.q if rec.converged else None,
            "group_centers": list(rec.partition.group_centers) if rec.converged else None,
            "group_sdvs": list(rec.partition.group_sdvs) if rec.converged else None,
        },
        "predicted_limit": None,
    }
    if rec.converged and not isinstance(params.scheme, RealPrice):
        limit = predicted_limit_log_price(trace.state(rec.t_N).network, params.traders, params.scheme, rec)
        doc["predicted_limit"] = {"log_price": limit.value, "price": math.exp(limit.value), "stable": limit.stable}
    if any(t.behavior is Behavior.MANIPULATOR for t in params.traders):
        doc["manipulator_consensus_target"] = manipulator_consensus_target(
            params.traders, setup.initial.network.centers
        )
    return doc


def cmd_simulate(args) -> int:
    cfg = _layer(args, "simulate")
    if args.steps is not None:
        cfg["steps"] = args.steps
    if args.scheme is not None:
        cfg["scheme"] = args.scheme
    setup = presets.build_simulation(presets.resolve(cfg.pop("preset", None), cfg))
    trace = run_simulation(setup.params, setup.initial, setup.steps)
    out = Path(args.out or "trace.csv")
    with_ind = any(t.behavior in (Behavior.FOLLOWER, Behavior.CONTRARIAN) for t in setup.params.traders)
    out.write_text(trace_csv(trace, with_ind))
    summary = _simulation_summary(setup, trace)
    _dump_json(_sidecar(out), summary)
    rec = trace.convergence
    print(f"wrote {out} ({trace.steps} steps); converged={rec.converged} t_N={rec.t_N}")
    return EXIT_OK


# --- sweep ------------------------------------------------------------------

_GRID_KEYS = {
    "scheme", "d_values", "n_values", "b_values", "runs", "a", "sigma_eps", "p0",
    "center_range", "sdv_range", "seed", "max_steps", "workers", "preset",
}


def build_grid(cfg: dict) -> tuple[ExperimentGrid, int]:
    unknown = set(cfg) - _GRID_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown sweep setting")
    name = cfg.get("preset")
    if name is not None and name not in GRID_PRESETS:
        raise ConfigError("preset", f"unknown sweep preset {name!r}; choose from {sorted(GRID_PRESETS)}")
    fields = dict(GRID_PRESETS[name]) if name else {}
    rename = {"runs": "runs_per_cell", "seed": "base_seed"}
    for key, value in cfg.items():
        if key not in ("preset", "workers"):
            fields[rename.get(key, key)] = value
    for key in ("scheme", "d_values", "n_values", "b_values"):
        if key not in fields:
            raise ConfigError(key, "required when no sweep preset is given")
    for key in ("d_values", "n_values", "b_values", "center_range", "sdv_range"):
        if key in fields:
            if not isinstance(fields[key], (list, tuple)):
                raise ConfigError(key, "expected a list")
            fields[key] = tuple(fields[key])
    for key in ("runs_per_cell", "base_seed", "max_steps"):
        if key in fields and (not isinstance(fields[key], int) or isinstance(fields[key], bool)):
            raise ConfigError({"runs_per_cell": "runs", "base_seed": "seed"}.get(key, key), "expected an integer")
    workers = cfg.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "expected a positive integer")
    try:
        return ExperimentGrid(**fields), workers
    except InvalidInputError as exc:
        raise ConfigError("grid", str(exc)) from None


def cmd_sweep(args) -> int:
    cfg = _layer(args, "sweep")
    if args.runs is not None:
        cfg["runs"] = args.runs
    if args.workers is not None:
        cfg["workers"] = args.workers
    grid, workers = build_grid(cfg)
    table = run_grid(grid, workers=workers)
    out = Path(args.out or "sweep.csv")
    out.write_text(table_to_csv(grid, table))
    _sidecar(out).write_text(table_to_json(grid, table))
    short = sum(s.shortfall for s in table.values())
    print(f"wrote {out} ({len(table)} cells, {short} non-converged runs)")
    return EXIT_OK


# --- estimate / signal --------------------------------------------------------

_EST_KEYS = {"input", "lambda", "v0", "P0", "burn_in", "tau", "delta", "memberships", "seed", "preset"}
_MEMBERSHIPS = ("positive_big", "negative_big", "positive", "negative")


def _signal_params(cfg: dict) -> SignalParams:
    kwargs = {}
    if "tau" in cfg:
        kwargs["tau"] = cfg["tau"]
    if "delta" in cfg:
        kwargs["delta"] = cfg["delta"]
    for name, knots in (cfg.get("memberships") or {}).items():
        if name not in _MEMBERSHIPS:
            raise ConfigError(f"memberships.{name}", f"expected one of {list(_MEMBERSHIPS)}")
        try:
            xs, ys = zip(*knots)
            kwargs[name] = PiecewiseLinear(xs, ys)
        except (TypeError, ValueError, InvalidInputError) as exc:
            raise ConfigError(f"memberships.{name}", f"expected [[x, mu], ...] knots ({exc})") from None
    try:
        return SignalParams(**kwargs)
    except InvalidInputError as exc:
        field = "tau" if "tau" in str(exc) else "delta"
        raise ConfigError(field, str(exc)) from None


def _estimation_inputs(args, command):
    cfg = _layer(args, command)
    if args.input is not None:
        cfg["input"] = args.input
    if getattr(args, "lam", None) is not None:
        cfg["lambda"] = args.lam
    if getattr(args, "burn_in", None) is not None:
        cfg["burn_in"] = args.burn_in
    unknown = set(cfg) - _EST_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown {command} setting")
    if cfg.get("preset") is not None:
        raise ConfigError("preset", f"{command} has no presets")
    if "input" not in cfg:
        raise ConfigError("input", "a date,adj_close CSV is required")
    path = cfg["input"]
    if not os.path.isfile(path):
        raise ConfigError("input", f"no such file: {path}")
    lam = cfg.get("lambda", DEFAULT_LAMBDA)
    if not isinstance(lam, (int, float)) or not 0 < lam <= 1:
        raise ConfigError("lambda", "forgetting factor must lie in (0, 1]")
    v0 = cfg.get("v0", list(DEFAULT_V0))
    P0 = cfg.get("P0", [list(r) for r in DEFAULT_P0])
    try:
        v0 = np.asarray(v0, dtype=float).reshape(2)
    except (TypeError, ValueError):
        raise ConfigError("v0", "expected two numbers") from None
    try:
        P0 = np.asarray(P0, dtype=float).reshape(2, 2)
    except (TypeError, ValueError):
        raise ConfigError("P0", "expected a 2x2 matrix") from None
    if not np.allclose(P0, P0.T) or np.any(np.linalg.eigvalsh(P0) <= 0):
        raise ConfigError("P0", "must be symmetric positive definite")
    burn_in = cfg.get("burn_in", 0)
    if not isinstance(burn_in, int) or burn_in < 0:
        raise ConfigError("burn_in", "expected a non-negative integer")
    params = _signal_params(cfg)
    series = PriceSeries.read_csv(path)
    if len(series) < 2:
        raise ConfigError("input", "need at least two prices")
    est = estimate_series(series, float(lam), v0, P0)
    settings = {"input": str(path), "lambda": float(lam), "v0": v0.tolist(), "P0": P0.tolist(),
                "burn_in": burn_in, "tau": params.tau, "delta": params.delta}
    return series, est, params, settings


def _opt(value: float, missing: bool) -> str:
    return "" if missing else _fmt(value)


def cmd_estimate(args) -> int:
    series, est, params, settings = _estimation_inputs(args, "estimate")
    signals = series_signals(series, est, params)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "price", "pbar_hat", "sigma_hat", "gap_flag", "signal"])
    for k, date in enumerate(series.dates):
        sig = signals[k].signal.value if signals[k] is not None else ""
        w.writerow([date, _fmt(series.prices[k]), _opt(est.pbar_hat[k], est.gap[k]),
                    _opt(est.sigma_hat[k], est.gap[k]), int(est.gap[k]), sig])
    out = Path(args.out or "estimates.csv")
    out.write_text(buf.getvalue())
    proportion = word_of_mouth_proportion(series, est, settings["burn_in"])
    counts = {s: sum(1 for r in signals if r is not None and r.signal.value == s) for s in ("buy", "sell", "none")}
    last = len(series) - 2
    _dump_json(_sidecar(out), {
        "settings": settings,
        "rows": len(series),
        "gaps": int(np.sum(est.gap)),
        "word_of_mouth_proportion": proportion,
        "final": {"date": series.dates[last], "pbar_hat": est.pbar_hat[last], "sigma_hat": est.sigma_hat[last]},
        "signals": counts,
        "conflicts": sum(1 for r in signals if r is not None and r.conflict),
    })
    print(f"wrote {out}; word-of-mouth proportion {proportion:.4f}")
    return EXIT_OK


def cmd_signal(args) -> int:
    series, est, params, settings = _estimation_inputs(args, "signal")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "price", "r_p", "r_sigma", "signal", "conflict"])
    for k, res in enumerate(series_signals(series, est, params)):
        if res is None:
            continue
        missing = math.isnan(res.r_p)
        w.writerow([series.dates[k], _fmt(series.prices[k]), _opt(res.r_p, missing),
                    _opt(res.r_sigma, missing), res.signal.value, int(res.conflict)])
    out = Path(args.out or "signals.csv")
    out.write_text(buf.getvalue())
    print(f"wrote {out}")
    return EXIT_OK


# --- verify -----------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _layer(args, "verify")
    tol = args.tol if args.tol is not None else cfg.get("tol")
    if tol is not None and (not isinstance(tol, (int, float)) or tol < 0):
        raise ConfigError("tol", "expected a non-negative number")
    names = args.check or cfg.get("checks")
    from .verify import CHECKS

    known = {c.name for c in CHECKS}
    for name in names or ():
        if name not in known:
            raise ConfigError("check", f"unknown check {name!r}; choose from {sorted(known)}")
    results = run_checks(tol, names)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark} {r.name} [{', '.join(r.tags)}] error={r.error!r} tol={r.tolerance!r}: {r.detail}")
    doc = report_dict(results)
    print("tags covered: " + ", ".join(doc["tags"]))
    if args.out:
        _dump_json(Path(args.out), doc)
    return EXIT_OK if doc["passed"] else EXIT_FAILED


# --- parser -----------------------------------------------------------------


def _defaults_epilog() -> str:
    lines = ["simulate settings (config keys / --set KEY=VALUE) and defaults:"]
    lines += [f"  {k}: {v!r}" for k, v in presets.SIM_DEFAULTS.items()]
    lines.append("simulate presets: " + ", ".join(presets.SIM_PRESETS))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="fuzzymarket", description="Fuzzy opinion network stock market model.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_default):
        p.add_argument("--config", metavar="PATH", help="YAML settings file")
        p.add_argument("--seed", type=int, metavar="N", help="RNG seed (sweeps: seed of run 0)")
        p.add_argument("--out", metavar="PATH", help=f"output file (default {out_default})")
        p.add_argument("--preset", metavar="NAME", help="named parameter set")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (YAML value)")

    p = sub.add_parser("simulate", help="simulate one market run", epilog=_defaults_epilog(), formatter_class=fmt)
    common(p, "trace.csv; sidecar trace.json")
    p.add_argument("--steps", type=int, help="number of steps (default 500)")
    p.add_argument("--scheme", choices=sorted(presets.SCHEMES), help="reference scheme (default local)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "sweep", help="Monte Carlo parameter sweep", formatter_class=fmt,
        epilog="sweep presets: " + ", ".join(GRID_PRESETS) + "\nkeys: " + ", ".join(sorted(_GRID_KEYS))
        + "\ndefaults: runs=100 a=0.002 sigma_eps=0.02 p0=10 center_range=[5, 25] sdv_range=[0, 1] seed=0 max_steps=5000 workers=1",
    )
    common(p, "sweep.csv; sidecar sweep.json")
    p.add_argument("--runs", type=int, help="runs per cell (default 100)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    epilog = (
        f"keys: {', '.join(sorted(_EST_KEYS))}\n"
        f"defaults: lambda={DEFAULT_LAMBDA} v0={list(DEFAULT_V0)} P0={[list(r) for r in DEFAULT_P0]} burn_in=0 tau=5 delta=0.25"
    )
    for name, func, out, text in (
        ("estimate", cmd_estimate, "estimates.csv; sidecar estimates.json", "estimate opinions from a price series"),
        ("signal", cmd_signal, "signals.csv", "fuzzy trading signals for a price series"),
    ):
        p = sub.add_parser(name, help=text, epilog=epilog, formatter_class=fmt)
        common(p, out)
        p.add_argument("--input", metavar="PATH", help="date,adj_close CSV")
        p.add_argument("--lambda", dest="lam", type=float, help=f"forgetting factor (default {DEFAULT_LAMBDA})")
        p.add_argument("--burn-in", type=int, help="indices left out of the proportion (default 0)")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    common(p, "no report file")
    p.add_argument("--tol", type=float, help="replace every check tolerance")
    p.add_argument("--check", action="append", metavar="NAME", help="run only this check (repeatable)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PreconditionError, FuzzyMarketError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
