"""``netcache`` command line: generate -> simulate -> aggregate -> forecast -> report.

Exit codes: 0 success, 2 config or usage error, 3 data validation error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .aggregate import Granularity, bin_trace, read_bins_csv, summarize, write_bins_csv
from .config import Fields, dump_config, load_config
from .errors import (
    AggregateError,
    ConfigError,
    DivergenceDetected,
    ForecastError,
    NonFiniteActivation,
    SimulationError,
    TraceError,
)
from .forecast import (
    BENCHMARKS,
    ForecastConfig,
    Target,
    fit_and_evaluate,
    forecast_config_from_config,
)
from .forecast.dataset import DEFAULT_WINDOW
from .forecast.io import (
    read_evaluation_csv,
    read_predictions_csv,
    run_metadata,
    save_model,
    write_evaluation_csv,
    write_predictions_csv,
)
from .manifest import RunManifest
from .report import write_report
from .simulate import PolicyMode, default_federation, federation_from_config, simulate
from .simulate.federation import FederationSpec
from .trace import Trace, TraceFormat, parse_ts, read_trace, save_trace
from .workload import (
    SOCAL_TARGETS,
    calibrate,
    default_socal_workload,
    generate,
    workload_from_config,
    workload_to_config,
)

log = logging.getLogger("netcache")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
ENV_PREFIX = "NETCACHE_"
SECTIONS = ("workload", "federation", "forecast", "calibrate")
DEFAULT_SCALE = 1e-3


class UsageError(Exception):
    pass


# --- helpers ---------------------------------------------------------------


def _env(name: str, cast=str):
    v = os.environ.get(ENV_PREFIX + name.upper())
    if v is None or v == "":
        return None
    try:
        return cast(v)
    except ValueError:
        raise UsageError(f"{ENV_PREFIX}{name.upper()}: invalid value {v!r}") from None


def _resolve_globals(args) -> None:
    for name, cast in (("seed", int), ("config", str), ("out", str), ("jobs", int)):
        if getattr(args, name, None) is None:
            setattr(args, name, _env(name, cast))
    if args.jobs is None:
        args.jobs = 1
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")


def _load_section(args, section: str) -> dict | None:
    """The ``section`` mapping of --config, or the whole file if it has no sections."""
    if not args.config:
        return None
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    data = load_config(path) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if any(k in data for k in SECTIONS):
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"{path}: unknown section(s) {', '.join(unknown)}")
        return data.get(section)
    return data


def _require_input(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _require_out(args, what: str) -> Path:
    if not args.out:
        raise UsageError(f"--out is required ({what})")
    return Path(args.out)


def _manifest(args, argv) -> RunManifest:
    m = RunManifest(command=["netcache", *argv])
    if args.config:
        m.add_config(args.config)
    return m


def _federation(args, policy: str | None) -> FederationSpec:
    section = _load_section(args, "federation")
    if section is not None:
        fed = federation_from_config(section, seed=args.seed)
        if policy:
            data = dict(section)
            data["policy"] = dict(data.get("policy") or {}, mode=policy)
            if policy != "partitioned":
                data["policy"].pop("partition_map", None)
            fed = federation_from_config(data, seed=args.seed)
        return fed
    return default_federation(policy or "unified", rng_seed=args.seed or 0)


def _workload(args):
    section = _load_section(args, "workload")
    if section is not None:
        return workload_from_config(section, seed=args.seed)
    return default_socal_workload(args.scale, rng_seed=args.seed or 0)


# --- commands --------------------------------------------------------------


def cmd_generate(args, argv) -> int:
    out = _require_out(args, "trace path")
    m = _manifest(args, argv)
    spec = _workload(args)
    m.seeds["workload"] = spec.rng_seed
    with m.timed("generate"):
        trace = generate(spec)
        save_trace(trace, out, args.format)
    m.add_artifact(out)
    m.write(f"{out}.manifest.json")
    log.info("wrote %d requests to %s", len(trace), out)
    return EXIT_OK


def _simulate_one(trace: Trace, fed: FederationSpec):
    return simulate(trace, fed)


def _report_csv(report) -> bytes:
    lines = ["scope,total_accesses,total_hits,total_misses,hit_bytes,miss_bytes,file_hit_rate,byte_hit_rate"]
    for scope, s in [("all", report.summary), *report.per_class_summary.items()]:
        d = s.as_dict()
        rates = [repr(d[k]) if k in d else "" for k in ("file_hit_rate", "byte_hit_rate")]
        lines.append(",".join([scope, *(str(d[k]) for k in ("total_accesses", "total_hits", "total_misses",
                                                                "hit_bytes", "miss_bytes")), *rates]))
    return ("\n".join(lines) + "\n").encode("utf-8")


def cmd_simulate(args, argv) -> int:
    src = _require_input(args.trace)
    out = _require_out(args, "resolved trace path")
    m = _manifest(args, argv)
    m.add_input(src)
    with m.timed("read"):
        trace = read_trace(src)
    policies = [p.value for p in PolicyMode] if args.compare else [args.policy]
    feds = [_federation(args, p) for p in policies]
    m.seeds["federation"] = feds[0].rng_seed
    with m.timed("simulate"):
        if args.jobs > 1 and len(feds) > 1:
            with ProcessPoolExecutor(max_workers=min(args.jobs, len(feds))) as ex:
                reports = list(ex.map(_simulate_one, [trace] * len(feds), feds))
        else:
            reports = [_simulate_one(trace, f) for f in feds]
    stem = out.with_suffix("")
    for fed, report in zip(feds, reports):
        suffix = f".{fed.policy.mode.value}" if args.compare else ""
        trace_path = out.with_name(stem.name + suffix + "".join(out.suffixes)) if suffix else out
        save_trace(report.resolved, trace_path, args.format)
        json_path = Path(f"{stem}{suffix}.report.json")
        csv_path = Path(f"{stem}{suffix}.report.csv")
        json_path.write_text(report.to_json(), encoding="utf-8")
        csv_path.write_bytes(_report_csv(report))
        for p in (trace_path, json_path, csv_path):
            m.add_artifact(p)
        s = report.summary
        if s.total_accesses:
            log.info("%s: file_hit_rate=%.4f byte_hit_rate=%.4f pollution_evictions=%d",
                     fed.policy.mode.value, s.file_hit_rate, s.byte_hit_rate, report.pollution_evictions)
    m.write(f"{out}.manifest.json")
    return EXIT_OK


def cmd_aggregate(args, argv) -> int:
    src = _require_input(args.trace)
    out = _require_out(args, "bins CSV path")
    m = _manifest(args, argv)
    m.add_input(src)
    trace = read_trace(src)
    recs = [
        r
        for r in trace
        if (args.start is None or r.ts >= args.start)
        and (args.end is None or r.ts < args.end)
        and (args.file_class is None or r.file_class == args.file_class)
    ]
    with m.timed("aggregate"):
        bins = bin_trace(recs, args.granularity)
    out.write_bytes(write_bins_csv(bins))
    m.add_artifact(out)
    m.write(f"{out}.manifest.json")
    return EXIT_OK


def _forecast_job(job):
    bins, cfg, window = job
    return fit_and_evaluate(bins, cfg, smoothing_window=window)


def _forecast_config(args, granularity: Granularity) -> ForecastConfig:
    section = _load_section(args, "forecast")
    cfg = forecast_config_from_config(section, seed=args.seed)
    if not section or "window_length" not in section:
        cfg = replace(cfg, window_length=DEFAULT_WINDOW[granularity])
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.hidden_units is not None:
        cfg = replace(cfg, hidden_units=args.hidden_units)
    return cfg


def run_forecasts(bins, cfg: ForecastConfig, targets, windows, jobs: int = 1):
    work = [(bins, cfg.with_target(t), w) for t in targets for w in windows]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as ex:
            return list(ex.map(_forecast_job, work))
    return [_forecast_job(j) for j in work]


def _write_forecasts(out_dir: Path, runs, m: RunManifest, base: Path | None = None) -> None:
    base = out_dir if base is None else base
    out_dir.mkdir(parents=True, exist_ok=True)
    for run in runs:
        name = run.config.target.value + (f"_ma{run.smoothing_window}" if run.smoothing_window > 1 else "")
        p = out_dir / f"model_{name}.bin"
        save_model(p, run.params, run_metadata(run))
        m.add_artifact(p, base)
    ev = out_dir / "evaluation.csv"
    ev.write_bytes(write_evaluation_csv(r.evaluation for r in runs))
    pr = out_dir / "predictions.csv"
    pr.write_bytes(write_predictions_csv(runs))
    for p in (ev, pr):
        m.add_artifact(p, base)
    for p in write_report(out_dir / "plots", predictions=read_predictions_csv(pr.read_bytes())):
        m.add_artifact(p, base)


def _targets(names) -> list[Target]:
    if not names or names == ["all"]:
        return list(Target)
    try:
        return [Target.coerce(n) for n in names]
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_forecast(args, argv) -> int:
    src = _require_input(args.bins)
    out_dir = _require_out(args, "output directory")
    m = _manifest(args, argv)
    m.add_input(src)
    bins = read_bins_csv(src.read_bytes())
    if not bins:
        raise AggregateError(f"{src}: no bins")
    cfg = _forecast_config(args, bins[0].granularity)
    m.seeds["forecast"] = cfg.rng_seed
    windows = [1] + [w for w in dict.fromkeys(args.smooth or []) if w != 1]
    with m.timed("forecast"):
        runs = run_forecasts(bins, cfg, _targets(args.target), windows, args.jobs)
    _write_forecasts(out_dir, runs, m)
    m.write(out_dir / "manifest.json")
    for r in runs:
        e = r.evaluation
        log.info("%s ma%d: test_rmse=%.4g relative_rmse=%.4f", e.target, e.smoothing_window, e.test_rmse,
                 e.relative_rmse)
    return EXIT_OK


def cmd_report(args, argv) -> int:
    out_dir = _require_out(args, "output directory")
    m = _manifest(args, argv)
    bins = preds = evals = summary = None
    if args.bins:
        m.add_input(_require_input(args.bins))
        bins = read_bins_csv(Path(args.bins).read_bytes())
    if args.predictions:
        m.add_input(_require_input(args.predictions))
        preds = _schema(read_predictions_csv, args.predictions)
    if args.evaluation:
        m.add_input(_require_input(args.evaluation))
        evals = _schema(read_evaluation_csv, args.evaluation)
    if args.trace:
        m.add_input(_require_input(args.trace))
        summary = summarize(read_trace(args.trace))
    if not any(x is not None for x in (bins, preds, evals, summary)):
        raise UsageError("report needs at least one of --bins, --predictions, --evaluation, --trace")
    for p in write_report(out_dir, bins=bins, predictions=preds, evaluations=evals, summary=summary):
        m.add_artifact(p, out_dir)
    m.write(out_dir / "manifest.json")
    return EXIT_OK


def _schema(reader, path):
    try:
        return reader(Path(path).read_bytes())
    except (ValueError, KeyError) as e:
        raise UsageError(f"{path}: schema mismatch: {e}") from None


def cmd_calibrate(args, argv) -> int:
    out = _require_out(args, "calibrated workload YAML path")
    m = _manifest(args, argv)
    base = _workload(args)
    fed = _federation(args, args.policy)
    m.seeds["workload"] = base.rng_seed
    m.seeds["federation"] = fed.rng_seed
    f = Fields(_load_section(args, "calibrate") or {}, "calibrate")
    budget = f.int("budget", 200)
    if args.budget is not None:
        budget = args.budget
    tol, min_step = f.num("tol", 2.5e-5), f.num("min_step", 0.01)
    f.finish()
    if budget < 1:
        raise UsageError("calibration budget must be >= 1")

    def progress(k, loss, f, b):
        log.info("evaluation %d: file_hit_rate=%.4f byte_hit_rate=%.4f loss=%.3g", k, f, b, loss)

    with m.timed("calibrate"):
        res = calibrate(SOCAL_TARGETS, base, fed, budget=budget, tol=tol, min_step=min_step, progress=progress)
    out.write_text(dump_config({"workload": workload_to_config(res.spec)}), encoding="utf-8")
    result_path = Path(f"{out.with_suffix('')}.result.json")
    result_path.write_text(
        json.dumps(
            {
                "file_hit_rate": res.file_hit_rate,
                "byte_hit_rate": res.byte_hit_rate,
                "target_file_hit_rate": SOCAL_TARGETS.file_hit_rate,
                "target_byte_hit_rate": SOCAL_TARGETS.byte_hit_rate,
                "loss": res.loss,
                "evaluations": res.evaluations,
                "budget_exhausted": res.budget_exhausted,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    for p in (out, result_path):
        m.add_artifact(p)
    m.write(f"{out}.manifest.json")
    if res.budget_exhausted:
        log.warning("calibration budget exhausted after %d evaluations (loss %.3g)", res.evaluations, res.loss)
    return EXIT_OK


def cmd_benchmark(args, argv) -> int:
    out = _require_out(args, "bins CSV path")
    builder = BENCHMARKS[args.name]
    bins = builder() if args.seed is None or args.name == "sine" else builder(seed=args.seed)
    out.write_bytes(write_bins_csv(bins))
    m = _manifest(args, argv)
    m.add_artifact(out)
    m.write(f"{out}.manifest.json")
    return EXIT_OK


def cmd_pipeline(args, argv) -> int:
    """generate, simulate, aggregate, forecast and report into one directory."""
    out_dir = _require_out(args, "output directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    m = _manifest(args, argv)
    spec = _workload(args)
    fed = _federation(args, args.policy)
    m.seeds.update(workload=spec.rng_seed, federation=fed.rng_seed)
    with m.timed("generate"):
        requests = generate(spec)
    with m.timed("simulate"):
        report = simulate(requests, fed)
    with m.timed("aggregate"):
        bins = bin_trace(report.resolved, args.granularity)
    gran = Granularity.coerce(args.granularity)
    cfg = _forecast_config(args, gran)
    m.seeds["forecast"] = cfg.rng_seed
    paths = {
        "requests.jsonl": None,
        "resolved.jsonl": None,
        "simulation.json": report.to_json().encode("utf-8"),
        f"bins_{gran.value}.csv": write_bins_csv(bins),
    }
    save_trace(requests, out_dir / "requests.jsonl")
    save_trace(report.resolved, out_dir / "resolved.jsonl")
    for name, data in paths.items():
        if data is not None:
            (out_dir / name).write_bytes(data)
        m.add_artifact(out_dir / name, out_dir)
    windows = [1] + [w for w in dict.fromkeys(args.smooth or []) if w != 1]
    with m.timed("forecast"):
        runs = run_forecasts(bins, cfg, _targets(args.target), windows, args.jobs)
    _write_forecasts(out_dir / "forecast", runs, m, base=out_dir)
    for p in write_report(
        out_dir / "report",
        bins=bins,
        evaluations=[r.evaluation for r in runs],
        summary=report.summary,
    ):
        m.add_artifact(p, out_dir)
    m.write(out_dir / "manifest.json")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="RNG seed (env NETCACHE_SEED)")
    p.add_argument("--config", default=d, help="YAML config file (env NETCACHE_CONFIG)")
    p.add_argument("--out", default=d, help="output path or directory (env NETCACHE_OUT)")
    p.add_argument("--jobs", type=int, default=d, help="parallel worker processes (env NETCACHE_JOBS)")
    p.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _forecast_flags(p):
    p.add_argument("--target", action="append", help="target series (repeatable; default all six)")
    p.add_argument("--smooth", type=int, action="append", help="also fit a moving-average target of this window")
    p.add_argument("--epochs", type=int, help="override forecast.epochs")
    p.add_argument("--hidden-units", type=int, help="override forecast.hidden_units")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netcache", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netcache {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "synthesize a request trace from a workload config")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE, help="request-rate scale for the default workload")
    p.add_argument("--format", choices=[f.value for f in TraceFormat], help="trace format (default: from suffix)")

    p = add("simulate", cmd_simulate, "replay a trace through a cache federation")
    p.add_argument("trace")
    p.add_argument("--policy", choices=[m.value for m in PolicyMode])
    p.add_argument("--compare", action="store_true", help="run every policy (parallel with --jobs)")
    p.add_argument("--format", choices=[f.value for f in TraceFormat])

    p = add("aggregate", cmd_aggregate, "bin a resolved trace into hourly or daily features")
    p.add_argument("trace")
    p.add_argument("--granularity", choices=[g.value for g in Granularity], default="hourly")
    p.add_argument("--start", type=_ts_arg, help="keep records at or after this UTC time")
    p.add_argument("--end", type=_ts_arg, help="keep records before this UTC time")
    p.add_argument("--file-class", help="keep only this file class")

    p = add("forecast", cmd_forecast, "train and evaluate LSTM forecasters on a bins CSV")
    p.add_argument("bins")
    _forecast_flags(p)

    p = add("report", cmd_report, "render SVG charts and a markdown summary")
    p.add_argument("--bins")
    p.add_argument("--predictions")
    p.add_argument("--evaluation")
    p.add_argument("--trace", help="resolved trace for the hit-rate table")

    p = add("calibrate", cmd_calibrate, "fit workload reuse knobs to the reference hit rates")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    p.add_argument("--budget", type=int, help="maximum simulate evaluations (default 200)")
    p.add_argument("--policy", choices=[m.value for m in PolicyMode])

    p = add("benchmark", cmd_benchmark, "write a synthetic benchmark bins CSV")
    p.add_argument("name", choices=sorted(BENCHMARKS))

    p = add("pipeline", cmd_pipeline, "run every stage end to end into one directory")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    p.add_argument("--policy", choices=[m.value for m in PolicyMode])
    p.add_argument("--granularity", choices=[g.value for g in Granularity], default="hourly")
    _forecast_flags(p)
    return parser


def _ts_arg(text: str):
    try:
        return parse_ts(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="netcache: %(message)s",
                        stream=sys.stderr, force=True)
    try:
        _resolve_globals(args)
        return args.func(args, argv)
    except (UsageError, ConfigError) as e:
        log.error("error: %s", e)
        return EXIT_USAGE
    except (DivergenceDetected, NonFiniteActivation) as e:
        log.error("error: %s", e)
        return EXIT_DIVERGED
    except (TraceError, AggregateError, SimulationError, ForecastError) as e:
        log.error("error: %s", e)
        return EXIT_DATA
    except FileNotFoundError as e:
        log.error("error: %s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
