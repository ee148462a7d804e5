import csv
import io
import json
from datetime import timedelta

import numpy as np
import pytest

from netcache.aggregate import read_bins_csv, rollup
from netcache.cli import main
from netcache.forecast.io import read_evaluation_csv
from netcache.manifest import RunManifest
from netcache.trace import AccessRecord, Trace, read_trace, save_trace
from conftest import T0, random_records

QUIET = ["-q"]


def run(*argv):
    return main([*map(str, argv), *QUIET])


def write_yaml(path, text):
    path.write_text(text, encoding="utf-8")
    return path


ZERO_RATE = """\
workload:
  rng_seed: 1
  horizon: {start: '2021-07-01T00:00:00.000Z', end: '2021-07-03T00:00:00.000Z'}
  classes:
  - {class_label: S, population: 10, size_lognorm_mu: 3.0, size_lognorm_sigma: 1.0,
     zipf_exponent: 1.0, request_rate_per_hour: 0.0}
"""

ONE_NODE = """\
federation:
  nodes:
  - {node_id: solo, capacity_bytes: 1000000}
"""


# --- generate --------------------------------------------------------------------


def test_generate_rate_zero_gives_empty_trace(tmp_path):
    cfg = write_yaml(tmp_path / "w.yaml", ZERO_RATE)
    out = tmp_path / "t.jsonl"
    assert run("generate", "--config", cfg, "--out", out) == 0
    assert out.read_bytes() == b""
    m = RunManifest.read(f"{out}.manifest.json")
    assert list(m.artifacts) == [str(out)] and str(cfg) in m.configs


def test_generate_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("generate", "--scale", "1e-4", "--seed", 5, "--out", a) == 0
    assert run("generate", "--scale", "1e-4", "--seed", 5, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert RunManifest.read(f"{a}.manifest.json").artifacts[str(a)]["sha256"] == \
        RunManifest.read(f"{b}.manifest.json").artifacts[str(b)]["sha256"]


def test_generate_default_scale_request_count(tmp_path):
    out = tmp_path / "t.jsonl"
    assert run("generate", "--out", out) == 0
    assert len(read_trace(out)) == pytest.approx(8713.894, rel=0.10)


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NETCACHE_SEED", "5")
    assert run("generate", "--scale", "1e-4", "--out", tmp_path / "env.csv") == 0
    monkeypatch.delenv("NETCACHE_SEED")
    assert run("generate", "--scale", "1e-4", "--seed", 5, "--out", tmp_path / "flag.csv") == 0
    assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()


@pytest.mark.parametrize(
    "text, needle",
    [
        ("workload: [1, 2\n", "bad.yaml:2"),
        ("workload:\n  preset: nowhere\n", "preset"),
        ("workload:\n  preset: socal\n  scale: 0.001\n  bogus: 1\n", "bogus"),
        ("workload:\n  preset: socal\nelsewhere: {}\n", "elsewhere"),
        ("elsewhere: {}\n", "workload.horizon"),
    ],
)
def test_generate_bad_config_exits_2(tmp_path, capsys, text, needle):
    cfg = write_yaml(tmp_path / "bad.yaml", text)
    assert run("generate", "--config", cfg, "--out", tmp_path / "t.jsonl") == 2
    assert needle in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run("generate") == 2
    assert run("nonsense") == 2
    assert run("generate", "--config", tmp_path / "missing.yaml", "--out", tmp_path / "t") == 2
    assert "missing.yaml" in capsys.readouterr().err


# --- simulate ---------------------------------------------------------------------


def test_two_request_fixture_one_hit_one_miss(tmp_path):
    recs = [AccessRecord(T0 + timedelta(seconds=k), "same", "S", 1000) for k in (0, 10)]
    src = tmp_path / "two.jsonl"
    save_trace(Trace(tuple(recs)), src)
    cfg = write_yaml(tmp_path / "fed.yaml", ONE_NODE)
    out = tmp_path / "resolved.jsonl"
    assert run("simulate", src, "--config", cfg, "--out", out) == 0
    report = json.loads((tmp_path / "resolved.report.json").read_text())
    assert report["summary"]["total_hits"] == 1 and report["summary"]["total_misses"] == 1
    assert [r.outcome.value for r in read_trace(out)] == ["miss", "hit"]
    rows = list(csv.DictReader(io.StringIO((tmp_path / "resolved.report.csv").read_text())))
    assert rows[0]["scope"] == "all" and rows[0]["file_hit_rate"] == "0.5"


def test_simulate_invalid_trace_exits_3(tmp_path, capsys):
    src = tmp_path / "bad.jsonl"
    src.write_text('{"ts": "not a time"}\n')
    assert run("simulate", src, "--out", tmp_path / "o.jsonl") == 3
    assert "line 1" in capsys.readouterr().err


def test_simulate_bad_federation_exits_2(tmp_path):
    save_trace(Trace(tuple(random_records(5, resolved=False))), tmp_path / "t.jsonl")
    cfg = write_yaml(tmp_path / "fed.yaml", "federation:\n  nodes:\n  - {node_id: a}\n")
    assert run("simulate", tmp_path / "t.jsonl", "--config", cfg, "--out", tmp_path / "o.jsonl") == 2


def test_calibrated_fixture_hit_rate(tmp_path, fixtures_dir):
    trace = tmp_path / "t.jsonl"
    assert run("generate", "--config", fixtures_dir / "calibrated_workload.yaml", "--out", trace) == 0
    assert run("simulate", trace, "--out", tmp_path / "r.jsonl") == 0
    s = json.loads((tmp_path / "r.report.json").read_text())["summary"]
    assert abs(s["file_hit_rate"] - 0.676) <= 0.05
    assert abs(s["byte_hit_rate"] - 0.354) <= 0.05


def test_compare_partitioned_has_no_pollution(tmp_path):
    trace = tmp_path / "t.jsonl"
    assert run("generate", "--out", trace) == 0
    assert run("simulate", trace, "--compare", "--out", tmp_path / "r.jsonl") == 0
    reports = {m: json.loads((tmp_path / f"r.{m}.report.json").read_text())
               for m in ("unified", "partitioned", "bypass")}
    assert reports["partitioned"]["pollution_evictions"] == 0
    assert reports["unified"]["pollution_evictions"] > 0
    s_miss = {m: r["per_class_summary"]["S"]["total_misses"] for m, r in reports.items()}
    assert s_miss["partitioned"] < s_miss["unified"] and s_miss["bypass"] < s_miss["unified"]
    assert reports["bypass"]["bypassed"] > 0


# --- aggregate ----------------------------------------------------------------------------


def test_aggregate_matches_oracle_golden(tmp_path, fixtures_dir):
    out = tmp_path / "bins.csv"
    assert run("aggregate", fixtures_dir / "golden_trace.jsonl", "--out", out) == 0
    got = list(csv.reader(io.StringIO(out.read_text())))
    want = list(csv.reader(io.StringIO((fixtures_dir / "golden_bins_hourly.csv").read_text())))
    assert len(got) == len(want) and got[0] == want[0]
    for g, w in zip(got[1:], want[1:]):
        assert g[:6] == w[:6]
        np.testing.assert_allclose([float(v) for v in g[6:]], [float(v) for v in w[6:]], rtol=1e-9, atol=0)


def test_aggregate_daily_is_sum_of_hourly(tmp_path):
    src = tmp_path / "t.csv"
    save_trace(Trace(tuple(random_records(3000, seed=9, span_hours=24 * 9))), src)
    assert run("aggregate", src, "--granularity", "hourly", "--out", tmp_path / "h.csv") == 0
    assert run("aggregate", src, "--granularity", "daily", "--out", tmp_path / "d.csv") == 0
    hourly = read_bins_csv((tmp_path / "h.csv").read_bytes())
    daily = read_bins_csv((tmp_path / "d.csv").read_bytes())
    assert len(daily) in (9, 10)
    rolled = rollup(hourly, "daily")
    for a, b in zip(rolled, daily):
        assert a.as_row()[:4] == b.as_row()[:4]
        np.testing.assert_allclose(a.as_row()[4:], b.as_row()[4:], rtol=1e-9)


def test_aggregate_filters(tmp_path):
    src = tmp_path / "t.jsonl"
    save_trace(Trace(tuple(random_records(400, seed=2))), src)
    assert run("aggregate", src, "--file-class", "L", "--start", "2021-07-02T00:00:00.000Z",
               "--out", tmp_path / "b.csv") == 0
    bins = read_bins_csv((tmp_path / "b.csv").read_bytes())
    n = sum(1 for r in read_trace(src) if r.file_class == "L" and r.ts >= T0 + timedelta(days=1))
    assert sum(b.hit_count + b.miss_count for b in bins) == n


def test_aggregate_empty_after_filter_exits_3(tmp_path, capsys):
    src = tmp_path / "t.jsonl"
    save_trace(Trace(tuple(random_records(50))), src)
    assert run("aggregate", src, "--file-class", "nope", "--out", tmp_path / "b.csv") == 3
    assert "no records" in capsys.readouterr().err


def test_aggregate_unresolved_trace_exits_3(tmp_path):
    src = tmp_path / "t.jsonl"
    save_trace(Trace(tuple(random_records(50, resolved=False))), src)
    assert run("aggregate", src, "--out", tmp_path / "b.csv") == 3


# --- forecast ------------------------------------------------------------------------------


def test_forecast_missing_bins_exits_2(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "bins.csv"
    assert run("forecast", missing, "--out", tmp_path / "f") == 2
    assert str(missing) in capsys.readouterr().err


@pytest.fixture(scope="module")
def sine_bins(tmp_path_factory):
    p = tmp_path_factory.mktemp("bench") / "sine.csv"
    assert run("benchmark", "sine", "--out", p) == 0
    return p


@pytest.mark.slow
def test_forecast_sine_relative_rmse(tmp_path, sine_bins):
    out = tmp_path / "f"
    assert run("forecast", sine_bins, "--target", "avg_miss_throughput", "--out", out) == 0
    (ev,) = read_evaluation_csv((out / "evaluation.csv").read_bytes())
    assert ev.target == "avg_miss_throughput" and ev.smoothing_window == 1
    assert ev.relative_rmse < 0.2
    assert (out / "model_avg_miss_throughput.bin").exists()
    m = RunManifest.read(out / "manifest.json")
    assert {"evaluation.csv", "predictions.csv", "model_avg_miss_throughput.bin"} <= set(m.artifacts)


def test_forecast_smooth_adds_row(tmp_path, sine_bins):
    out = tmp_path / "f"
    assert run("forecast", sine_bins, "--target", "hit_count", "--smooth", 24, "--epochs", 1,
               "--hidden-units", 4, "--out", out) == 0
    rows = read_evaluation_csv((out / "evaluation.csv").read_bytes())
    assert [(r.target, r.smoothing_window) for r in rows] == [("hit_count", 1), ("hit_count", 24)]
    assert (out / "plots" / "forecast_hit_count_ma24.svg").exists()


def test_forecast_divergence_exits_4(tmp_path, sine_bins, capsys):
    cfg = write_yaml(tmp_path / "f.yaml", "forecast:\n  learning_rate: 1.0e+300\n  hidden_units: 4\n  epochs: 2\n")
    assert run("forecast", sine_bins, "--config", cfg, "--target", "hit_count", "--out", tmp_path / "f") == 4
    assert "epoch" in capsys.readouterr().err


def test_forecast_unknown_target_exits_2(tmp_path, sine_bins):
    assert run("forecast", sine_bins, "--target", "latency", "--out", tmp_path / "f") == 2


def test_forecast_bad_bins_exits_3(tmp_path):
    bad = tmp_path / "b.csv"
    bad.write_text("not,a,bins,file\n")
    assert run("forecast", bad, "--out", tmp_path / "f") == 3


# --- report ---------------------------------------------------------------------------------


def test_report_schema_mismatch_exits_2(tmp_path, capsys):
    bad = tmp_path / "evaluation.csv"
    bad.write_text("target,rmse\nhit_count,1.0\n")
    assert run("report", "--evaluation", bad, "--out", tmp_path / "r") == 2
    assert "schema" in capsys.readouterr().err


def test_report_needs_an_input(tmp_path):
    assert run("report", "--out", tmp_path / "r") == 2


def test_report_from_bins_and_trace(tmp_path):
    src = tmp_path / "t.jsonl"
    save_trace(Trace(tuple(random_records(200, seed=4))), src)
    assert run("aggregate", src, "--out", tmp_path / "b.csv") == 0
    assert run("report", "--bins", tmp_path / "b.csv", "--trace", src, "--out", tmp_path / "r") == 0
    m = RunManifest.read(tmp_path / "r" / "manifest.json")
    assert {"rates.svg", "volume.svg", "summary.md"} <= set(m.artifacts)
    assert "Hit rates" in (tmp_path / "r" / "summary.md").read_text()


# --- misc -------------------------------------------------------------------------------------


def test_benchmark_writes_bins(tmp_path):
    out = tmp_path / "spiky.csv"
    assert run("benchmark", "spiky", "--out", out) == 0
    assert len(read_bins_csv(out.read_bytes())) == 1500


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "netcache" in capsys.readouterr().out


def test_bad_jobs_env_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("NETCACHE_JOBS", "many")
    assert run("benchmark", "sine", "--out", tmp_path / "s.csv") == 2


# --- calibrate -----------------------------------------------------------------------------------


def test_calibrate_budget_from_config_section(tmp_path, fixtures_dir):
    prior = (fixtures_dir / "prior_workload.yaml").read_text()
    cfg = write_yaml(tmp_path / "c.yaml", prior + "calibrate:\n  budget: 3\n")
    out = tmp_path / "cal.yaml"
    assert run("calibrate", "--config", cfg, "--out", out) == 0
    result = json.loads((tmp_path / "cal.result.json").read_text())
    assert result["evaluations"] == 3 and result["budget_exhausted"]
    assert run("calibrate", "--config", cfg, "--budget", 2, "--out", out) == 0
    assert json.loads((tmp_path / "cal.result.json").read_text())["evaluations"] == 2
    # the written workload loads back and generates
    assert run("generate", "--config", out, "--out", tmp_path / "t.jsonl") == 0


@pytest.mark.parametrize("section, needle", [("  budgit: 3\n", "budgit"), ("  budget: 0\n", "budget")])
def test_calibrate_bad_section_exits_2(tmp_path, fixtures_dir, capsys, section, needle):
    prior = (fixtures_dir / "prior_workload.yaml").read_text()
    cfg = write_yaml(tmp_path / "c.yaml", prior + "calibrate:\n" + section)
    assert run("calibrate", "--config", cfg, "--out", tmp_path / "cal.yaml") == 2
    assert needle in capsys.readouterr().err
