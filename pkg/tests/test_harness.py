import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dzo import harness
from dzo.cli import main
from dzo.engine import Schedule
from dzo.harness import ConfigError, RunConfig, number


def _small_cfg(**kw):
    base = dict(problem={"kind": "quadratic_benchmark", "seed": 1}, topology={"kind": "cycle"}, gamma=2.0,
                noise={"kind": "gaussian", "sigma": 1.0}, budget={"T0": 80}, n=4, d=3, trials=3, base_seed=5,
                checkpoints=(20, 40, 80))
    base.update(kw)
    return RunConfig(**base)


# --- config ---------------------------------------------------------------------


def test_number_decoding():
    assert number({"log10": 7.5}) == 10**7.5
    assert number("0.1") == 0.1
    assert number(3) == 3.0
    with pytest.raises(ConfigError):
        number({"log2": 3})
    with pytest.raises(ConfigError):
        number(True)


@settings(max_examples=50, deadline=None)
@given(
    d=st.integers(1, 50),
    n=st.integers(1, 20),
    trials=st.integers(1, 40),
    seed=st.integers(0, 2**31),
    log_l=st.floats(-3, 9, allow_nan=False),
    est=st.sampled_from(["kernel_2d", "two_point", "two_point_kernel"]),
    budget=st.sampled_from([{"T0": 100}, {"T": 2000}, {"T": {"log10": 5}}]),
)
def test_config_round_trip(d, n, trials, seed, log_l, est, budget):
    sched = "theorem2_beta2" if est == "two_point" else "theorem1"
    cfg = RunConfig(problem={"kind": "appendix_e", "L": {"log10": log_l}}, estimator=est, schedule=sched,
                    budget=budget, n=n, d=d, trials=trials, base_seed=seed, checkpoints=(10, 20))
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert json.loads(cfg.to_json())["schema_version"] == harness.SCHEMA_VERSION


@pytest.mark.parametrize(
    "bad",
    [
        {"estimator": "kernel_2d", "schedule": "theorem2_beta2"},
        {"estimator": "two_point", "schedule": "theorem1"},
        {"trials": 0},
        {"base_seed": None},
        {"budget": {"T0": 10, "T": 10}},
        {"problem": {"kind": "rosenbrock"}},
        {"init": "uniform"},
    ],
)
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        _small_cfg(**bad)


def test_unknown_field_and_schema_version():
    d = _small_cfg().to_dict()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**d, "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**d, "schema_version": 99})
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")


def test_config_hash_ignores_output_path():
    a = _small_cfg(output="/tmp/a")
    b = _small_cfg(output="/tmp/b")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != _small_cfg(base_seed=6).config_hash()


# --- execution ------------------------------------------------------------------


def test_iterations_from_budget():
    cfg = _small_cfg(budget={"T": 600})
    assert harness.iterations(cfg, harness.build_estimator(cfg)) == 101
    assert harness.iterations(_small_cfg(), harness.build_estimator(_small_cfg())) == 80


def test_two_point_schedule_uses_lipschitz_half():
    cfg = _small_cfg(n=1, estimator="two_point", schedule="theorem2_beta2")
    p = harness.build_problem(cfg)
    s = harness.build_schedule(cfg, p, harness.build_noise(cfg))
    assert s == Schedule("theorem2_beta2", alpha=1.0, beta=2.0, L=p.Lbar / 2, sigma=1.0, d=3)


def test_files_written_and_identical_across_pool_sizes(tmp_path, monkeypatch):
    cfg = _small_cfg()
    monkeypatch.setenv("DZO_THREADS", "1")
    harness.write_run(harness.execute(cfg), tmp_path / "one")
    monkeypatch.setenv("DZO_THREADS", "3")
    harness.write_run(harness.execute(cfg), tmp_path / "three")
    names = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert names == sorted(["trace_000.csv", "trace_001.csv", "trace_002.csv", "config.json", "summary.json",
                            "aggregate_error_vs_queries.csv", "aggregate_discrepancy_vs_t.csv",
                            "aggregate_opt_error_vs_T0.csv", "aggregate_tail_error_vs_T.csv"])
    for n in names:
        assert (tmp_path / "one" / n).read_bytes() == (tmp_path / "three" / n).read_bytes()
    summary = json.loads((tmp_path / "one" / "summary.json").read_text())
    assert summary["trials"] == 3 and summary["T0"] == 80 and summary["rho"] < 1


def test_trials_use_distinct_seeds():
    res = harness.execute(_small_cfg())
    csvs = [tr.to_csv() for tr in res.ensemble.traces]
    assert len(set(csvs)) == 3


def test_bump_comparison_config_echo():
    cfg = harness.appendix_e_config(25, "kernel_2d", trials=2, T=200_000)
    assert number(cfg.beta) == 3.0
    sched = harness.build_schedule(cfg, None, harness.build_noise(cfg))
    assert sched.h(64) == pytest.approx(64 ** (-1 / 6))
    assert sched.eta(5) == pytest.approx(2 / (2.0 * 5))
    np.testing.assert_allclose(harness.build_estimator(cfg).kernel.coeffs, [0, 75 / 4, 0, -105 / 4])
    assert harness.iterations(cfg, harness.build_estimator(cfg)) - 1 == 200_000 // 50
    two = harness.appendix_e_config(25, "two_point_kernel", T=200_000)
    assert harness.iterations(two, harness.build_estimator(two)) - 1 == 100_000
    assert harness.build_noise(cfg).params == {"lo": -5.0, "hi": 5.0}


@pytest.mark.parametrize("baseline", ["two_point_kernel", "two_point"])
def test_compare_charges_equal_budgets(tmp_path, baseline):
    cmp = harness.compare(3, trials=2, T=600, seed=1, baseline=baseline, out_dir=tmp_path)
    for r in cmp.results.values():
        assert {int(tr.queries[-1]) for tr in r.ensemble.traces} == {600}
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[0] == "method,queries,mean,std,n_trials"
    methods = {ln.split(",")[0] for ln in lines[1:]}
    assert methods == {"kernel_2d", baseline}
    assert cmp.ratio(baseline) > 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["kernel_2d"]["lambda_min_A"] >= 1.0


def test_sweep_over_dimension(tmp_path):
    rows = harness.sweep(_small_cfg(trials=2, checkpoints=()), "d", ["2", "4"], tmp_path)
    assert [r[0] for r in rows] == ["2", "4"]
    assert (tmp_path / "d_2" / "trace_001.csv").exists()
    assert (tmp_path / "summary.csv").read_text().startswith("d,T0,queries,final_mean,final_std,n_trials\n")
    with pytest.raises(ConfigError):
        harness.sweep(_small_cfg(), "alpha", [1], tmp_path)


# --- CLI ------------------------------------------------------------------------


def test_cli_topology_path(capsys):
    assert main(["topology", "--kind", "path", "--n", "3", "--gamma", "1"]) == 0
    out = capsys.readouterr().out
    assert "rho=0.5\n" in out
    assert "mixing assumptions: PASS" in out


def test_cli_topology_failure_exit_code(capsys):
    assert main(["topology", "--kind", "cycle", "--n", "10", "--gamma", "1"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_kernel(capsys):
    assert main(["kernel", "--beta", "2"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "coefficients [0, 3]"
    residuals = [float(v) for v in out[1].split()[2:]]
    assert max(residuals) <= 1e-10


def test_cli_run_missing_config(capsys):
    assert main(["run", "--config", "missing.json", "--out", "x"]) == 2
    assert "missing.json" in capsys.readouterr().err


def test_cli_run_malformed_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"schema_version": 1, "trials": 0}')
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    p.write_text("{")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_cli_unknown_flag():
    assert main(["kernel", "--gamma", "2"]) == 1


def test_cli_run_and_slopes(tmp_path, capsys):
    cfg = _small_cfg(budget={"T0": 300}, checkpoints=())
    p = tmp_path / "cfg.json"
    p.write_text(cfg.to_json())
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    capsys.readouterr()
    agg = tmp_path / "o" / "aggregate_discrepancy_vs_t.csv"
    assert main(["slopes", str(agg), "--lo", "30", "--hi", "300"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("slope=") and "points=271" in out
    assert main(["slopes", str(tmp_path / "nope.csv")]) == 2


def test_cli_run_is_byte_identical(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(_small_cfg().to_json())
    for name, threads in (("a", "1"), ("b", "2")):
        env = dict(os.environ, DZO_THREADS=threads)
        old = os.environ.copy()
        os.environ.update(env)
        try:
            assert main(["run", "--config", str(p), "--out", str(tmp_path / name)]) == 0
        finally:
            os.environ.clear()
            os.environ.update(old)
    for f in Path(tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
