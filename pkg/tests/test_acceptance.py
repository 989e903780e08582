"""End-to-end acceptance checks; each prints one PASS/FAIL line.

The heavy ensembles (criteria 6 to 8 and 10) run through the harness, so they
use the worker pool capped by DZO_THREADS.
"""

import math
import time

import numpy as np
import pytest

from dzo import harness, metrics, noise
from dzo.consensus import metropolis_weights, validate
from dzo.estimators import (
    EstimatorSpec,
    QueryOracle,
    ball_average,
    bias_check,
    sample_estimates,
    second_moment_check,
)
from dzo.kernel import legendre_kernel, moment_residuals
from dzo.metrics import fit_loglog, rate_slope
from dzo.problems import LinearObjective, PowerSumObjective
from dzo.topology import make_graph

pytestmark = pytest.mark.acceptance


def _grid(lo_exp, hi_exp, step=0.125):
    return tuple(int(v) for v in np.unique(np.round(10 ** np.arange(lo_exp, hi_exp + 1e-9, step))))


# --- 1 ---------------------------------------------------------------------------


def test_criterion_01_kernel_correctness(acceptance_report):
    t0 = time.perf_counter()
    worst, bound_ok = 0.0, True
    for beta in (2, 3, 4, 5, 6):
        k = legendre_kernel(beta)
        worst = max(worst, max(moment_residuals(k)))
        bound_ok &= k.kappa_beta() <= 2 * math.sqrt(2) * beta
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and bound_ok and elapsed < 1.0
    acceptance_report(1, "kernel moments and kappa_beta bound", ok,
                      f"max residual {worst:.1e}, {elapsed:.2f}s")
    assert ok


# --- 2 ---------------------------------------------------------------------------


def test_criterion_02_unbiased_on_linear_functions(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    k = legendre_kernel(2)
    spec = EstimatorSpec("kernel_2d", k)
    worst = 0.0
    failures = 0
    for d in (1, 5, 20):
        for _ in range(20):
            a = rng.standard_normal(d)
            x = rng.standard_normal(d)
            g = sample_estimates(spec, QueryOracle(LinearObjective(a, rng.standard_normal())), x, 0.5,
                                 100_000, rng)
            se = g.std(axis=0, ddof=1) / math.sqrt(g.shape[0])
            z = np.abs(g.mean(axis=0) - a) / se
            worst = max(worst, float(z.max()))
            failures += int(np.any(z > 3.0))
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 30
    acceptance_report(2, "kernel estimator unbiased on linear functions", ok,
                      f"60 functions, worst |mean - grad| = {worst:.2f} SE, {elapsed:.1f}s")
    assert ok


# --- 3 ---------------------------------------------------------------------------


def test_criterion_03_bias_bound_on_cubic(acceptance_report):
    t0 = time.perf_counter()
    f = PowerSumObjective(2, 3)  # sum x_i^3: remainder v^3, so L = 1 at beta = 3
    k = legendre_kernel(2)
    x = np.array([0.1, -0.2])
    rng = np.random.default_rng(3)
    hs = (0.5, 0.25, 0.125)
    biases, within = [], True
    for h in hs:
        res = bias_check(f, x, h, k, 1_000_000, rng, beta=3.0, L=1.0)
        within &= res["passed"]
        biases.append(res["bias_norm"])
    slope, _ = fit_loglog(hs, biases)
    elapsed = time.perf_counter() - t0
    ok = within and abs(slope - 2.0) <= 0.2 and elapsed < 60
    acceptance_report(3, "bias within L kappa_beta sqrt(d) h^(beta-1)", ok,
                      f"bias-vs-h slope {slope:.3f}, {elapsed:.1f}s")
    assert ok


# --- 4 ---------------------------------------------------------------------------


def test_criterion_04_second_moment(acceptance_report):
    t0 = time.perf_counter()
    res = second_moment_check(LinearObjective([0.0]), np.zeros(1), 1.0, legendre_kernel(2), noise.gaussian(1.0),
                              1_000_000, np.random.default_rng(4), noise_rng=np.random.default_rng(40))
    elapsed = time.perf_counter() - t0
    near = abs(res["m2"] - 1.5) <= 3 * res["se"]
    # the expectation-convention bound (4.5) is the smaller of the two, so it is the one checked
    ok = near and res["m2"] <= res["bound_expectation"] and elapsed < 10
    acceptance_report(4, "second moment of pure-noise estimate", ok,
                      f"E||g||^2 = {res['m2']:.4f} +/- {res['se']:.4f}, bound {res['bound_expectation']}, "
                      f"{elapsed:.1f}s")
    assert ok


# --- 5 ---------------------------------------------------------------------------


def test_criterion_05_contraction(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    violations, done = 0, 0
    while done < 1000:
        n = int(rng.integers(2, 11))
        g = make_graph("erdos_renyi", n, p=float(rng.uniform(0.2, 1.0)), seed=int(rng.integers(2**31)))
        cm = metropolis_weights(g, gamma=float(rng.uniform(1.0, 4.0)))
        if not validate(cm).passed:
            continue
        d = int(rng.integers(1, 9))
        U = rng.standard_normal((n, d)) * rng.uniform(0.1, 10)
        X = cm.W @ U
        lhs = np.sum((X - X.mean(axis=0)) ** 2)
        rhs = cm.rho**2 * np.sum((U - U.mean(axis=0)) ** 2)
        violations += int(lhs > rhs * (1 + 1e-12))
        done += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 5
    acceptance_report(5, "consensus contraction by rho^2", ok, f"{violations} violations, {elapsed:.2f}s")
    assert ok


# --- 6 and 7 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def cycle_ensemble():
    cfg = harness.RunConfig(
        problem={"kind": "quadratic_benchmark", "seed": 1}, topology={"kind": "cycle"}, gamma=2.0,
        estimator="kernel_2d", schedule="theorem1", noise={"kind": "gaussian", "sigma": 1.0},
        budget={"T0": 10_000}, n=10, d=5, beta=2.0, alpha=1.0, trials=20, base_seed=7,
        checkpoints=_grid(2, 4),
    )
    return harness.execute(cfg).ensemble


def test_criterion_06_discrepancy_rate(cycle_ensemble, acceptance_report):
    res = rate_slope(cycle_ensemble, "discrepancy_vs_t", window=(100, 10_000))
    ok = res["slope"] <= -1.25
    acceptance_report(6, "mean discrepancy decays at least like t^-1.25", ok,
                      f"slope {res['slope']:.3f} +/- {res['stderr']:.3f} over t in [1e2, 1e4]")
    assert ok


def test_criterion_07_optimization_error_rate(cycle_ensemble, acceptance_report):
    Ts, _, _ = cycle_ensemble.aggregate("opt_error_vs_T0")
    for T in (100, 316, 1000, 3162, 10_000):
        assert T in Ts
    res = rate_slope(cycle_ensemble, "opt_error_vs_T0", window=(100, 10_000))
    ok = abs(res["slope"] + 0.5) <= 0.15
    acceptance_report(7, "optimisation error of xhat decays like T0^-1/2", ok,
                      f"slope {res['slope']:.3f} +/- {res['stderr']:.3f} over {res['points']} values of T0")
    assert ok


# --- 8 ---------------------------------------------------------------------------


def test_criterion_08_two_point_rate(acceptance_report):
    cfg = harness.RunConfig(
        problem={"kind": "quadratic_benchmark", "seed": 2}, estimator="two_point", schedule="theorem2_beta2",
        noise={"kind": "gaussian", "sigma": 1.0}, budget={"T0": 100_000}, n=1, d=5, beta=2.0, alpha=1.0,
        trials=20, base_seed=8, checkpoints=_grid(3, 5),
    )
    ens = harness.execute(cfg).ensemble
    res = rate_slope(ens, "tail_error_vs_T", window=(1_000, 100_000))
    ok = abs(res["slope"] + 0.5) <= 0.15
    acceptance_report(8, "two-point tail-average error decays like T^-1/2", ok,
                      f"slope {res['slope']:.3f} +/- {res['stderr']:.3f}")
    assert ok


# --- 9 ---------------------------------------------------------------------------


def test_criterion_09_surrogate(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    h = 0.3
    worst_z, gap_ok = 0.0, True
    for d in (2, 3):
        # quartic on the unit ball; probes reach radius 1 + h
        f = PowerSumObjective(d, 4, radius=1.0 + h)
        L = f.constants.L
        x = rng.uniform(-0.5, 0.5, d)
        grad_hat = ball_average(f.true_gradient, x, h)
        g = sample_estimates(EstimatorSpec("two_point"), QueryOracle(f), x, h, 1_000_000, rng)
        se = g.std(axis=0, ddof=1) / math.sqrt(g.shape[0])
        worst_z = max(worst_z, float(np.max(np.abs(g.mean(axis=0) - grad_hat) / se)))
        for _ in range(100):
            y = rng.standard_normal(d)
            y *= rng.random() ** (1 / d) / np.linalg.norm(y)
            gap_ok &= abs(ball_average(f.evaluate, y, h) - f.evaluate(y)) <= L * h**2
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 3.0 and gap_ok and elapsed < 60
    acceptance_report(9, "two-point estimate unbiased for the ball-smoothed surrogate", ok,
                      f"worst deviation {worst_z:.2f} SE, |Fhat - F| <= L h^2: {gap_ok}, {elapsed:.1f}s")
    assert ok


# --- 10 --------------------------------------------------------------------------


def test_criterion_10_high_dimension_ordering(acceptance_report):
    t0 = time.perf_counter()
    base = "two_point_kernel"
    cmp25 = harness.reproduce_appendix_e(25, trials=40, T=200_000, seed=0, baseline=base)
    cmp100 = harness.reproduce_appendix_e(100, trials=40, T=200_000, seed=0, baseline=base)
    e25, e100 = cmp25.final_errors(), cmp100.final_errors()
    r25, r100 = cmp25.ratio(base), cmp100.ratio(base)
    ok = e25["kernel_2d"] <= e25[base] and r100 > r25
    elapsed = time.perf_counter() - t0
    acceptance_report(
        10, "kernel method ahead of two-point at equal budget, more so in higher d", ok,
        f"d=25: kernel {e25['kernel_2d']:.4g} vs {e25[base]:.4g} (ratio {r25:.3f}); "
        f"d=100: kernel {e100['kernel_2d']:.4g} vs {e100[base]:.4g} (ratio {r100:.3f}); {elapsed / 60:.1f} min",
    )
    assert ok


# --- 11 --------------------------------------------------------------------------


def test_criterion_11_determinism(tmp_path, monkeypatch, acceptance_report):
    t0 = time.perf_counter()
    cfg = harness.RunConfig(
        problem={"kind": "quadratic_benchmark", "seed": 3}, topology={"kind": "erdos_renyi", "p": 0.5, "seed": 1},
        gamma=1.5, noise={"kind": "uniform", "lo": -1.0, "hi": 1.0}, budget={"T": 8_000}, n=8, d=4,
        trials=4, base_seed=11, init="gaussian", checkpoints=(10, 100, 1000),
    )
    outputs = []
    for i, threads in enumerate(("1", "1", "4")):
        monkeypatch.setenv("DZO_THREADS", threads)
        out = harness.write_run(harness.execute(cfg), tmp_path / f"run{i}")
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outputs[0] == outputs[1] == outputs[2]
    elapsed = time.perf_counter() - t0
    acceptance_report(11, "byte-identical output across reruns and pool sizes", ok,
                      f"{len(outputs[0])} files x 3 runs, {elapsed:.1f}s")
    assert ok


def test_slopes_use_a_plain_log_log_fit():
    # guard: rate_slope is an OLS fit of log mean on log x, nothing more
    assert metrics.fit_loglog([1, 10, 100], [1, 0.1, 0.01])[0] == pytest.approx(-1.0)
