"""Run configurations, trial orchestration and result files.

A run is described by a JSON ``RunConfig``; its trials are seeded
``(base_seed, trial_index)`` and may execute in a process pool capped by the
``DZO_THREADS`` environment variable.  Results are collected in trial order,
so every file written is identical whatever the pool size.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import consensus, engine, estimators, kernel, metrics, noise, problems, topology

SCHEMA_VERSION = 1

PROBLEM_KINDS = ("quadratic_benchmark", "quadratic", "appendix_e")

# estimator -> schedules it may run with
COMPATIBLE = {
    "kernel_2d": ("theorem1", "corollary_local"),
    "two_point_kernel": ("theorem1", "corollary_local"),
    "two_point": ("theorem2_beta2",),
    "oracle_gradient": ("theorem1", "corollary_local"),
}


class ConfigError(ValueError):
    pass


def number(v):
    """Decode a config number: plain JSON number, decimal string or {"log10": x}."""
    if isinstance(v, dict):
        if set(v) != {"log10"}:
            raise ConfigError(f"number objects must be {{'log10': x}}, got {v!r}")
        return 10.0 ** float(v["log10"])
    if isinstance(v, str):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"not a number: {v!r}")
    return float(v)


@dataclass(frozen=True)
class RunConfig:
    problem: dict = field(default_factory=lambda: {"kind": "quadratic_benchmark"})
    topology: dict = field(default_factory=lambda: {"kind": "complete"})
    gamma: object = 1.0
    estimator: str = "kernel_2d"
    schedule: str = "theorem1"
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    budget: dict = field(default_factory=lambda: {"T0": 1000})
    n: int = 1
    d: int = 2
    beta: object = 2.0
    alpha: object = 1.0
    trials: int = 1
    base_seed: int | None = 0
    output: str | None = None
    init: str = "zero"
    checkpoints: tuple = ()
    schedule_L: object = None

    def __post_init__(self):
        if self.base_seed is None:
            raise ConfigError("base_seed must be set")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if self.estimator not in COMPATIBLE:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.schedule not in COMPATIBLE[self.estimator]:
            raise ConfigError(
                f"estimator {self.estimator} cannot run with schedule {self.schedule}; "
                f"allowed: {', '.join(COMPATIBLE[self.estimator])}"
            )
        if self.problem.get("kind") not in PROBLEM_KINDS:
            raise ConfigError(f"problem kind must be one of {PROBLEM_KINDS}")
        if len(self.budget) != 1 or next(iter(self.budget)) not in ("T0", "T"):
            raise ConfigError("budget must be {'T0': ...} or {'T': ...}")
        if self.init not in ("zero", "gaussian"):
            raise ConfigError("init must be 'zero' or 'gaussian'")
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))

    # -- serialisation ----------------------------------------------------------------

    def to_dict(self):
        out = {"schema_version": SCHEMA_VERSION}
        for k, v in asdict(self).items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        if "checkpoints" in d:
            d["checkpoints"] = tuple(d["checkpoints"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config JSON: {e}") from e

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def config_hash(self):
        body = self.to_dict()
        body.pop("output")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# building blocks from a config


def build_problem(cfg):
    spec = dict(cfg.problem)
    kind = spec.pop("kind")
    alpha = number(cfg.alpha)
    if kind == "quadratic_benchmark":
        return problems.quadratic_benchmark(
            cfg.n, cfg.d, alpha=alpha, seed=int(spec.get("seed", 0)),
            radius=number(spec.get("radius", 1.0)), spread=number(spec.get("spread", 0.3)),
            density=number(spec.get("density", 0.3)),
        )
    if kind == "quadratic":
        A = np.eye(cfg.d) if "A" not in spec else np.asarray(spec["A"], dtype=float)
        center = spec.get("center")
        radius = number(spec.get("radius", 1.0))
        f = problems.quadratic_objective(A, alpha, center=center, radius=radius)
        p = problems.ProblemInstance((f,) * cfg.n, alpha=alpha, theta=problems.ball(cfg.d, radius))
        return problems.solve_reference_minimizer(p)
    # bump-perturbed quadratic
    A = problems.random_sparse_pd(cfg.d, number(spec.get("density", 0.1)), seed=int(spec.get("seed", 0)))
    f = problems.appendix_e_objective(
        alpha, number(spec.get("L", {"log10": 7.5})), number(spec.get("h", 1e-3)),
        number(spec.get("a", 10.0)), A,
    )
    p = problems.ProblemInstance((f,) * cfg.n, alpha=alpha, theta=problems.ball_cap_nonpositive(cfg.d))
    return problems.solve_reference_minimizer(p)


def build_consensus(cfg):
    if cfg.n == 1:
        return consensus.complete_mixing(1)
    spec = dict(cfg.topology)
    kind = spec.get("kind", "complete")
    if kind == "complete_mixing":
        return consensus.complete_mixing(cfg.n)
    g = topology.make_graph(kind, cfg.n, p=spec.get("p"), seed=spec.get("seed"))
    return consensus.metropolis_weights(g, gamma=number(cfg.gamma))


def build_noise(cfg):
    spec = dict(cfg.noise)
    kind = spec.pop("kind", "none")
    return noise.NoiseModel(kind, {k: number(v) for k, v in spec.items()})


def build_estimator(cfg):
    if cfg.estimator in ("kernel_2d", "two_point_kernel"):
        return estimators.EstimatorSpec(cfg.estimator, kernel.legendre_kernel(number(cfg.beta)))
    return estimators.EstimatorSpec(cfg.estimator)


def build_schedule(cfg, problem, nz):
    alpha = number(cfg.alpha)
    if cfg.schedule != "theorem2_beta2":
        return engine.Schedule(cfg.schedule, alpha=alpha, beta=number(cfg.beta))
    # a C^{1,1} function sits in the beta = 2 class with constant Lbar / 2
    L = number(cfg.schedule_L) if cfg.schedule_L is not None else problem.Lbar / 2.0
    return engine.Schedule("theorem2_beta2", alpha=alpha, beta=2.0, L=L, sigma=nz.sigma, d=cfg.d)


def iterations(cfg, est):
    """T0 for the run: given directly, or one more than the calls a budget T buys."""
    key, val = next(iter(cfg.budget.items()))
    if key == "T0":
        return int(number(val))
    return engine.budget_to_iterations(int(number(val)), est, cfg.d) + 1


# ---------------------------------------------------------------------------
# execution


def _worker_count(trials):
    env = os.environ.get("DZO_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, trials))


def _trial(job):
    problem, cm, est, sched, nz, T0, seed, init, checkpoints = job
    return engine.run(problem, cm, est, sched, nz, T0=T0, seed=seed, init=init, checkpoints=checkpoints)


def run_trials(jobs, workers=None):
    """Run independent trial jobs; results come back in job order."""
    workers = _worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    if workers == 1:
        return [_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial, jobs))


@dataclass
class RunResult:
    config: RunConfig
    ensemble: metrics.TrialEnsemble
    problem: problems.ProblemInstance
    rho: float

    def summary(self):
        finals = np.array([tr.opt_gap[-1] for tr in self.ensemble.traces])
        xhat = np.array([problem_error(self.problem, tr.outputs["xhat"]) for tr in self.ensemble.traces])
        xtil = np.array([problem_error(self.problem, tr.outputs["xtilde"]) for tr in self.ensemble.traces])
        out = {
            "config_hash": self.config.config_hash(),
            "trials": self.ensemble.n_trials,
            "T0": self.ensemble.traces[0].T0,
            "queries_per_agent": int(self.ensemble.traces[0].queries[-1]),
            "rho": self.rho,
            "f_star": self.problem.f_star,
            "final_error": _stats(finals),
            "xhat_error": _stats(xhat),
            "xtilde_error": _stats(xtil),
        }
        lam = getattr(self.problem.locals[0], "lambda_min", None)
        if lam is not None:
            out["lambda_min_A"] = lam
        return out


def problem_error(p, x):
    return float(p.f(x) - p.f_star)


def _stats(v):
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


def execute(cfg, workers=None):
    """Build everything a config names and run all its trials."""
    problem = build_problem(cfg)
    cm = build_consensus(cfg)
    rep = consensus.validate(cm)
    if not rep.passed:
        raise ConfigError(f"consensus matrix fails: {', '.join(rep.failures())}")
    nz = build_noise(cfg)
    est = build_estimator(cfg)
    sched = build_schedule(cfg, problem, nz)
    T0 = iterations(cfg, est)
    jobs = [
        (problem, cm, est, sched, nz, T0, (int(cfg.base_seed), k), cfg.init, cfg.checkpoints)
        for k in range(int(cfg.trials))
    ]
    traces = run_trials(jobs, workers)
    h = cfg.config_hash()
    for tr in traces:
        tr.meta["config_hash"] = h
    return RunResult(cfg, metrics.TrialEnsemble(traces, config_hash=h), problem, cm.rho)


def write_run(result, out_dir):
    """trace_###.csv per trial, aggregate_<metric>.csv, config.json and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, tr in enumerate(result.ensemble.traces):
        _write(out / f"trace_{k:03d}.csv", tr.to_csv())
    mlist = ["error_vs_queries", "discrepancy_vs_t"]
    if result.config.checkpoints:
        mlist += ["opt_error_vs_T0", "tail_error_vs_T"]
    for m in mlist:
        _write(out / f"aggregate_{m}.csv", result.ensemble.to_csv(m))
    _write(out / "config.json", result.config.to_json())
    _write(out / "summary.json", json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return out


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# kernel vs two-point at equal budget


def appendix_e_config(d, method, trials=40, T=200_000, seed=0, density=0.1):
    """Single-agent run of the bump-perturbed quadratic with the published constants.

    ``method`` is ``kernel_2d`` or a two-point baseline: ``two_point_kernel``
    (kernel-weighted, same step and bandwidth schedule) or ``two_point``
    (plain sphere direction with its own beta = 2 schedule).
    """
    sched = "theorem2_beta2" if method == "two_point" else "theorem1"
    return RunConfig(
        problem={"kind": "appendix_e", "L": {"log10": 7.5}, "h": 1e-3, "a": 10.0,
                 "density": density, "seed": seed},
        estimator=method, schedule=sched, noise={"kind": "uniform", "lo": -5.0, "hi": 5.0},
        budget={"T": int(T)}, n=1, d=int(d), beta=3.0, alpha=2.0, trials=int(trials),
        base_seed=int(seed), init="gaussian",
    )


@dataclass
class Comparison:
    d: int
    T: int
    results: dict  # method -> RunResult

    def final_errors(self):
        return {m: r.summary()["final_error"]["mean"] for m, r in self.results.items()}

    def ratio(self, baseline):
        """baseline error / kernel error; above 1 means the kernel method is ahead."""
        e = self.final_errors()
        return e[baseline] / e["kernel_2d"]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "queries", "mean", "std", "n_trials"])
        for m, r in self.results.items():
            q, mean, std = r.ensemble.aggregate("error_vs_queries")
            for qi, mi, si in zip(q, mean, std):
                w.writerow([m, int(qi), repr(float(mi)), repr(float(si)), r.ensemble.n_trials])
        return buf.getvalue()


def compare(d, trials=40, T=200_000, seed=0, baseline="two_point_kernel", density=0.1,
            workers=None, out_dir=None):
    """kernel_2d against a two-point baseline at the same query budget T."""
    if baseline not in ("two_point_kernel", "two_point"):
        raise ConfigError("baseline must be two_point_kernel or two_point")
    results = {}
    for method in ("kernel_2d", baseline):
        cfg = appendix_e_config(d, method, trials, T, seed, density)
        results[method] = execute(cfg, workers)
    spent = {m: {int(tr.queries[-1]) for tr in r.ensemble.traces} for m, r in results.items()}
    if any(s != {int(T)} for s in spent.values()):
        raise AssertionError(f"methods did not spend the same budget {T}: {spent}")
    cmp = Comparison(int(d), int(T), results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "comparison.csv", cmp.to_csv())
        summary = {m: r.summary() for m, r in results.items()}
        summary["ratio_baseline_over_kernel"] = cmp.ratio(baseline)
        _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return cmp


def reproduce_appendix_e(d, trials=40, T=200_000, seed=0, **kw):
    return compare(d, trials=trials, T=T, seed=seed, **kw)


# ---------------------------------------------------------------------------
# sweeps and slopes

SWEEP_AXES = ("d", "n", "topology")


def sweep(cfg, axis, values, out_dir, workers=None):
    """One run per value of ``axis``; a directory per cell plus summary.csv."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    out = Path(out_dir)
    rows = []
    for v in values:
        if axis == "topology":
            cell = replace(cfg, topology={**cfg.topology, "kind": str(v)})
        else:
            cell = replace(cfg, **{axis: int(v)})
        res = execute(cell, workers)
        write_run(res, out / f"{axis}_{v}")
        s = res.summary()
        rows.append([str(v), s["T0"], s["queries_per_agent"], repr(s["final_error"]["mean"]),
                     repr(s["final_error"]["std"]), s["trials"]])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "T0", "queries", "final_mean", "final_std", "n_trials"])
    w.writerows(rows)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "summary.csv", buf.getvalue())
    return rows


def read_aggregate(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t", "mean"} <= set(rows[0]):
        raise ConfigError(f"{path} is not an aggregate CSV")
    return np.array([float(r["t"]) for r in rows]), np.array([float(r["mean"]) for r in rows])


def slope_from_csv(path, window=None, min_points=10):
    """Log-log slope of a stored aggregate over an optional (lo, hi) window."""
    x, y = read_aggregate(path)
    if window is None:
        window = (0.1 * x.max(), x.max())
    keep = (x >= window[0]) & (x <= window[1])
    if keep.sum() < min_points:
        raise ValueError(f"window {window} holds {int(keep.sum())} points; need {min_points}")
    slope, stderr = metrics.fit_loglog(x[keep], y[keep])
    return {"slope": slope, "stderr": stderr, "points": int(keep.sum())}
