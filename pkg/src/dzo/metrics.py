"""Regret, optimisation error and empirical rate exponents over run ensembles."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .problems import project

METRICS = ("opt_error_vs_T0", "tail_error_vs_T", "discrepancy_vs_t", "error_vs_queries")


def cumulative_regret(trace, p, x):
    """sum_t f(xbar(t)) - f(x) over the recorded trajectory."""
    x = np.asarray(x, dtype=float)
    if not np.allclose(project(p.theta, x), x, atol=1e-12):
        raise ValueError("comparison point must lie in the feasible set")
    return float(np.sum(trace.f_xbar - p.f(x)))


def optimization_error(point, p):
    if p.f_star is None:
        raise ValueError("problem has no reference minimiser; solve it first")
    return float(p.f(np.asarray(point, dtype=float)) - p.f_star)


class _Welford:
    def __init__(self, shape):
        self.k = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def push(self, v):
        self.k += 1
        delta = v - self.mean
        self.mean = self.mean + delta / self.k
        self.m2 = self.m2 + delta * (v - self.mean)

    @property
    def std(self):
        if self.k < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.k - 1))


def _series(trace, metric):
    """(x, y) pairs of one trace for a metric name."""
    if metric == "discrepancy_vs_t":
        return trace.t.astype(float), trace.discrepancy
    if metric == "error_vs_queries":
        return trace.queries.astype(float), trace.opt_gap
    if metric in ("opt_error_vs_T0", "tail_error_vs_T"):
        key = "xhat_error" if metric == "opt_error_vs_T0" else "xtilde_error"
        Ts = sorted(trace.checkpoints)
        if not Ts:
            raise ValueError("trace has no checkpoints; run with checkpoints=...")
        return np.array(Ts, dtype=float), np.array([trace.checkpoints[T][key] for T in Ts])
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass
class TrialEnsemble:
    traces: list
    config_hash: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.traces:
            raise ValueError("empty ensemble")
        T0s = {tr.T0 for tr in self.traces}
        if len(T0s) != 1:
            raise ValueError(f"traces disagree on T0: {sorted(T0s)}")
        hashes = {tr.meta.get("config_hash") for tr in self.traces}
        if len(hashes) > 1:
            raise ValueError("traces come from different configurations")

    @property
    def n_trials(self):
        return len(self.traces)

    def aggregate(self, metric):
        """x grid, per-point mean and standard deviation across trials."""
        if metric not in self._cache:
            xs, first = _series(self.traces[0], metric)
            acc = _Welford(first.shape)
            for tr in self.traces:
                x, y = _series(tr, metric)
                if not np.array_equal(x, xs):
                    raise ValueError("traces have different grids for this metric")
                acc.push(np.asarray(y, dtype=float))
            self._cache[metric] = (xs, acc.mean, acc.std)
        return self._cache[metric]

    def to_csv(self, metric):
        xs, mean, std = self.aggregate(metric)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean", "std", "n_trials"])
        for x, m, s in zip(xs, mean, std):
            w.writerow([int(x), repr(float(m)), repr(float(s)), self.n_trials])
        return buf.getvalue()


def fit_loglog(x, y):
    """OLS slope of log y on log x with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a slope with an error bar")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("log-log fit needs strictly positive values; widen the ensemble")
    lx, ly = np.log(x), np.log(y)
    lxm = lx - lx.mean()
    sxx = float(lxm @ lxm)
    slope = float(lxm @ (ly - ly.mean()) / sxx)
    resid = ly - ly.mean() - slope * lxm
    dof = x.size - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return slope, stderr


def rate_slope(ensemble, metric, window=None, min_points=10):
    """Log-log slope of the trial-mean metric over ``window`` = (lo, hi).

    Without a window the first 10% of the horizon is dropped as transient.
    """
    xs, mean, _ = ensemble.aggregate(metric)
    if window is None:
        window = (0.1 * xs.max(), xs.max())
    lo, hi = window
    keep = (xs >= lo) & (xs <= hi)
    if keep.sum() < min_points:
        raise ValueError(f"window {window} holds {int(keep.sum())} points; need {min_points}")
    y = mean[keep]
    if np.any(y <= 0):
        raise ValueError("metric is not positive over the window; widen the ensemble")
    slope, stderr = fit_loglog(xs[keep], y)
    return {"slope": slope, "stderr": stderr, "points": int(keep.sum())}
