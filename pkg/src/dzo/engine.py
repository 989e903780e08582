"""Distributed zero-order projected gradient descent.

Each iteration every agent estimates the gradient of its own local objective
from noisy queries, takes a projected step, and then all agents replace their
state by a W-weighted average of the neighbours' projected points.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .consensus import validate
from .estimators import EstimatorSpec, QueryOracle
from .noise import NoiseModel
from .problems import project

SCHEDULE_KINDS = ("theorem1", "corollary_local", "theorem2_beta2")


@dataclass(frozen=True)
class Schedule:
    """Step sizes eta_t and bandwidths h_t.

    theorem1:        eta = 2/(alpha t),      h = t^(-1/(2 beta))
    corollary_local: eta = 4/(alpha (t+1)),  h = t^(-1/(2 beta))
    theorem2_beta2:  eta = 1/(alpha t),      h = (3 d^2 s^2 / (2 L alpha t + 9 L^2 d^2))^(1/4)
    """

    kind: str
    alpha: float
    beta: float = 2.0
    L: float | None = None
    sigma: float | None = None
    d: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "theorem2_beta2":
            if self.L is None or self.sigma is None or self.d is None:
                raise ValueError("theorem2_beta2 needs L, sigma and d")
            if self.L <= 0 or self.sigma <= 0:
                raise ValueError("theorem2_beta2 needs L > 0 and sigma > 0 (h_t would vanish)")

    def eta(self, t):
        if self.kind == "theorem1":
            return 2.0 / (self.alpha * t)
        if self.kind == "corollary_local":
            return 4.0 / (self.alpha * (t + 1))
        return 1.0 / (self.alpha * t)

    def h(self, t):
        if self.kind == "theorem2_beta2":
            d2 = self.d * self.d
            num = 3.0 * d2 * self.sigma**2
            den = 2.0 * self.L * self.alpha * t + 9.0 * self.L**2 * d2
            return (num / den) ** 0.25
        return t ** (-1.0 / (2.0 * self.beta))


def mean_discrepancy(states):
    X = np.asarray(states, dtype=float)
    if X.size == 0:
        raise ValueError("need at least one state")
    X = X.reshape(X.shape[0], -1)
    return float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))


def budget_to_iterations(T, est, d):
    """Estimator calls affordable with T queries per agent."""
    q = est.queries_per_call(d)
    if q == 0:
        raise ValueError("oracle_gradient spends no queries; budgets do not apply")
    if T < q:
        raise ValueError(f"budget T={T} is below one estimator call ({q} queries)")
    if T % q:
        warnings.warn(f"budget {T} is not a multiple of {q}; {T % q} queries left unused")
    return T // q


class StreamingEstimators:
    """Running averages that make up the outputs of a run of length T0.

    xhat:       uniform average of xbar(1..T0)
    xhat_local: per agent, 2/(T0(T0+1)) sum_t t x^i(t)
    xtilde:     average of xbar(t) for t = floor(T0/2)+1 .. T0
    """

    def __init__(self, T0, n, d, checkpoints=()):
        self.T0 = T0
        self.sum_xbar = np.zeros(d)
        self.sum_weighted = np.zeros((n, d))
        self.tail_sum = np.zeros(d)
        self.tail_start = T0 // 2 + 1
        self.last_xbar = None
        self.checkpoints = sorted({int(c) for c in checkpoints if 1 <= c <= T0})
        self._needed = set(self.checkpoints) | {c // 2 for c in self.checkpoints}
        self.prefix = {0: np.zeros(d)}

    def update(self, t, X, xbar):
        self.sum_xbar += xbar
        self.sum_weighted += t * X
        if t >= self.tail_start:
            self.tail_sum += xbar
        if t in self._needed:
            self.prefix[t] = self.sum_xbar.copy()
        self.last_xbar = xbar

    def xhat_at(self, T):
        return self.prefix[T] / T

    def xtilde_at(self, T):
        half = T // 2
        return (self.prefix[T] - self.prefix[half]) / (T - half)

    def finalize(self):
        T0 = self.T0
        if T0 < 2:
            raise ValueError("xtilde needs T0 >= 2")
        return {
            "xbar_T0": self.last_xbar.copy(),
            "xhat": self.sum_xbar / T0,
            "xhat_local": self.sum_weighted * (2.0 / (T0 * (T0 + 1))),
            "xtilde": self.tail_sum / (T0 - T0 // 2),
        }


@dataclass
class RunTrace:
    t: np.ndarray
    queries: np.ndarray
    f_xbar: np.ndarray
    discrepancy: np.ndarray
    dist_xbar_xstar: np.ndarray
    outputs: dict
    checkpoints: dict = field(default_factory=dict)
    f_star: float | None = None
    queries_per_call: int = 0
    meta: dict = field(default_factory=dict)
    xbar: np.ndarray | None = None

    CSV_COLUMNS = ("t", "queries", "f_xbar_minus_fstar", "discrepancy", "dist_xbar_xstar")

    @property
    def T0(self):
        return int(self.t[-1])

    @property
    def opt_gap(self):
        fs = np.nan if self.f_star is None else self.f_star
        return self.f_xbar - fs

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        gap = self.opt_gap
        for k in range(self.t.size):
            w.writerow([
                int(self.t[k]),
                int(self.queries[k]),
                repr(float(gap[k])),
                repr(float(self.discrepancy[k])),
                repr(float(self.dist_xbar_xstar[k])),
            ])
        return buf.getvalue()

    def to_dict(self):
        return {
            "meta": self.meta,
            "f_star": self.f_star,
            "queries_per_call": self.queries_per_call,
            "t": self.t.tolist(),
            "queries": self.queries.tolist(),
            "f_xbar": self.f_xbar.tolist(),
            "discrepancy": self.discrepancy.tolist(),
            "dist_xbar_xstar": self.dist_xbar_xstar.tolist(),
            "outputs": {k: np.asarray(v).tolist() for k, v in self.outputs.items()},
            "checkpoints": {str(k): v for k, v in self.checkpoints.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(
            t=np.asarray(d["t"], dtype=int),
            queries=np.asarray(d["queries"], dtype=int),
            f_xbar=np.asarray(d["f_xbar"], dtype=float),
            discrepancy=np.asarray(d["discrepancy"], dtype=float),
            dist_xbar_xstar=np.asarray(d["dist_xbar_xstar"], dtype=float),
            outputs={k: np.asarray(v) for k, v in d["outputs"].items()},
            checkpoints={int(k): v for k, v in d.get("checkpoints", {}).items()},
            f_star=d.get("f_star"),
            queries_per_call=d.get("queries_per_call", 0),
            meta=d.get("meta", {}),
        )


def output_estimators(trace):
    return {k: trace.outputs[k] for k in ("xbar_T0", "xhat", "xhat_local", "xtilde")}


class InvariantViolation(AssertionError):
    pass


def _mix(W, U):
    # fixed k-ascending accumulation keeps the arithmetic order reproducible
    out = W[:, 0:1] * U[0]
    for k in range(1, U.shape[0]):
        out = out + W[:, k:k + 1] * U[k]
    return out


def agent_streams(seed, n, noise_seed=None):
    """Independent generators: estimation (r, zeta) and noise per agent, plus init."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    nentropy = entropy if noise_seed is None else (
        list(noise_seed) if isinstance(noise_seed, (tuple, list)) else noise_seed
    )
    est = [np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(0, i))) for i in range(n)]
    noi = [np.random.default_rng(np.random.SeedSequence(nentropy, spawn_key=(1, i))) for i in range(n)]
    init = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(2,)))
    return est, noi, init


def initial_point(problem, init, rng):
    if isinstance(init, str):
        if init == "zero":
            return project(problem.theta, np.zeros(problem.dim))
        if init == "gaussian":
            return project(problem.theta, rng.standard_normal(problem.dim))
        raise ValueError(f"unknown init {init!r}")
    x0 = np.asarray(init, dtype=float)
    if x0.shape != (problem.dim,):
        raise ValueError("explicit x0 has the wrong shape")
    return x0


def _check_compatible(est, sched):
    if sched.kind == "theorem2_beta2" and est.kind != "two_point":
        raise ValueError("theorem2_beta2 schedule requires the two_point estimator")
    if est.kind == "two_point" and sched.kind != "theorem2_beta2":
        raise ValueError("two_point estimator runs with the theorem2_beta2 schedule")
    if est.kind == "two_point_kernel" and sched.kind == "theorem2_beta2":
        raise ValueError("two_point_kernel runs with the theorem1 or corollary_local schedule")


def run(problem, cm, est, sched, noise=None, T0=1000, seed=0, *, noise_seed=None,
        init="zero", checkpoints=(), check_invariants=False, record_xbar=False,
        record_states=None):
    """Run T0 - 1 iterations and return the trace of x(1), ..., x(T0).

    ``check_invariants`` asserts, every iteration, feasibility, the consensus
    contraction, the projection-residual bound and the average dynamics.
    ``record_states`` may be a list; the full (n, d) state is appended to it
    at every t.
    """
    if T0 < 2:
        raise ValueError("T0 must be >= 2")
    noise = noise if noise is not None else NoiseModel("none")
    report = validate(cm)
    if not report.passed:
        raise ValueError(f"consensus matrix fails: {', '.join(report.failures())}")
    n, d = problem.n, problem.dim
    if cm.n != n:
        raise ValueError(f"W is {cm.n}x{cm.n} but the problem has {n} agents")
    _check_compatible(est, sched)

    est_rngs, noise_rngs, init_rng = agent_streams(seed, n, noise_seed)
    oracles = [QueryOracle(f, noise, noise_rngs[i]) for i, f in enumerate(problem.locals)]
    W = np.asarray(cm.W)
    rho = cm.rho
    theta = problem.theta
    qpc = est.queries_per_call(d)

    X = np.tile(initial_point(problem, init, init_rng), (n, 1))
    stream = StreamingEstimators(T0, n, d, checkpoints)
    f_xbar = np.empty(T0)
    disc = np.empty(T0)
    dist = np.full(T0, np.nan)
    xbar_hist = np.empty((T0, d)) if record_xbar else None
    x_star = problem.x_star

    def record(t):
        xbar = X.mean(axis=0)
        f_xbar[t - 1] = problem.f(xbar)
        disc[t - 1] = float(np.mean(np.sum((X - xbar) ** 2, axis=1)))
        if x_star is not None:
            dist[t - 1] = float(np.linalg.norm(xbar - x_star))
        if xbar_hist is not None:
            xbar_hist[t - 1] = xbar
        if record_states is not None:
            record_states.append(X.copy())
        stream.update(t, X, xbar)

    record(1)
    G = np.empty((n, d))
    for t in range(1, T0):
        eta, h = sched.eta(t), sched.h(t)
        for i in range(n):
            G[i] = est.estimate(oracles[i], X[i], h, est_rngs[i]).g
        Y = X - eta * G
        U = project(theta, Y)
        Xn = _mix(W, U)
        if check_invariants:
            _check_step(X, G, Y, U, Xn, eta, rho, theta)
        X = Xn
        record(t + 1)

    checkpoint_vals = {}
    if problem.f_star is not None:
        for T in stream.checkpoints:
            checkpoint_vals[T] = {
                "xhat_error": float(problem.f(stream.xhat_at(T)) - problem.f_star),
                "xtilde_error": float(problem.f(stream.xtilde_at(T)) - problem.f_star),
            }
    ts = np.arange(1, T0 + 1)
    return RunTrace(
        t=ts,
        queries=(ts - 1) * qpc,
        f_xbar=f_xbar,
        discrepancy=disc,
        dist_xbar_xstar=dist,
        outputs=stream.finalize(),
        checkpoints=checkpoint_vals,
        f_star=problem.f_star,
        queries_per_call=qpc,
        meta={"n": n, "d": d, "rho": rho, "estimator": est.kind, "schedule": sched.kind,
              "noise": noise.to_dict()},
        xbar=xbar_hist,
    )


def _check_step(X, G, Y, U, Xn, eta, rho, theta):
    for i in range(Xn.shape[0]):
        if not theta.contains(Xn[i], tol=1e-10):
            raise InvariantViolation(f"agent {i} left the feasible set")
    Z = U - Y
    zn = np.linalg.norm(Z, axis=1)
    gn = eta * np.linalg.norm(G, axis=1)
    if np.any(zn > gn * (1 + 1e-12) + 1e-12):
        raise InvariantViolation("projection residual exceeds eta ||g||")
    spread_after = np.sum((Xn - Xn.mean(axis=0)) ** 2)
    spread_before = np.sum((U - U.mean(axis=0)) ** 2)
    if spread_after > rho**2 * spread_before * (1 + 1e-10) + 1e-24:
        raise InvariantViolation("consensus step failed to contract by rho^2")
    lhs = Xn.mean(axis=0)
    rhs = X.mean(axis=0) - eta * G.mean(axis=0) + Z.mean(axis=0)
    scale = 1.0 + np.max(np.abs(X)) + eta * np.max(np.abs(G))
    if np.max(np.abs(lhs - rhs)) > 1e-12 * scale:
        raise InvariantViolation("average dynamics identity violated")
