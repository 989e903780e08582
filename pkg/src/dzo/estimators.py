"""Zero-order gradient estimators.

``kernel_2d`` draws one r ~ U[-1, 1] and spends 2d queries, one symmetric
pair along every coordinate axis, weighting the differences by K(r).
``two_point`` draws one direction on the unit sphere and spends 2 queries.
``two_point_kernel`` also draws r ~ U[-1, 1], probes at x +/- h r zeta and
weights the difference by K(r); it is the 2-query baseline for smoother
(beta > 2) objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel

ESTIMATOR_KINDS = ("kernel_2d", "two_point", "two_point_kernel", "oracle_gradient")


class QueryOracle:
    """Noisy zero-order access to one objective.

    Called with a batch of probe points and the side (+1/-1) of each probe.
    Noise is drawn from ``noise_rng``, which must not be shared with the
    estimator's own randomisation.
    """

    def __init__(self, objective, noise=None, noise_rng=None):
        self.objective = objective
        self.noise = noise if noise is not None else NoiseModel("none")
        self.noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(0)
        self.count = 0

    @property
    def dim(self):
        return self.objective.dim

    def __call__(self, points, sides):
        points = np.asarray(points, dtype=float)
        values = self.objective.evaluate(points)
        self.count += int(np.size(values))
        return values + self.noise.draw(self.noise_rng, sides)


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    kernel: object = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATOR_KINDS}")
        if self.kind in ("kernel_2d", "two_point_kernel") and self.kernel is None:
            raise ValueError(f"{self.kind} needs a kernel")

    def queries_per_call(self, d):
        return {"kernel_2d": 2 * d, "two_point": 2, "two_point_kernel": 2, "oracle_gradient": 0}[self.kind]

    def estimate(self, oracle, x, h, rng):
        if self.kind == "kernel_2d":
            return kernel_2d_estimate(oracle, x, h, self.kernel, rng)
        if self.kind == "two_point":
            return two_point_estimate(oracle, x, h, rng)
        if self.kind == "two_point_kernel":
            return two_point_kernel_estimate(oracle, x, h, self.kernel, rng)
        return GradientSample(g=np.asarray(oracle.objective.true_gradient(x), dtype=float), queries_used=0)


@dataclass
class GradientSample:
    g: np.ndarray
    queries_used: int
    raw: list | None = None


def _axis_probes(x, step):
    d = x.size
    eye = np.eye(d)
    points = np.concatenate([x + step * eye, x - step * eye])
    sides = np.concatenate([np.ones(d), -np.ones(d)])
    return points, sides


def kernel_2d_estimate(oracle, x, h, kernel, rng, r=None, keep_raw=False):
    """g_j = (y_j - y'_j) K(r) / (2h), with y_j, y'_j queried at x +/- h r e_j.

    ``r`` overrides the random draw (the generator is then left untouched).
    """
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.size
    if r is None:
        r = float(rng.uniform(-1.0, 1.0))
    points, sides = _axis_probes(x, h * r)
    y = oracle(points, sides)
    g = (y[:d] - y[d:]) * (kernel.scalar(r) / (2.0 * h))
    raw = list(zip(points, y)) if keep_raw else None
    return GradientSample(g=g, queries_used=2 * d, raw=raw)


def sample_unit_sphere(d, rng):
    while True:
        z = rng.standard_normal(d)
        norm = np.sqrt(np.sum(z * z))
        if norm > 0:
            return z / norm


def two_point_estimate(oracle, x, h, rng, zeta=None, keep_raw=False):
    """g = (d / 2h) (y - y') zeta with y, y' queried at x +/- h zeta."""
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.size
    if zeta is None:
        zeta = sample_unit_sphere(d, rng)
    points = np.stack([x + h * zeta, x - h * zeta])
    y = oracle(points, np.array([1.0, -1.0]))
    g = (d / (2.0 * h)) * (y[0] - y[1]) * zeta
    raw = list(zip(points, y)) if keep_raw else None
    return GradientSample(g=g, queries_used=2, raw=raw)


def two_point_kernel_estimate(oracle, x, h, kernel, rng, zeta=None, r=None, keep_raw=False):
    """g = (d / 2h) (y - y') K(r) zeta with y, y' queried at x +/- h r zeta.

    zeta is drawn before r.
    """
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.size
    if zeta is None:
        zeta = sample_unit_sphere(d, rng)
    if r is None:
        r = float(rng.uniform(-1.0, 1.0))
    step = (h * r) * zeta
    points = np.stack([x + step, x - step])
    y = oracle(points, np.array([1.0, -1.0]))
    g = (d * kernel.scalar(r) / (2.0 * h)) * (y[0] - y[1]) * zeta
    raw = list(zip(points, y)) if keep_raw else None
    return GradientSample(g=g, queries_used=2, raw=raw)


def sample_estimates(spec, oracle, x, h, n, rng, chunk=None):
    """n independent estimates at the same x, stacked into an (n, d) array.

    Consumes both generators in the same order as n sequential calls, so the
    result equals looping over ``spec.estimate``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    if chunk is None:
        chunk = max(1, 2_000_000 // max(1, 2 * d * d))
    out = np.empty((n, d))
    done = 0
    while done < n:
        m = min(chunk, n - done)
        if spec.kind == "kernel_2d":
            r = rng.uniform(-1.0, 1.0, size=m)
            step = (h * r)[:, None, None] * np.eye(d)
            points = np.concatenate([x + step, x - step], axis=1)  # (m, 2d, d)
            sides = np.broadcast_to(np.concatenate([np.ones(d), -np.ones(d)]), (m, 2 * d))
            y = oracle(points.reshape(-1, d), sides.reshape(-1)).reshape(m, 2 * d)
            out[done:done + m] = (y[:, :d] - y[:, d:]) * (spec.kernel(r) / (2.0 * h))[:, None]
        elif spec.kind == "two_point":
            z = rng.standard_normal((m, d))
            # same reduction as sample_unit_sphere so batches match bit for bit
            z /= np.sqrt(np.sum(z * z, axis=1, keepdims=True))
            points = np.stack([x + h * z, x - h * z], axis=1)  # (m, 2, d)
            sides = np.broadcast_to(np.array([1.0, -1.0]), (m, 2))
            y = oracle(points.reshape(-1, d), sides.reshape(-1)).reshape(m, 2)
            out[done:done + m] = (d / (2.0 * h)) * (y[:, 0] - y[:, 1])[:, None] * z
        elif spec.kind == "two_point_kernel":
            # zeta and r interleave in the stream, so draw them one call at a time
            for k in range(m):
                out[done + k] = two_point_kernel_estimate(oracle, x, h, spec.kernel, rng).g
        else:
            out[done:done + m] = oracle.objective.true_gradient(x)
        done += m
    return out


# ---------------------------------------------------------------------------
# statistical checks


def bias_check(F, x, h, kernel, n_mc, rng, noise=None, noise_rng=None, beta=None, L=None):
    """Compare the Monte-Carlo bias of kernel_2d with L kappa_beta sqrt(d) h^(beta-1).

    ``beta`` and ``L`` default to the objective's Hoelder metadata.  Passes when
    the bias norm is within the bound plus three standard errors.
    """
    beta = F.constants.beta if beta is None else beta
    L = F.constants.L if L is None else L
    x = np.asarray(x, dtype=float)
    oracle = QueryOracle(F, noise, noise_rng)
    g = sample_estimates(EstimatorSpec("kernel_2d", kernel), oracle, x, h, n_mc, rng)
    mean = g.mean(axis=0)
    se = g.std(axis=0, ddof=1) / math.sqrt(n_mc)
    bias = mean - F.true_gradient(x)
    bias_norm = float(np.linalg.norm(bias))
    se_norm = float(np.linalg.norm(se))
    bound = L * kernel.kappa_beta(beta) * math.sqrt(x.size) * h ** (beta - 1)
    return {
        "bias": bias,
        "bias_norm": bias_norm,
        "se": se,
        "se_norm": se_norm,
        "bound": float(bound),
        "passed": bias_norm <= bound + 3.0 * se_norm,
    }


def second_moment_bound(d, kappa, sigma, h, Lbar, G):
    return 1.5 * d * kappa * (sigma**2 / h**2 + 0.75 * Lbar**2 * h**2) + 9.0 * G**2 * kappa


def second_moment_check(F, x, h, kernel, noise, n_mc, rng, noise_rng=None):
    """Monte-Carlo E||g||^2 against the second-moment bound.

    The bound is reported with kappa = E[K^2] and with the Lebesgue integral
    of K^2 (twice as large); the check uses the larger one.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    oracle = QueryOracle(F, noise, noise_rng)
    g = sample_estimates(EstimatorSpec("kernel_2d", kernel), oracle, x, h, n_mc, rng)
    sq = np.sum(g * g, axis=1)
    m2 = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    c = F.constants
    k_exp = kernel.kappa
    b_exp = second_moment_bound(d, k_exp, noise.sigma, h, c.Lbar, c.G)
    b_leb = second_moment_bound(d, 2.0 * k_exp, noise.sigma, h, c.Lbar, c.G)
    bound = max(b_exp, b_leb)
    rel = se / m2 if m2 > 0 else 0.0
    return {
        "m2": m2,
        "se": se,
        "bound_expectation": b_exp,
        "bound_lebesgue": b_leb,
        "bound": bound,
        "passed": m2 <= bound * (1.0 + 3.0 * rel),
    }


# ---------------------------------------------------------------------------
# ball averages (surrogate of the two-point estimator)


def ball_average(fn, x, h, order=24):
    """E[fn(x + h u)] for u uniform in the unit ball of R^d, d <= 3.

    Product Gauss rule in polar/spherical coordinates: exact for polynomial
    fn of total degree below ``order``.  ``fn`` maps an (m, d) batch to
    (m,) or (m, k).
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    gl, gw = np.polynomial.legendre.leggauss(order)
    # radius on [0, 1]
    rad, rw = 0.5 * (gl + 1.0), 0.5 * gw
    if d == 1:
        pts, w = gl[:, None], 0.5 * gw
    elif d == 2:
        m = 2 * order
        th = 2 * np.pi * np.arange(m) / m
        R, TH = np.meshgrid(rad, th, indexing="ij")
        pts = np.stack([R * np.cos(TH), R * np.sin(TH)], axis=-1).reshape(-1, 2)
        w = (np.outer(rw * rad, np.full(m, 2 * np.pi / m)) / np.pi).ravel()
    elif d == 3:
        m = 2 * order
        ph = 2 * np.pi * np.arange(m) / m
        R, U, PH = np.meshgrid(rad, gl, ph, indexing="ij")
        S = np.sqrt(1.0 - U**2)
        pts = np.stack([R * S * np.cos(PH), R * S * np.sin(PH), R * U], axis=-1).reshape(-1, 3)
        w = (
            rw[:, None, None] * rad[:, None, None] ** 2
            * gw[None, :, None]
            * np.full(m, 2 * np.pi / m)[None, None, :]
            * (3.0 / (4.0 * np.pi))
        ).ravel()
    else:
        raise ValueError("ball_average supports d <= 3")
    vals = np.asarray(fn(x + h * pts))
    return np.tensordot(w, vals, axes=(0, 0))
