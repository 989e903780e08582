"""Objectives, feasible sets and problem instances.

Every objective is defined on all of R^d (probe points of the estimators may
leave the feasible set) and evaluates either a single point of shape (d,)
or a batch of shape (m, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


# ---------------------------------------------------------------------------
# feasible sets


@dataclass(frozen=True)
class FeasibleSet:
    """Closed convex set with an exact Euclidean projection.

    kind is ``ball`` (radius), ``box`` (lo, hi) or ``ball_cap_nonpositive``
    (the ball intersected with the nonpositive orthant).
    """

    kind: str
    dim: int
    radius: float = 1.0
    lo: np.ndarray | None = field(default=None, compare=False)
    hi: np.ndarray | None = field(default=None, compare=False)

    @property
    def diam(self):
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "ball_cap_nonpositive":
            # <x, y> >= 0 inside the orthant, so ||x - y||^2 <= 2 R^2
            return math.sqrt(2.0) * self.radius if self.dim >= 2 else self.radius
        return float(np.linalg.norm(np.asarray(self.hi) - np.asarray(self.lo)))

    def project(self, x):
        return project(self, x)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        ok = np.linalg.norm(x) <= self.radius * (1.0 + tol) + tol
        if self.kind == "ball_cap_nonpositive":
            ok = ok and bool(np.all(x <= tol))
        return bool(ok)


def ball(dim, radius=1.0):
    return FeasibleSet("ball", dim, radius=float(radius))


def ball_cap_nonpositive(dim, radius=1.0):
    return FeasibleSet("ball_cap_nonpositive", dim, radius=float(radius))


def box(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("box needs lo <= hi with matching shapes")
    return FeasibleSet("box", lo.size, lo=lo, hi=hi)


def _scale_into_ball(x, R):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.minimum(1.0, R / np.where(norm > 0, norm, 1.0))
    return x * scale


def project(s, x):
    """Euclidean projection of x (or of each row of a batch) onto s."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != s.dim:
        raise ValueError(f"dimension mismatch: set has d={s.dim}, point has {x.shape[-1]}")
    if s.kind == "ball":
        return _scale_into_ball(x, s.radius)
    if s.kind == "box":
        return np.clip(x, s.lo, s.hi)
    if s.kind == "ball_cap_nonpositive":
        # the orthant is a cone through the ball's centre, so clamp then scale
        return _scale_into_ball(np.minimum(x, 0.0), s.radius)
    raise ValueError(f"unknown feasible set kind {s.kind!r}")


# ---------------------------------------------------------------------------
# objectives


@dataclass(frozen=True)
class Constants:
    L: float  # Hoelder constant of order beta
    beta: float
    Lbar: float  # gradient Lipschitz constant
    G: float  # bound on ||grad|| over the feasible set
    alpha: float = 0.0  # strong convexity (0 if not claimed)


class Objective:
    dim: int
    constants: Constants

    def evaluate(self, x):
        raise NotImplementedError

    def true_gradient(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)


class QuadraticObjective(Objective):
    """f(x) = (alpha/2) (x - c)^T A (x - c)."""

    def __init__(self, A, alpha, center=None, radius=1.0):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ValueError(f"A must be positive definite, min eigenvalue {eig[0]:.3g}")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.A = A
        self.alpha = float(alpha)
        self.dim = A.shape[0]
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        lbar = self.alpha * eig[-1]
        reach = radius + float(np.linalg.norm(self.center))
        self.constants = Constants(
            L=lbar / 2.0, beta=2.0, Lbar=lbar, G=lbar * reach, alpha=self.alpha * eig[0]
        )

    def evaluate(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.alpha * np.einsum("...i,ij,...j->...", y, self.A, y)

    def true_gradient(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return self.alpha * (y @ self.A)


def quadratic_objective(A, alpha, center=None, radius=1.0):
    return QuadraticObjective(A, alpha, center=center, radius=radius)


class LinearObjective(Objective):
    """f(x) = <a, x> + b."""

    def __init__(self, a, b=0.0):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.dim = self.a.size
        self.constants = Constants(
            L=0.0, beta=2.0, Lbar=0.0, G=float(np.linalg.norm(self.a))
        )

    def evaluate(self, x):
        return np.asarray(x, dtype=float) @ self.a + self.b

    def true_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.a, x.shape).copy()


class PowerSumObjective(Objective):
    """f(x) = coef * sum_i x_i^p for integer p >= 1.

    For p = 3 the degree-2 Taylor remainder is coef * sum v_i^3, bounded by
    |coef| ||v||^3, so the Hoelder constant of order 3 is |coef|.
    """

    def __init__(self, dim, power, coef=1.0, radius=1.0):
        self.dim = int(dim)
        self.power = int(power)
        self.coef = float(coef)
        p, c = self.power, abs(self.coef)
        hess = c * p * (p - 1) * radius ** max(p - 2, 0) if p >= 2 else 0.0
        holder = c if p == 3 else hess / 2.0
        self.constants = Constants(
            L=holder,
            beta=float(min(p, 3)) if p >= 2 else 2.0,
            Lbar=hess,
            G=c * p * radius ** (p - 1) * math.sqrt(self.dim),
        )

    def evaluate(self, x):
        return self.coef * np.sum(np.asarray(x, dtype=float) ** self.power, axis=-1)

    def true_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.coef * self.power * x ** (self.power - 1)


class FunctionObjective(Objective):
    """Wrap plain callables; both must accept (d,) and (m, d) inputs."""

    def __init__(self, fn, grad, dim, constants):
        self._fn = fn
        self._grad = grad
        self.dim = int(dim)
        self.constants = constants

    def evaluate(self, x):
        return self._fn(np.asarray(x, dtype=float))

    def true_gradient(self, x):
        return self._grad(np.asarray(x, dtype=float))


# -- test function built from a piecewise-cubic bump --------------------------


def psi(x, a):
    """Twice-integrated hat profile phi; C^2, piecewise cubic, flat outside [-a, a].

    phi (= psi'') is 0 below -a, 2x/a + 2 on [-a, -a/2), -2x/a on [-a/2, a/2],
    2x/a - 2 on (a/2, a] and 0 above a.
    """
    x = np.asarray(x, dtype=float)
    u = np.clip(x, -a, a)
    c = u**3 / (3 * a)
    inner = np.where(
        u < -a / 2,
        c + u * u + a * u + a**2 / 3,
        np.where(u <= a / 2, -c + a * u / 2 + a**2 / 4, c - u * u + a * u + a**2 / 6),
    )
    # the flat tails are set exactly rather than through the cubic at +/-a
    return np.where(x <= -a, 0.0, np.where(x >= a, a**2 / 2, inner))


def psi_prime(x, a):
    x = np.asarray(x, dtype=float)
    u = np.clip(x, -a, a)
    q = u * u / a
    inner = np.where(u < -a / 2, q + 2 * u + a, np.where(u <= a / 2, -q + a / 2, q - 2 * u + a))
    return np.where(np.abs(x) > a, 0.0, inner)


def phi(x, a):
    x = np.asarray(x, dtype=float)
    return np.select(
        [x < -a, x < -a / 2, x <= a / 2, x <= a],
        [0.0, 2 * x / a + 2, -2 * x / a, 2 * x / a - 2],
        default=0.0,
    )


class BumpQuadraticObjective(Objective):
    """f(x) = (alpha/2) x^T A x + L h^3 sum_i psi(x_i / h).

    Strongly convex on the nonpositive orthant, where phi >= 0.  Its Hessian is
    Lipschitz with constant 2L/a, hence Hoelder of order 3 with L/(3a).
    """

    def __init__(self, alpha, L, h, a, A):
        if a <= 0 or h <= 0 or L < 0 or alpha <= 0:
            raise ValueError("need alpha > 0, L >= 0, h > 0, a > 0")
        A = np.array(A, dtype=float)
        eig = np.linalg.eigvalsh(A)
        if not np.allclose(A, A.T, atol=1e-12) or eig[0] <= 0:
            raise ValueError("A must be symmetric positive definite")
        self.alpha, self.L, self.h, self.a = float(alpha), float(L), float(h), float(a)
        self.A = A
        self.dim = A.shape[0]
        self.lambda_min = float(eig[0])
        lbar = self.alpha * eig[-1] + self.L * self.h
        grad_bump = self.L * self.h**2 * (self.a / 2) * math.sqrt(self.dim)
        self.constants = Constants(
            L=self.L / (3 * self.a),
            beta=3.0,
            Lbar=lbar,
            G=self.alpha * eig[-1] + grad_bump,
            alpha=self.alpha * eig[0],
        )

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        quad = 0.5 * self.alpha * np.einsum("...i,ij,...j->...", x, self.A, x)
        return quad + self.L * self.h**3 * np.sum(psi(x / self.h, self.a), axis=-1)

    def true_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * (x @ self.A) + self.L * self.h**2 * psi_prime(x / self.h, self.a)


def appendix_e_objective(alpha, L, h, a, A):
    return BumpQuadraticObjective(alpha, L, h, a, A)


def random_sparse_pd(d, density=0.1, seed=0):
    """A = S^T S + I with S sparse Gaussian (scaled by 1/sqrt(d)); lambda_min(A) >= 1."""
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((d, d)) * (rng.random((d, d)) < density) / math.sqrt(d)
    B = S.T @ S
    return 0.5 * (B + B.T) + np.eye(d)


# ---------------------------------------------------------------------------
# problem instances


@dataclass(frozen=True)
class ProblemInstance:
    locals: tuple
    alpha: float
    theta: FeasibleSet
    x_star: np.ndarray | None = field(default=None, compare=False)
    f_star: float | None = None

    def __post_init__(self):
        dims = {f.dim for f in self.locals}
        if len(dims) != 1:
            raise ValueError(f"local objectives disagree on dimension: {sorted(dims)}")
        if self.theta.dim not in dims:
            raise ValueError("feasible set dimension differs from objectives")

    @property
    def n(self):
        return len(self.locals)

    @property
    def dim(self):
        return self.locals[0].dim

    @property
    def Lbar(self):
        return max(f.constants.Lbar for f in self.locals)

    def f(self, x):
        return sum(fi.evaluate(x) for fi in self.locals) / self.n

    def grad(self, x):
        return sum(fi.true_gradient(x) for fi in self.locals) / self.n

    def fixed_point_residual(self, x, eta=None):
        if eta is None:
            eta = 1.0 / (self.alpha * self.n * self.Lbar)
        return float(np.linalg.norm(x - project(self.theta, x - eta * self.grad(x))))


def solve_reference_minimizer(p, tol=1e-10, max_iter=1_000_000, x0=None):
    """Projected gradient descent with exact gradients on the average objective.

    Returns a copy of ``p`` carrying x_star and f_star.  Raises RuntimeError if
    the fixed-point residual is still above ``tol`` after ``max_iter`` steps.
    """
    lbar = sum(f.constants.Lbar for f in p.locals) / p.n
    step = 1.0 / (p.alpha + lbar)
    x = project(p.theta, np.zeros(p.dim) if x0 is None else np.asarray(x0, dtype=float))
    for _ in range(max_iter):
        nxt = project(p.theta, x - step * p.grad(x))
        if np.linalg.norm(nxt - x) <= tol:
            x = nxt
            break
        x = nxt
    else:
        raise RuntimeError(f"no convergence within {max_iter} iterations")
    return replace(p, x_star=x, f_star=float(p.f(x)))


def quadratic_benchmark(n, d, alpha=1.0, seed=0, radius=1.0, spread=0.3, density=0.3):
    """Heterogeneous quadratics f_i = (alpha/2)(x - c_i)^T A_i (x - c_i) on a ball.

    Every A_i has lambda_min >= 1, so the average is alpha-strongly convex;
    the centres are small enough that the minimiser sits inside the ball.
    """
    rng = np.random.default_rng(seed)
    locs = []
    for i in range(n):
        A = random_sparse_pd(d, density=density, seed=rng.integers(2**32))
        c = rng.standard_normal(d)
        c *= spread * radius / max(np.linalg.norm(c), 1e-12)
        locs.append(QuadraticObjective(A, alpha, center=c, radius=radius))
    Abar = sum(f.A for f in locs) / n
    rhs = sum(f.A @ f.center for f in locs) / n
    x_star = np.linalg.solve(Abar, rhs)
    prob = ProblemInstance(locals=tuple(locs), alpha=alpha, theta=ball(d, radius))
    if np.linalg.norm(x_star) < radius:
        return replace(prob, x_star=x_star, f_star=float(prob.f(x_star)))
    return solve_reference_minimizer(prob)
