"""Polynomial smoothing kernels on [-1, 1] for the 2d-query gradient estimator.

Moments are taken under r ~ U[-1, 1], i.e. E[phi(r)] = (1/2) * int phi(u) du.
With this convention E[r K(r)] = 1 makes the estimator exactly unbiased on
linear functions.  A kernel normalised against the Lebesgue integral instead
is half of ours.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import polynomial as P

QUAD_NODES = 64
MOMENT_TOL = 1e-10

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUAD_NODES)


def _legendre_rational(m):
    """Monomial coefficients of the Legendre polynomial P_m as Fractions."""
    p0, p1 = [Fraction(1)], [Fraction(0), Fraction(1)]
    if m == 0:
        return p0
    for k in range(1, m):
        # (k+1) P_{k+1} = (2k+1) u P_k - k P_{k-1}
        nxt = [Fraction(0)] * (k + 2)
        for i, c in enumerate(p1):
            nxt[i + 1] += Fraction(2 * k + 1, k + 1) * c
        for i, c in enumerate(p0):
            nxt[i] -= Fraction(k, k + 1) * c
        p0, p1 = p1, nxt
    return p1


@dataclass(frozen=True)
class Kernel:
    coeffs: tuple
    ell: int
    beta: float
    _moments: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, u):
        return P.polyval(u, self.coeffs)

    def scalar(self, u):
        """Horner evaluation on a Python float; cheaper than polyval in hot loops."""
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * u + c
        return acc

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def to_json(self):
        return json.dumps(list(self.coeffs))

    def moments(self):
        if not self._moments:
            self._moments.update(kernel_moments(self))
        return self._moments

    def kappa_beta(self, beta=None):
        """E[|r|^beta |K(r)|]; defaults to the kernel's own beta."""
        if beta is None:
            return self.moments()["kappa_beta"]
        return _abs_moment(self, beta)

    @property
    def kappa(self):
        return self.moments()["kappa"]


def legendre_kernel(beta):
    """Kernel sum_{m <= ell} q_m'(0) q_m(u) with q_m orthonormal under U[-1, 1].

    q_m = sqrt(2m+1) P_m, so each term is (2m+1) P_m'(0) P_m(u); only odd m
    contribute.  It reproduces derivatives at 0 of polynomials up to degree
    ell = floor(beta): E[p(r) K(r)] = p'(0).
    """
    if beta < 2:
        raise ValueError(f"beta must be >= 2, got {beta}")
    ell = math.floor(beta)
    coeffs = [Fraction(0)] * (ell + 1)
    for m in range(1, ell + 1, 2):
        pm = _legendre_rational(m)
        slope_at_0 = pm[1]
        for i, c in enumerate(pm):
            coeffs[i] += (2 * m + 1) * slope_at_0 * c
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return Kernel(coeffs=tuple(float(c) for c in coeffs), ell=ell, beta=float(beta))


def kernel_from_coeffs(coeffs, beta):
    return Kernel(coeffs=tuple(float(c) for c in coeffs), ell=math.floor(beta), beta=float(beta))


def _expect(fn, a=-1.0, b=1.0):
    """E over U[-1, 1] restricted to [a, b]: (1/2) int_a^b fn."""
    half = 0.5 * (b - a)
    u = half * _GL_NODES + 0.5 * (a + b)
    return 0.5 * half * float(np.dot(_GL_WEIGHTS, fn(u)))


def _breakpoints(k):
    pts = {-1.0, 0.0, 1.0}
    c = np.trim_zeros(np.asarray(k.coeffs, dtype=float), "b")
    if c.size > 1:
        for root in P.polyroots(c):
            if abs(root.imag) < 1e-12 and -1.0 < root.real < 1.0:
                pts.add(float(root.real))
    return sorted(pts)


def _abs_moment(k, beta):
    pts = _breakpoints(k)
    return sum(
        _expect(lambda u: np.abs(u) ** beta * np.abs(k(u)), a, b)
        for a, b in zip(pts[:-1], pts[1:])
    )


def kernel_moments(k):
    """mu_j = E[r^j K(r)] for j = 0..ell, kappa = E[K^2], kappa_beta = E[|r|^beta |K|]."""
    mu = [_expect(lambda u, j=j: u**j * k(u)) for j in range(k.ell + 1)]
    return {
        "mu": mu,
        "kappa": _expect(lambda u: k(u) ** 2),
        "kappa_beta": _abs_moment(k, k.beta),
    }


def moment_residuals(k):
    """Deviation of each moment from its target (0, except 1 at j = 1)."""
    mu = k.moments()["mu"]
    return [abs(m - (1.0 if j == 1 else 0.0)) for j, m in enumerate(mu)]


def check_kernel(k, tol=MOMENT_TOL):
    res = moment_residuals(k)
    return max(res) <= tol and math.isfinite(k.kappa_beta()) and math.isfinite(k.kappa)
