"""Consensus (mixing) matrices and their spectral gap."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_TOL = 1e-12
SYMMETRY_TOL = 1e-10
EIGH_MAX_N = 512


def spectral_gap(W, tol=1e-10):
    """Return rho = ||W - 11^T/n||_2 for a symmetric W.

    Uses a dense symmetric eigensolver up to n = 512 and power iteration on
    the centred matrix above that.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"W must be square, got shape {W.shape}")
    if np.max(np.abs(W - W.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("W must be symmetric")
    n = W.shape[0]
    M = W - np.full((n, n), 1.0 / n)
    M = 0.5 * (M + M.T)
    if n <= EIGH_MAX_N:
        return float(np.max(np.abs(np.linalg.eigvalsh(M))))
    return _power_norm(M, tol)


def _power_norm(M, tol, max_iter=100_000):
    # M is symmetric and annihilates 1, so iterate on 1-orthogonal vectors;
    # M^2 is PSD, which avoids sign oscillation between +/- extreme eigenvalues
    n = M.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = M @ (M @ v)
        w -= w.mean()
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))


@dataclass(frozen=True)
class ConsensusMatrix:
    W: np.ndarray = field(repr=False)
    rho: float

    @classmethod
    def from_matrix(cls, W):
        W = np.array(W, dtype=float)
        W.setflags(write=False)
        return cls(W=W, rho=spectral_gap(W))

    @property
    def n(self):
        return self.W.shape[0]

    def to_csv(self):
        buf = io.StringIO()
        for row in self.W:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = [ln for ln in text.splitlines() if ln.strip()]
        return cls.from_matrix([[float(v) for v in ln.split(",")] for ln in rows])


def metropolis_weights(g, gamma=1.0):
    """Degree-normalised weights W_ij = A_ij / (gamma * max(d_i, d_j)).

    ``gamma`` below 1 can push diagonal entries negative, so it is refused.
    """
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1 to keep W nonnegative, got {gamma}")
    A = np.asarray(g.adjacency, dtype=float)
    n = A.shape[0]
    deg = A.sum(axis=1)
    denom = gamma * np.maximum.outer(deg, deg)
    off = np.divide(A, denom, out=np.zeros((n, n)), where=A > 0)
    W = off.copy()
    W[np.diag_indices(n)] = 1.0 - off.sum(axis=0)
    return ConsensusMatrix.from_matrix(W)


def complete_mixing(n):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    W = np.full((n, n), 1.0 / n)
    W.setflags(write=False)
    return ConsensusMatrix(W=W, rho=0.0)


@dataclass
class ValidationReport:
    rho: float
    checks: dict

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def failures(self):
        return [k for k, c in self.checks.items() if not c["passed"]]

    def to_json(self):
        return json.dumps(
            {"passed": self.passed, "rho": self.rho, "checks": self.checks},
            indent=2,
            sort_keys=True,
        )


def validate(cm):
    """Check symmetry, double stochasticity, nonnegativity and rho < 1."""
    W = np.asarray(cm.W, dtype=float)
    sym = float(np.max(np.abs(W - W.T), initial=0.0))
    rows = float(np.max(np.abs(W.sum(axis=1) - 1.0)))
    cols = float(np.max(np.abs(W.sum(axis=0) - 1.0)))
    neg = float(max(0.0, -W.min()))
    rho = float(cm.rho)
    checks = {
        "symmetric": {"passed": sym == 0.0, "residual": sym},
        "row_stochastic": {"passed": rows <= STOCHASTIC_TOL, "residual": rows},
        "column_stochastic": {"passed": cols <= STOCHASTIC_TOL, "residual": cols},
        "nonnegative": {"passed": neg <= STOCHASTIC_TOL, "residual": neg},
        "rho_below_one": {"passed": rho < 1.0 - 1e-12, "residual": rho},
    }
    return ValidationReport(rho=rho, checks=checks)
