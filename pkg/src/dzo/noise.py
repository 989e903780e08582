"""Query noise.

The only requirement on the noise is a second-moment bound E[xi^2] <= sigma^2.
Nothing forces zero mean or independence, so the adversarial kinds below are
legal inputs to the optimiser.  Noise always comes from its own generator,
never from the stream that draws r or zeta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("none", "gaussian", "uniform", "constant_bias", "adversarial_sign")


@dataclass(frozen=True)
class QueryContext:
    agent: int = 0
    t: int = 1
    j: int = 0
    side: int = 1  # +1 for x + h.., -1 for x - h..


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "uniform" and self.params["lo"] > self.params["hi"]:
            raise ValueError("uniform noise needs lo <= hi")

    @property
    def second_moment(self):
        """Exact E[xi^2] for the stochastic kinds, xi^2 for the deterministic ones."""
        p = self.params
        if self.kind == "none":
            return 0.0
        if self.kind == "gaussian":
            return p["sigma"] ** 2
        if self.kind == "uniform":
            lo, hi = p["lo"], p["hi"]
            return (lo * lo + lo * hi + hi * hi) / 3.0
        if self.kind == "constant_bias":
            return p["c"] ** 2
        return p["magnitude"] ** 2

    @property
    def sigma(self):
        return math.sqrt(self.second_moment)

    @property
    def stochastic(self):
        return self.kind in ("gaussian", "uniform")

    def draw(self, rng, sides):
        """Noise for a batch of queries; ``sides`` is an array of +1/-1."""
        sides = np.asarray(sides)
        p = self.params
        if self.kind == "none":
            return np.zeros(sides.shape)
        if self.kind == "gaussian":
            return p["sigma"] * rng.standard_normal(sides.shape)
        if self.kind == "uniform":
            return rng.uniform(p["lo"], p["hi"], size=sides.shape)
        if self.kind == "constant_bias":
            return np.full(sides.shape, float(p["c"]))
        return p["magnitude"] * np.sign(sides).astype(float)

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(kind=d.pop("kind"), params=d)


def none():
    return NoiseModel("none")


def gaussian(sigma):
    return NoiseModel("gaussian", {"sigma": float(sigma)})


def uniform(lo, hi):
    return NoiseModel("uniform", {"lo": float(lo), "hi": float(hi)})


def constant_bias(c):
    return NoiseModel("constant_bias", {"c": float(c)})


def adversarial_sign(magnitude):
    return NoiseModel("adversarial_sign", {"magnitude": float(magnitude)})


def draw_noise(m, context, rng):
    """Single noise value for one query."""
    return float(m.draw(rng, np.array([context.side]))[0])
