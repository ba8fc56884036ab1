"""Degree-distribution algebra for the Kronecker factor graph of ``A (x) A``.

Column degrees of the sensing matrix follow ``lambda`` and row degrees follow
``rho``.  Check nodes of ``A (x) A`` have degree ``deg(row_j) * deg(row_k)``,
so most quantities needed by density evolution reduce to moments of the two
base distributions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ParameterError

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability weights over degrees ``1..max_degree``.

    ``weights[0]`` is the probability of degree 1 and is always zero; it is kept
    so that ``weights[k - 1]`` is the mass at degree ``k``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.ndim != 1 or w.size < 2:
            raise ParameterError("weights must be a vector covering degrees 1..max_degree with max_degree >= 2")
        if not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite")
        # tiny negative values arise from solver round-off
        w[(w < 0) & (w > -1e-12)] = 0.0
        if np.any(w < 0):
            raise ParameterError("weights must be nonnegative")
        if w[0] != 0.0:
            raise ParameterError("degree-1 weight must be zero")
        total = w.sum()
        if abs(total - 1.0) > _MASS_TOL:
            raise ParameterError(f"weights must sum to 1 (got {total!r})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, degree: int, max_degree: int | None = None) -> "DegreeDistribution":
        if degree < 2:
            raise ParameterError("degree must be >= 2")
        w = np.zeros(max(degree, max_degree or degree))
        w[degree - 1] = 1.0
        return cls(w)

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float], max_degree: int | None = None) -> "DegreeDistribution":
        top = max(max(probs), max_degree or 0)
        w = np.zeros(top)
        for k, v in probs.items():
            w[int(k) - 1] += v
        return cls(w)

    @classmethod
    def normalized(cls, weights) -> "DegreeDistribution":
        """Build from nonnegative weights, clipping round-off and renormalizing."""
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        w[0] = 0.0
        s = w.sum()
        if s <= 0:
            raise ParameterError("weights have no mass on degrees >= 2")
        return cls(w / s)

    @property
    def max_degree(self) -> int:
        return self.weights.size

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(1, self.max_degree + 1, dtype=float)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0) + 1

    def mean(self) -> float:
        return moments(self, 1.0)

    def to_json(self) -> dict:
        return {"max_degree": self.max_degree, "weights": [float(x) for x in self.weights]}

    @classmethod
    def from_json(cls, obj) -> "DegreeDistribution":
        if isinstance(obj, str):
            obj = json.loads(obj)
        w = np.asarray(obj["weights"], dtype=float)
        if w.size != int(obj["max_degree"]):
            raise ParameterError("max_degree does not match the weights length")
        return cls(w)


@dataclass(frozen=True)
class KronDegreeLaw:
    """Law of the product of two independent degree draws."""

    support: np.ndarray
    probs: np.ndarray

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.support, self.probs)}


def moments(dist: DegreeDistribution, exponent: float) -> float:
    """Return ``sum_k weights[k] * k**exponent``."""
    return float(np.dot(dist.weights, dist.degrees ** exponent))


def kron_degree_law(base: DegreeDistribution, other: DegreeDistribution | None = None) -> KronDegreeLaw:
    """Degree law of check (or variable) nodes of the Kronecker factor graph.

    With ``other`` given, the law of ``j * j'`` for ``j ~ base`` and ``j' ~ other``.
    """
    other = base if other is None else other
    a, b = base.support, other.support
    pa, pb = base.weights[a - 1], other.weights[b - 1]
    prods = np.multiply.outer(a, b).ravel()
    mass = np.multiply.outer(pa, pb).ravel()
    support, inv = np.unique(prods, return_inverse=True)
    probs = np.zeros(support.size)
    np.add.at(probs, inv, mass)
    return KronDegreeLaw(support=support, probs=probs)


def coeff_a1(lam: DegreeDistribution, rho: DegreeDistribution) -> float:
    """Effective-noise gain ``sum rho_i rho_i' lam_j lam_j' sqrt(i i' / j j')``."""
    return (moments(rho, 0.5) * moments(lam, -0.5)) ** 2


def coeff_a2(lam: DegreeDistribution, rho: DegreeDistribution) -> float:
    """Threshold gain ``sum rho_i rho_i' lam_j lam_j' (i i' / j j')``."""
    return (moments(rho, 1.0) * moments(lam, -1.0)) ** 2
