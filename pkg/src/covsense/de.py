"""Density evolution for L1-regularized covariance recovery over ``A (x) A``.

Regular recursion (state ``(E, V)``)::

    E' = E_s E_z [prox(s + b1 z; b2) - s]^2
    V' = E_s E_z [b2 * prox'(s + b1 z; b2)]

with ``b1 = a1 sqrt(E)`` and ``b2 = beta a2 V`` in the noiseless case.  The
preferential recursion tracks the HH, HL and LL blocks separately; each block
has its own ``b1``/``b2`` built from the column-degree moments of the blocks it
couples and the shared row-degree mixture.

Expectations over the spike-and-slab prior are taken either by seeded Monte
Carlo (stratified over spike/slab, antithetic in ``z``) or by quadrature:
closed forms for Gaussian slabs, Gauss-Laguerre nodes for Laplacian ones.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import NumericError, ParameterError
from .factorgraph import DegreeDistribution, kron_degree_law, moments
from .seeding import rng_for

SLAB_KINDS = ("gaussian", "laplacian", "two_point")
BLOCKS = ("HH", "HL", "LL")
_LAGUERRE_NODES = 64


def prox(a, b):
    """Soft threshold ``sign(a) * max(|a| - b, 0)``."""
    if np.any(np.asarray(b) < 0):
        raise ParameterError("threshold must be >= 0")
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def prox_deriv(a, b):
    """Derivative of :func:`prox` in its first argument; 0 at the kink ``|a| == b``."""
    if np.any(np.asarray(b) < 0):
        raise ParameterError("threshold must be >= 0")
    return (np.abs(a) > b).astype(float)


@dataclass(frozen=True)
class SignalPrior:
    """Spike-and-slab law of one covariance entry.

    Zero with probability ``1 - sparsity``; otherwise drawn from a zero-mean
    slab with standard deviation ``slab_std``.
    """

    sparsity: float
    slab_std: float = 1.0
    slab_kind: str = "gaussian"

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ParameterError("sparsity must lie in (0, 1]")
        if self.slab_std <= 0:
            raise ParameterError("slab_std must be positive")
        if self.slab_kind not in SLAB_KINDS:
            raise ParameterError(f"slab_kind must be one of {SLAB_KINDS}")

    def second_moment(self) -> float:
        return self.sparsity * self.slab_std ** 2

    def draw_slab(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.slab_kind == "gaussian":
            return self.slab_std * rng.standard_normal(n)
        if self.slab_kind == "laplacian":
            return rng.laplace(0.0, self.slab_std / math.sqrt(2.0), n)
        return self.slab_std * np.where(rng.random(n) < 0.5, -1.0, 1.0)


@dataclass(frozen=True)
class DeParams:
    """Recursion parameters.

    ``beta`` is the L1 weight, ``noise_std`` the measurement noise, and
    ``norm_const`` the scalar ``A`` in the entry magnitude ``A**-0.5``.
    ``integrator`` is ``"mc"`` or ``"quadrature"``.
    """

    beta: float
    noise_std: float = 0.0
    norm_const: float = 1.0
    mc_samples: int = 100_000
    integrator: str = "mc"
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ParameterError("beta must be positive")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")
        if self.norm_const <= 0:
            raise ParameterError("norm_const must be positive")
        if self.mc_samples < 2:
            raise ParameterError("mc_samples must be >= 2")
        if self.integrator not in ("mc", "quadrature"):
            raise ParameterError("integrator must be 'mc' or 'quadrature'")

    @property
    def noise_term(self) -> float:
        return self.norm_const * self.noise_std ** 2


def default_beta(p: float, k: float, c0: float = 1.0) -> float:
    """L1 weight ``2 c0 log(p / k)``.

    This is the value for which the variance-contraction bound
    ``a2 <= p^2 / (k^2 beta)`` coincides with ``a2 <= p^2 / (2 c0 k^2 log(p/k))``.
    """
    if not 0 < k < p:
        raise ParameterError("need 0 < k < p")
    return 2.0 * c0 * math.log(p / k)


@dataclass(frozen=True)
class DeState:
    E: float
    V: float

    def __post_init__(self):
        if not (math.isfinite(self.E) and math.isfinite(self.V)):
            raise NumericError("non-finite DE state", state=(self.E, self.V))
        if self.E < 0 or self.V < 0:
            raise ParameterError("E and V must be nonnegative")

    @classmethod
    def initial(cls, prior: SignalPrior) -> "DeState":
        """Zero estimate with prior-variance messages."""
        m = prior.second_moment()
        return cls(m, m)


@dataclass(frozen=True)
class PrefDeState:
    E_HH: float
    E_HL: float
    E_LL: float
    V_HH: float
    V_HL: float
    V_LL: float

    def __post_init__(self):
        vals = self.as_tuple()
        if not all(math.isfinite(v) for v in vals):
            raise NumericError("non-finite preferential DE state", state=vals)
        if any(v < 0 for v in vals):
            raise ParameterError("all tracked quantities must be nonnegative")

    def as_tuple(self) -> tuple:
        return (self.E_HH, self.E_HL, self.E_LL, self.V_HH, self.V_HL, self.V_LL)

    def E(self, block: str) -> float:
        return getattr(self, "E_" + block)

    def V(self, block: str) -> float:
        return getattr(self, "V_" + block)

    @classmethod
    def initial(cls, priors: Mapping[str, SignalPrior]) -> "PrefDeState":
        m = {b: priors[b].second_moment() for b in BLOCKS}
        return cls(m["HH"], m["HL"], m["LL"], m["HH"], m["HL"], m["LL"])

    @classmethod
    def zero(cls) -> "PrefDeState":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# -- expectation machinery ---------------------------------------------------

@dataclass(frozen=True)
class _Nodes:
    s: np.ndarray
    z: np.ndarray
    w: np.ndarray


@lru_cache(maxsize=64)
def _mc_nodes(prior: SignalPrior, n: int, seed: int) -> _Nodes:
    rng = rng_for(seed, "de-mc")
    half = (n + 1) // 2
    z_spike = rng.standard_normal(half)
    z_spike = np.concatenate([z_spike, -z_spike])[:n]
    z_slab = rng.standard_normal(half)
    z_slab = np.concatenate([z_slab, -z_slab])[:n]
    s_slab = prior.draw_slab(rng, n)
    eps = prior.sparsity
    s = np.concatenate([np.zeros(n), s_slab])
    z = np.concatenate([z_spike, z_slab])
    w = np.concatenate([np.full(n, (1.0 - eps) / n), np.full(n, eps / n)])
    return _Nodes(s, z, w)


@lru_cache(maxsize=64)
def _slab_nodes(prior: SignalPrior) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights over non-Gaussian slab values."""
    if prior.slab_kind == "two_point":
        return np.array([-prior.slab_std, prior.slab_std]), np.array([0.5, 0.5])
    tn, tw = np.polynomial.laguerre.laggauss(_LAGUERRE_NODES)
    scale = prior.slab_std / math.sqrt(2.0)
    return np.concatenate([-scale * tn, scale * tn]), np.concatenate([tw, tw]) / 2.0


def _phi(t):
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def _tail_sq(a: float, c: float, t):
    """``E[(a u - c)^2; u > t]`` for standard normal ``u``."""
    q, phi = ndtr(-t), _phi(t)
    return a * a * (t * phi + q) - 2.0 * a * c * phi + c * c * q


def _gaussian_update(s: np.ndarray, b1: float, b2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``E_z[(prox(s + b1 z; b2) - s)^2]`` and ``E_z[prox'(s + b1 z; b2)]`` in closed form."""
    if b1 == 0.0:
        err = prox(s, b2) - s
        return err * err, prox_deriv(s, b2)
    up = (b2 - s) / b1    # z above this lands past +b2
    dn = (b2 + s) / b1    # z below -dn lands past -b2
    q_up, q_dn = ndtr(-up), ndtr(-dn)
    E = _tail_sq(b1, b2, up) + _tail_sq(b1, b2, dn) + s * s * np.clip(1.0 - q_up - q_dn, 0.0, None)
    return E, q_up + q_dn


def _gaussian_slab_update(sigma: float, b1: float, b2: float) -> tuple[float, float]:
    """Both expectations for ``s ~ N(0, sigma^2)``.

    With ``x = s + b1 z`` of variance ``tau^2``, ``s | x`` is Gaussian with mean
    ``kappa x`` and variance ``sigma^2 b1^2 / tau^2``, leaving one-dimensional
    truncated moments of ``x``.
    """
    tau2 = sigma * sigma + b1 * b1
    tau = math.sqrt(tau2)
    kappa = sigma * sigma / tau2
    t = b2 / tau
    q = float(ndtr(-t))
    inside = kappa * kappa * tau2 * max(1.0 - 2.0 * q - 2.0 * t * float(_phi(t)), 0.0)
    outside = 2.0 * float(_tail_sq((1.0 - kappa) * tau, b2, t))
    return inside + outside + sigma * sigma * b1 * b1 / tau2, 2.0 * q


def expected_update(prior: SignalPrior, b1: float, b2: float, params: DeParams) -> tuple[float, float]:
    """Return ``(E[(prox(s + b1 z; b2) - s)^2], E[b2 prox'(s + b1 z; b2)])``.

    Quadrature is exact for the spike and a Gaussian slab, exact in ``z`` with
    Gauss-Laguerre nodes in ``s`` for a Laplacian slab, and enumerates a
    two-point slab.  Monte Carlo samples both ``s`` and ``z``.
    """
    if b1 < 0 or b2 < 0:
        raise ParameterError("b1 and b2 must be nonnegative")
    if params.integrator == "quadrature":
        e0, v0 = _gaussian_update(np.zeros(1), b1, b2)
        if prior.slab_kind == "gaussian":
            e1, v1 = _gaussian_slab_update(prior.slab_std, b1, b2)
        else:
            sv, sw = _slab_nodes(prior)
            err2, act = _gaussian_update(sv, b1, b2)
            e1, v1 = float(np.dot(sw, err2)), float(np.dot(sw, act))
        eps = prior.sparsity
        E = (1.0 - eps) * float(e0[0]) + eps * e1
        V = b2 * ((1.0 - eps) * float(v0[0]) + eps * v1)
    else:
        nd = _mc_nodes(prior, params.mc_samples, params.seed)
        x = nd.s + b1 * nd.z
        err = prox(x, b2) - nd.s
        E = float(np.dot(nd.w, err * err))
        V = float(b2 * np.dot(nd.w, prox_deriv(x, b2)))
    if not (math.isfinite(E) and math.isfinite(V)):
        raise NumericError("non-finite DE update", state=(b1, b2))
    return E, V


# -- regular recursion -------------------------------------------------------

def _sqrt_mixture(law_terms: Sequence[tuple], offset: float) -> float:
    """``E[sqrt(offset + sum_i X_i e_i)]`` for independent laws ``X_i``.

    ``law_terms`` holds ``(KronDegreeLaw, e_i)`` pairs.
    """
    total = np.array([offset])
    weight = np.array([1.0])
    for law, e in law_terms:
        total = (total[:, None] + law.support[None, :] * e).ravel()
        weight = (weight[:, None] * law.probs[None, :]).ravel()
    return float(np.dot(weight, np.sqrt(np.maximum(total, 0.0))))


def regular_coefficients(state: DeState, lam: DegreeDistribution, rho: DegreeDistribution,
                         params: DeParams) -> tuple[float, float]:
    """Effective noise std ``b1`` and threshold ``b2`` for one regular step."""
    noise = params.noise_term
    b1 = moments(lam, -0.5) ** 2 * _sqrt_mixture([(kron_degree_law(rho), state.E)], noise)
    b2 = params.beta * moments(lam, -1.0) ** 2 * (moments(rho, 1.0) ** 2 * state.V + noise)
    return b1, b2


def de_step_regular(state: DeState, lam: DegreeDistribution, rho: DegreeDistribution,
                    prior: SignalPrior, params: DeParams) -> DeState:
    b1, b2 = regular_coefficients(state, lam, rho, params)
    try:
        E, V = expected_update(prior, b1, b2, params)
    except NumericError as exc:
        raise NumericError(f"regular DE step failed from state {state}", state=state) from exc
    return DeState(E, V)


@dataclass
class Trajectory:
    states: list
    converged: bool
    converged_to_zero: bool
    diverged: bool = False
    priority_onset: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.states) - 1


def de_trajectory(init: DeState, lam: DegreeDistribution, rho: DegreeDistribution, prior: SignalPrior,
                  params: DeParams, max_iters: int = 200, tol: float = 1e-8,
                  divergence_cap: float = 1e100) -> Trajectory:
    """Iterate the regular step until both E and V move by less than ``tol``.

    Runs whose error exceeds ``divergence_cap`` stop early with ``diverged`` set.
    """
    if max_iters < 1 or tol <= 0:
        raise ParameterError("need max_iters >= 1 and tol > 0")
    states = [init]
    converged = diverged = False
    for _ in range(max_iters):
        prev = states[-1]
        try:
            nxt = de_step_regular(prev, lam, rho, prior, params)
        except NumericError:
            diverged = True
            break
        states.append(nxt)
        if nxt.E > divergence_cap or nxt.V > divergence_cap:
            diverged = True
            break
        if abs(nxt.E - prev.E) < tol and abs(nxt.V - prev.V) < tol:
            converged = True
            break
    last = states[-1]
    to_zero = (not diverged) and last.E < tol and last.V < tol
    return Trajectory(states, converged, to_zero, diverged)


# -- preferential recursion --------------------------------------------------

def _block_lambda_factors(lambdas: Mapping[str, DegreeDistribution]) -> dict:
    mh, ml = moments(lambdas["H"], -1.0), moments(lambdas["L"], -1.0)
    sh, sl = moments(lambdas["H"], -0.5), moments(lambdas["L"], -0.5)
    return {
        "HH": (sh * sh, mh * mh),
        "HL": (sh * sl, mh * ml),
        "LL": (sl * sl, ml * ml),
    }


def preferential_coefficients(state: PrefDeState, lambdas: Mapping[str, DegreeDistribution],
                              rhos: Mapping[str, DegreeDistribution], betas: Mapping[str, float],
                              params: DeParams) -> dict:
    """``{block: (b1, b2)}`` for the HH, HL and LL recursions.

    The row-degree mixture pairs H-row degrees with E_HH/V_HH, one H and one
    L degree with E_HL/V_HL, and two L degrees with E_LL/V_LL; the column side
    contributes ``(sum lam/sqrt(l))`` and ``(sum lam/l)`` of the two column
    blocks that the covariance block couples.
    """
    noise = params.noise_term
    laws = [
        (kron_degree_law(rhos["H"]), state.E_HH),
        (kron_degree_law(rhos["H"], rhos["L"]), state.E_HL),
        (kron_degree_law(rhos["L"]), state.E_LL),
    ]
    row_sqrt = _sqrt_mixture(laws, noise)
    rh, rl = moments(rhos["H"], 1.0), moments(rhos["L"], 1.0)
    row_lin = rh * rh * state.V_HH + rh * rl * state.V_HL + rl * rl * state.V_LL + noise
    out = {}
    for blk, (lam1, lam2) in _block_lambda_factors(lambdas).items():
        out[blk] = (lam1 * row_sqrt, betas[blk] * lam2 * row_lin)
    return out


def _resolve_betas(params: DeParams, betas):
    if betas is None:
        return {b: params.beta for b in BLOCKS}
    missing = set(BLOCKS) - set(betas)
    if missing:
        raise ParameterError(f"missing beta for blocks {sorted(missing)}")
    return {b: float(betas[b]) for b in BLOCKS}


def de_step_preferential(state: PrefDeState, lambdas: Mapping[str, DegreeDistribution],
                         rhos: Mapping[str, DegreeDistribution], priors: Mapping[str, SignalPrior],
                         params: DeParams, betas: Mapping[str, float] | None = None) -> PrefDeState:
    """One preferential step; ``betas`` overrides ``params.beta`` per block."""
    betas = _resolve_betas(params, betas)
    coeffs = preferential_coefficients(state, lambdas, rhos, betas, params)
    E, V = {}, {}
    for blk in BLOCKS:
        b1, b2 = coeffs[blk]
        try:
            E[blk], V[blk] = expected_update(priors[blk], b1, b2, params)
        except NumericError as exc:
            raise NumericError(f"preferential DE step failed in block {blk} from {state}", state=state) from exc
    return PrefDeState(E["HH"], E["HL"], E["LL"], V["HH"], V["HL"], V["LL"])


def priority_onset(states: Sequence[PrefDeState]) -> int | None:
    """First ``T0`` with ``|dE_HH| <= |dE_HL|`` and ``|dE_HH| <= |dE_LL|`` for all ``t >= T0``."""
    n = len(states) - 1
    if n < 1:
        return None
    ok = []
    for t in range(n):
        d = {b: abs(states[t + 1].E(b) - states[t].E(b)) for b in BLOCKS}
        ok.append(d["HH"] <= d["HL"] and d["HH"] <= d["LL"])
    if not ok[-1]:
        return None
    t0 = n - 1
    while t0 > 0 and ok[t0 - 1]:
        t0 -= 1
    return t0


def pref_trajectory(init: PrefDeState, lambdas, rhos, priors, params: DeParams, betas=None,
                    max_iters: int = 200, tol: float = 1e-8, divergence_cap: float = 1e100) -> Trajectory:
    if max_iters < 1 or tol <= 0:
        raise ParameterError("need max_iters >= 1 and tol > 0")
    states = [init]
    converged = diverged = False
    for _ in range(max_iters):
        prev = states[-1]
        try:
            nxt = de_step_preferential(prev, lambdas, rhos, priors, params, betas)
        except NumericError:
            diverged = True
            break
        states.append(nxt)
        if max(nxt.as_tuple()) > divergence_cap:
            diverged = True
            break
        if max(abs(a - b) for a, b in zip(nxt.as_tuple(), prev.as_tuple())) < tol:
            converged = True
            break
    to_zero = (not diverged) and max(states[-1].as_tuple()) < tol
    return Trajectory(states, converged, to_zero, diverged, priority_onset(states))


def write_trajectory_csv(path, states: Sequence) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if states and isinstance(states[0], PrefDeState):
            w.writerow(["iter", "E_HH", "E_HL", "E_LL", "V_HH", "V_HL", "V_LL"])
            for t, s in enumerate(states):
                w.writerow([t, *(repr(float(v)) for v in s.as_tuple())])
        else:
            w.writerow(["iter", "E", "V"])
            for t, s in enumerate(states):
                w.writerow([t, repr(float(s.E)), repr(float(s.V))])
