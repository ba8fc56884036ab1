"""Sparse covariance recovery from compressed second moments, and CLIME.

The covariance is estimated by

    min_S  0.5 * ||Sigma_Y - A S A^T||_F^2 + mu * ||S||_1

with an accelerated proximal-gradient (FISTA) loop that restarts whenever the
objective would increase, so the accepted objective sequence is monotone.
``A S A^T`` is always applied as two sparse products; ``A (x) A`` is never
formed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .de import prox
from .errors import NumericError, ParameterError
from .lp import lp_solve


def _op(A):
    if hasattr(A, "to_csr"):
        return A.to_csr()
    if sp.issparse(A):
        return A.tocsr()
    return np.asarray(A, dtype=float)


def _dense(X) -> np.ndarray:
    return X.toarray() if sp.issparse(X) else np.asarray(X)


def kron_apply(A, S: np.ndarray) -> np.ndarray:
    """``A @ S @ A.T`` without materializing the Kronecker operator."""
    A = _op(A)
    S = np.asarray(S, dtype=float)
    if S.shape != (A.shape[1], A.shape[1]):
        raise ParameterError(f"S has shape {S.shape}, expected {(A.shape[1],) * 2}")
    M = _dense(A @ S)
    return _dense(A @ M.T).T


def kron_adjoint(A, R: np.ndarray) -> np.ndarray:
    """``A.T @ R @ A``, the adjoint of :func:`kron_apply`."""
    A = _op(A)
    R = np.asarray(R, dtype=float)
    if R.shape != (A.shape[0], A.shape[0]):
        raise ParameterError(f"R has shape {R.shape}, expected {(A.shape[0],) * 2}")
    At = A.T
    N = _dense(At @ R)
    return _dense(At @ N.T).T


def lipschitz_estimate(A, iters: int = 100, safety: float = 1.05) -> float:
    """Power iteration on ``S -> A^T A S A^T A``, inflated by ``safety``."""
    A = _op(A)
    p = A.shape[1]
    rng = np.random.default_rng(0)
    S = rng.standard_normal((p, p))
    S /= np.linalg.norm(S)
    val = 0.0
    for _ in range(iters):
        T = kron_adjoint(A, kron_apply(A, S))
        val = np.linalg.norm(T)
        if val == 0:
            return 1.0
        S = T / val
    return safety * val


@dataclass(frozen=True)
class RecoveryConfig:
    mu: float
    max_iters: int = 5000
    tol: float = 1e-9
    symmetrize: bool = True

    def __post_init__(self):
        if self.mu <= 0 or self.tol <= 0 or self.max_iters < 1:
            raise ParameterError("need mu > 0, tol > 0 and max_iters >= 1")


@dataclass
class CovEstimate:
    sigma_hat: np.ndarray
    residual: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def not_converged(self) -> bool:
        return not self.converged


def _objective(A, sigma_y, S, mu):
    R = kron_apply(A, S) - sigma_y
    return 0.5 * float(np.sum(R * R)) + mu * float(np.abs(S).sum()), R


_PATIENCE = 5


def _change(A, R, X, Xn, mu):
    """``F(Xn) - F(X)`` from the step itself, avoiding cancellation between two large values.

    ``R`` is the residual at ``X``; returns the change and the residual at ``Xn``.
    """
    KD = kron_apply(A, Xn - X)
    dF = float(np.sum(R * KD)) + 0.5 * float(np.sum(KD * KD)) + mu * float(np.sum(np.abs(Xn) - np.abs(X)))
    return dF, R + KD


def recover_covariance(A, sigma_y: np.ndarray, cfg: RecoveryConfig, init: np.ndarray | None = None,
                       lipschitz: float | None = None) -> CovEstimate:
    """FISTA with function-value restart for the L1-penalized Kronecker least squares.

    Objective changes are evaluated from the step, so the stopping rule and the
    restart test stay meaningful down to round-off in the change itself.  A
    single small change can be a momentum turning point, so convergence needs
    ``_PATIENCE`` consecutive ones.
    """
    A = _op(A)
    sigma_y = np.asarray(sigma_y, dtype=float)
    d, p = A.shape
    if sigma_y.shape != (d, d):
        raise ParameterError(f"sigma_y has shape {sigma_y.shape}, expected {(d, d)}")
    if not np.allclose(sigma_y, sigma_y.T, atol=1e-12 * max(1.0, np.abs(sigma_y).max())):
        warnings.warn("sigma_y is not symmetric; using its symmetric part", stacklevel=2)
    sigma_y = (sigma_y + sigma_y.T) / 2
    L = lipschitz_estimate(A) if lipschitz is None else lipschitz
    step = 1.0 / L
    X = np.zeros((p, p)) if init is None else np.array(init, dtype=float)
    F, R = _objective(A, sigma_y, X, cfg.mu)
    Y, t = X.copy(), 1.0
    trace = [F]
    converged = False
    it = small = 0

    def prox_step(Z):
        Zn = prox(Z - step * kron_adjoint(A, kron_apply(A, Z) - sigma_y), cfg.mu * step)
        return (Zn + Zn.T) / 2 if cfg.symmetrize else Zn

    for it in range(1, cfg.max_iters + 1):
        Xn = prox_step(Y)
        dF, Rn = _change(A, R, X, Xn, cfg.mu)
        if dF > 0:
            # restart: plain proximal step from the last accepted iterate
            Xn = prox_step(X)
            dF, Rn = _change(A, R, X, Xn, cfg.mu)
            t = 1.0
            Y = Xn.copy()
            if dF > 0:
                Xn, Rn, dF = X, R, 0.0
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Y = Xn + ((t - 1.0) / tn) * (Xn - X)
            t = tn
        if not np.isfinite(dF):
            raise NumericError("objective became non-finite", state=it)
        small = small + 1 if abs(dF) <= cfg.tol * max(1.0, abs(F)) else 0
        X, R, F = Xn, Rn, F + dF
        trace.append(F)
        if small >= _PATIENCE:
            converged = True
            break
    resid = float(np.linalg.norm(kron_apply(A, X) - sigma_y))
    return CovEstimate(X, resid, it, converged, trace)


def mu_max(A, sigma_y: np.ndarray) -> float:
    """Smallest penalty for which the zero matrix is optimal."""
    return float(np.abs(kron_adjoint(A, sigma_y)).max())


def select_mu(A, sigma_y: np.ndarray, misfit_target: float = 0.05, n_grid: int = 10,
              span: float = 1e-4, max_iters: int = 2000, tol: float = 1e-8):
    """Largest grid value whose relative misfit meets ``misfit_target``.

    The grid is ``n_grid`` log-spaced values from ``mu_max`` down to
    ``span * mu_max``; solves are warm-started along it.  Returns
    ``(mu, estimate, path)`` where ``path`` lists ``(mu, relative misfit)``.
    """
    A = _op(A)
    top = mu_max(A, sigma_y)
    if top == 0:
        raise ParameterError("sigma_y is orthogonal to the range of the sensing operator")
    grid = top * np.logspace(0, np.log10(span), n_grid)
    L = lipschitz_estimate(A)
    norm_y = np.linalg.norm(sigma_y)
    est, path = None, []
    for mu in grid:
        est = recover_covariance(A, sigma_y, RecoveryConfig(mu, max_iters, tol), init=None if est is None else est.sigma_hat,
                                 lipschitz=L)
        rel = est.residual / norm_y
        path.append((float(mu), float(rel)))
        if rel <= misfit_target:
            return float(mu), est, path
    return float(grid[-1]), est, path


# -- CLIME --------------------------------------------------------------------

@dataclass
class PrecisionEstimate:
    omega_hat: np.ndarray
    omega_raw: np.ndarray
    infeasibility: float
    flagged: list

    @property
    def ok(self) -> bool:
        return not self.flagged


def clime_column(sigma_hat: np.ndarray, i: int, lam: float):
    """Solve ``min ||b||_1 s.t. ||Sigma b - e_i||_inf <= lam``; ``None`` if infeasible."""
    p = sigma_hat.shape[0]
    e = np.zeros(p)
    e[i] = 1.0
    S = sigma_hat
    A_ub = np.block([[S, -S], [-S, S]])
    b_ub = np.concatenate([lam + e, lam - e])
    res = lp_solve(np.ones(2 * p), A_ub=A_ub, b_ub=b_ub)
    if not res.ok:
        return None
    return res.x[:p] - res.x[p:]


def symmetrize_min_magnitude(W: np.ndarray) -> np.ndarray:
    """Keep whichever of ``W[i, j]`` and ``W[j, i]`` has the smaller magnitude."""
    keep = np.abs(W) <= np.abs(W.T)
    return np.where(keep, W, W.T)


def clime(sigma_hat: np.ndarray, clime_lambda: float) -> PrecisionEstimate:
    """Column-wise CLIME; infeasible columns fall back to a ridge inverse and are flagged."""
    if clime_lambda <= 0:
        raise ParameterError("clime_lambda must be positive")
    S = np.asarray(sigma_hat, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ParameterError("sigma_hat must be square")
    p = S.shape[0]
    W = np.zeros((p, p))
    flagged = []
    for i in range(p):
        col = clime_column(S, i, clime_lambda)
        if col is None:
            flagged.append(i)
            e = np.zeros(p)
            e[i] = 1.0
            col = np.linalg.solve(S + clime_lambda * np.eye(p), e)
        W[:, i] = col
    ok = [i for i in range(p) if i not in flagged]
    R = S @ W - np.eye(p)
    infeas = float(np.abs(R[:, ok]).max()) if ok else float("inf")
    return PrecisionEstimate(symmetrize_min_magnitude(W), W, infeas, flagged)
