"""Dense two-phase simplex for the small linear programs used by the design and CLIME solvers.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``x >= 0``.  Pivoting follows Bland's rule, so the returned vertex is a
deterministic function of the input and cycling cannot occur.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

_TOL = 1e-10


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    fun: float | None
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _as_rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ParameterError(f"constraint block has shape {A.shape} with {b.size} right-hand sides; expected {n} columns")
    return A, b


def _pivot(T, basis, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = c


def _simplex(T, basis, allowed, max_iter):
    """Run Bland-rule simplex on tableau ``T`` (objective in the last row)."""
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        cost = T[-1, :-1]
        cand = np.flatnonzero((cost < -_TOL) & allowed)
        if cand.size == 0:
            return "optimal", it
        c = int(cand[0])
        colv = T[:m, c]
        pos = colv > _TOL
        if not np.any(pos):
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _TOL * max(1.0, abs(best)))
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, r, c)
        it += 1
    raise ParameterError("simplex iteration limit reached")


def lp_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter: int = 50_000) -> LpResult:
    """Minimize ``c @ x`` over ``x >= 0`` with optional inequality and equality rows."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    Au, bu = _as_rows(A_ub, b_ub, n)
    Ae, be = _as_rows(A_eq, b_eq, n)
    mu, me = Au.shape[0], Ae.shape[0]
    m = mu + me
    if m == 0:
        if np.any(c < 0):
            return LpResult("unbounded", None, None, 0)
        return LpResult("optimal", np.zeros(n), 0.0, 0)

    # columns: x (n), slacks (mu), artificials (m)
    n_tot = n + mu + m
    T = np.zeros((m + 1, n_tot + 1))
    T[:mu, :n] = Au
    T[:mu, n:n + mu] = np.eye(mu)
    T[:mu, -1] = bu
    T[mu:m, :n] = Ae
    T[mu:m, -1] = be
    neg = T[:m, -1] < 0
    T[:m][neg] *= -1.0
    basis = np.empty(m, dtype=int)
    art_rows = []
    for i in range(m):
        if i < mu and not neg[i]:
            basis[i] = n + i
        else:
            basis[i] = n + mu + i
            T[i, n + mu + i] = 1.0
            art_rows.append(i)

    iters = 0
    if art_rows:
        T[-1, :] = 0.0
        T[-1, n + mu + np.array(art_rows)] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        allowed = np.ones(n_tot, dtype=bool)
        status, k = _simplex(T, basis, allowed, max_iter)
        iters += k
        if -T[-1, -1] > 1e-9 * max(1.0, np.abs(T[:m, -1]).max()):
            return LpResult("infeasible", None, None, iters)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + mu:
                row = T[r, :n + mu]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    _pivot(T, basis, r, int(nz[0]))
                else:
                    keep[r] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = basis.size

    allowed = np.zeros(n_tot, dtype=bool)
    allowed[:n + mu] = True
    T[:, n + mu:n_tot] = 0.0
    T[-1, :] = 0.0
    T[-1, :n] = c
    for r in range(m):
        if T[-1, basis[r]] != 0.0:
            T[-1] -= T[-1, basis[r]] * T[r]
    status, k = _simplex(T, basis, allowed, max_iter)
    iters += k
    if status == "unbounded":
        return LpResult("unbounded", None, None, iters)
    x = np.zeros(n_tot)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:n], 0.0)
    return LpResult("optimal", x, float(c @ x), iters)
