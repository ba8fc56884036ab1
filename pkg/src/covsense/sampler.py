"""Sparse sign sensing matrices with prescribed row/column degree laws.

Matrices are built with a bipartite configuration model: column stubs and row
stubs are paired by a random permutation, and each colliding (duplicate)
placement is moved by an edge switch with a random stub whose exchange keeps
the graph simple.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, SamplingError
from .factorgraph import DegreeDistribution
from .seeding import rng_for

CONSISTENCY_TOL = 0.05
MAX_REPAIR_ROUNDS = 100
MAX_RESHUFFLES = 20


@dataclass(frozen=True)
class SensingMatrix:
    """``d x p`` sparse matrix stored as sorted (row, col, value) triplets."""

    d: int
    p: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    norm_const: float = 1.0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=float)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ParameterError("triplet arrays must be 1-D and of equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.d or cols.min() < 0 or cols.max() >= self.p):
            raise ParameterError("triplet index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        key = cols * self.d + rows
        if np.any(np.diff(key) == 0):
            raise ParameterError("duplicate (row, col) entries")
        for a in (rows, cols, vals):
            a.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.d, self.p)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        M = np.zeros(self.shape)
        M[self.rows, self.cols] = self.vals
        return M

    def column_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.p)

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.d)

    def write(self, path) -> None:
        lines = [f"{self.d} {self.p} {self.nnz} {self.norm_const!r}"]
        lines += [f"{r} {c} {v!r}" for r, c, v in zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "SensingMatrix":
        text = Path(path).read_text().split("\n")
        d, p, nnz, norm = text[0].split()
        body = [ln.split() for ln in text[1:] if ln.strip()]
        if len(body) != int(nnz):
            raise ParameterError(f"{path}: header declares {nnz} entries, found {len(body)}")
        rows = np.array([int(b[0]) for b in body], dtype=np.int64)
        cols = np.array([int(b[1]) for b in body], dtype=np.int64)
        vals = np.array([float(b[2]) for b in body])
        return cls(int(d), int(p), rows, cols, vals, float(norm))

    @classmethod
    def from_dense(cls, M, norm_const: float = 1.0) -> "SensingMatrix":
        M = np.asarray(M, dtype=float)
        r, c = np.nonzero(M)
        return cls(M.shape[0], M.shape[1], r, c, M[r, c], norm_const)


def _draw_degrees(dist: DegreeDistribution, n: int, rng) -> np.ndarray:
    return rng.choice(dist.degrees.astype(np.int64), size=n, p=dist.weights)


def _repair_totals(col_deg, row_deg, rho, rng, d, max_rounds=10_000):
    """Equalize stub totals: resample rows while that helps, then adjust trailing columns."""
    diff = int(col_deg.sum() - row_deg.sum())
    for _ in range(max_rounds):
        if diff == 0 or rho.support.size == 1:
            break
        j = rng.integers(row_deg.size)
        new = _draw_degrees(rho, 1, rng)[0]
        nd = diff - (new - row_deg[j])
        if abs(nd) < abs(diff):
            row_deg[j] = new
            diff = nd
    # shift the remainder onto columns from the last one backwards
    c = col_deg.size - 1
    while diff != 0 and c >= 0:
        if diff > 0:
            step = min(diff, col_deg[c] - 2)
            col_deg[c] -= step
            diff -= step
        else:
            step = min(-diff, d - col_deg[c])
            col_deg[c] += step
            diff += step
        c -= 1
    if diff != 0:
        raise SamplingError("could not reconcile row and column stub counts")
    return col_deg, row_deg


def _switch_duplicates(col_stubs, row_stubs, rng, tries: int) -> bool:
    """Resolve repeated (column, row) pairs by switching rows with stubs that keep the graph simple."""
    edges = {}
    for k, key in enumerate(zip(col_stubs.tolist(), row_stubs.tolist())):
        edges.setdefault(key, []).append(k)
    dups = [k for ks in edges.values() for k in ks[1:]]
    n = row_stubs.size
    for a in dups:
        ca, ra = int(col_stubs[a]), int(row_stubs[a])
        for b in rng.integers(n, size=tries).tolist():
            cb, rb = int(col_stubs[b]), int(row_stubs[b])
            if ca == cb or ra == rb or (ca, rb) in edges or (cb, ra) in edges:
                continue
            for key, k in (((ca, ra), a), ((cb, rb), b)):
                edges[key].remove(k)
                if not edges[key]:
                    del edges[key]
            row_stubs[a], row_stubs[b] = rb, ra
            edges[(ca, rb)] = [a]
            edges[(cb, ra)] = [b]
            break
        else:
            return False
    return True


def _pair_stubs(col_deg, row_deg, rng) -> tuple[np.ndarray, np.ndarray]:
    col_stubs = np.repeat(np.arange(col_deg.size), col_deg)
    row_base = np.repeat(np.arange(row_deg.size), row_deg)
    for _ in range(MAX_RESHUFFLES):
        row_stubs = rng.permutation(row_base)
        if _switch_duplicates(col_stubs, row_stubs, rng, MAX_REPAIR_ROUNDS * 10):
            return row_stubs, col_stubs
    raise SamplingError("duplicate placements persisted after repeated re-pairing; "
                        "try larger dimensions or lower maximum degrees")


def _check_consistency(lam, rho, d, p, what="edge counts"):
    by_col, by_row = p * lam.mean(), d * rho.mean()
    if abs(by_col - by_row) > CONSISTENCY_TOL * by_col:
        raise ParameterError(f"inconsistent {what}: p*E[col degree] = {by_col:.4g}, d*E[row degree] = {by_row:.4g}")
    if lam.support.max() > d or rho.support.max() > p:
        raise ParameterError("a degree exceeds the opposite dimension")


def _sample_block(lam, rho, d, p, rng):
    col_deg = _draw_degrees(lam, p, rng)
    row_deg = _draw_degrees(rho, d, rng)
    col_deg, row_deg = _repair_totals(col_deg, row_deg, rho, rng, d)
    if row_deg.max() > p:
        raise SamplingError("a row degree exceeds the number of columns")
    return _pair_stubs(col_deg, row_deg, rng)


def sample_sensing_matrix(lam: DegreeDistribution, rho: DegreeDistribution, d: int, p: int,
                          norm_const: float | None = None, seed=0) -> SensingMatrix:
    """Random ``{0, +-norm_const**-0.5}`` matrix with column degrees ~ lam and row degrees ~ rho.

    ``norm_const`` defaults to the mean column degree, giving columns of
    roughly unit norm.
    """
    if d < 1 or p < 1:
        raise ParameterError("dimensions must be positive")
    _check_consistency(lam, rho, d, p)
    A = lam.mean() if norm_const is None else float(norm_const)
    if A <= 0:
        raise ParameterError("norm_const must be positive")
    rng = rng_for(seed, "sensing")
    rows, cols = _sample_block(lam, rho, d, p, rng)
    signs = np.where(rng.random(rows.size) < 0.5, -1.0, 1.0)
    return SensingMatrix(d, p, rows, cols, signs / np.sqrt(A), A)


def sample_preferential_matrix(lambdas, rhos, d: int, n_H: int, n_L: int,
                               norm_const: float | None = None, seed=0) -> SensingMatrix:
    """Two column blocks: the first ``n_H`` columns follow ``lambdas['H']`` and ``rhos['H']``.

    ``rhos[B]`` is the law of the number of nonzeros a row has inside column
    block ``B``; each block is paired independently over all ``d`` rows.
    """
    lam_H, lam_L, rho_H, rho_L = lambdas["H"], lambdas["L"], rhos["H"], rhos["L"]
    _check_consistency(lam_H, rho_H, d, n_H, "high-priority nonzero counts")
    _check_consistency(lam_L, rho_L, d, n_L, "low-priority nonzero counts")
    p = n_H + n_L
    A = (n_H * lam_H.mean() + n_L * lam_L.mean()) / p if norm_const is None else float(norm_const)
    if A <= 0:
        raise ParameterError("norm_const must be positive")
    rH, cH = _sample_block(lam_H, rho_H, d, n_H, rng_for(seed, "sensing", "H"))
    rL, cL = _sample_block(lam_L, rho_L, d, n_L, rng_for(seed, "sensing", "L"))
    rows = np.concatenate([rH, rL])
    cols = np.concatenate([cH, cL + n_H])
    signs = np.where(rng_for(seed, "sensing", "signs").random(rows.size) < 0.5, -1.0, 1.0)
    return SensingMatrix(d, p, rows, cols, signs / np.sqrt(A), A)


def baseline_left_regular(delta: int, d: int, p: int, seed=0) -> SensingMatrix:
    """Unsigned 0/1 adjacency with exactly ``delta`` ones per column, rows uniform without replacement."""
    if not 1 <= delta <= d:
        raise ParameterError("need 1 <= delta <= d")
    rng = rng_for(seed, "baseline", delta)
    rows = np.concatenate([rng.choice(d, size=delta, replace=False) for _ in range(p)])
    cols = np.repeat(np.arange(p), delta)
    return SensingMatrix(d, p, rows, cols, np.ones(rows.size), 1.0)
