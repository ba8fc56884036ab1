"""Equal-variance Gaussian DAG recovery by repeated sink elimination.

Each round finds Markov blankets from the precision matrix, regresses every
node on its blanket, picks as sink the node minimizing
``r_i = max_{j in MB_i} |Omega_ij / theta_ij|``, assigns its blanket as parents,
then marginalizes it out and recomputes the precision of the remaining nodes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError, StructuralError
from .recovery import clime


@dataclass
class GraphEstimate:
    edges: list  # (parent, child, weight)
    elimination_order: list

    def adjacency(self, p: int) -> np.ndarray:
        W = np.zeros((p, p))
        for i, j, w in self.edges:
            W[i, j] = w
        return W

    def edge_set(self) -> set:
        return {(int(i), int(j)) for i, j, _ in self.edges}

    def to_json(self) -> dict:
        return {"edges": [[int(i), int(j), float(w)] for i, j, w in self.edges],
                "order": [int(v) for v in self.elimination_order]}

    @classmethod
    def from_json(cls, obj) -> "GraphEstimate":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        return cls([(int(i), int(j), float(w)) for i, j, w in obj["edges"]], list(obj["order"]))


def default_zero_tol(omega: np.ndarray) -> float:
    return 1e-3 * float(np.abs(omega).max())


def markov_blanket(omega: np.ndarray, i: int, zero_tol: float) -> list[int]:
    row = np.abs(np.asarray(omega)[i])
    return [int(j) for j in np.flatnonzero(row > zero_tol) if j != i]


def regression_coeffs(sigma: np.ndarray, i: int, mb) -> np.ndarray:
    """Coefficients of node ``i`` regressed on ``mb``; zero outside ``mb``."""
    sigma = np.asarray(sigma, dtype=float)
    theta = np.zeros(sigma.shape[0])
    mb = list(mb)
    if not mb:
        return theta
    sub = sigma[np.ix_(mb, mb)]
    try:
        coef = np.linalg.solve(sub, sigma[mb, i])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance restricted to the blanket of node {i} is singular", state=i) from exc
    if np.linalg.cond(sub) > 1e14:
        raise NumericError(f"covariance restricted to the blanket of node {i} is singular", state=i)
    theta[mb] = coef
    return theta


def terminal_score(omega: np.ndarray, theta: np.ndarray, i: int, mb) -> float:
    """``max_{j in mb} |Omega_ij / theta_ij|``; 0 on an empty blanket, inf if some ``theta_ij`` is 0."""
    if not mb:
        return 0.0
    r = 0.0
    for j in mb:
        if theta[j] == 0.0:
            return np.inf
        r = max(r, abs(omega[i, j] / theta[j]))
    return r


def find_terminal(omega: np.ndarray, thetas: dict, candidates, blankets: dict | None = None,
                  zero_tol: float | None = None) -> int:
    """Candidate with the smallest score; ties go to the smallest index."""
    cands = sorted(candidates)
    if not cands:
        raise ParameterError("no candidates")
    if blankets is None:
        tol = default_zero_tol(omega) if zero_tol is None else zero_tol
        blankets = {i: markov_blanket(omega, i, tol) for i in cands}
    scores = [(terminal_score(omega, thetas[i], i, blankets[i]), i) for i in cands]
    best = min(scores)
    if not np.isfinite(best[0]):
        raise StructuralError("every candidate has an infinite terminal score")
    return best[1]


def marginalize(sigma: np.ndarray, v: int) -> np.ndarray:
    """Gaussian marginal without node ``v`` (delete its row and column)."""
    sigma = np.asarray(sigma)
    if sigma.shape[0] < 2:
        raise ParameterError("need at least two nodes")
    keep = [i for i in range(sigma.shape[0]) if i != v]
    return sigma[np.ix_(keep, keep)]


def recover_structure(sigma_hat: np.ndarray, omega_hat: np.ndarray, zero_tol: float | None = None,
                      recompute: str = "inverse", clime_lambda: float = 0.05) -> GraphEstimate:
    """Eliminate sinks until one node is left.

    ``zero_tol`` defaults to ``1e-3 * max|omega_hat|`` and is held fixed across
    rounds.  After each elimination the precision of the remaining nodes is the
    exact inverse of the reduced covariance (``recompute="inverse"``) or a CLIME
    re-estimate.
    """
    S = np.asarray(sigma_hat, dtype=float)
    Om = np.asarray(omega_hat, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape != Om.shape:
        raise ParameterError("sigma_hat and omega_hat must be square and of equal size")
    if recompute not in ("inverse", "clime"):
        raise ParameterError("recompute must be 'inverse' or 'clime'")
    tol = default_zero_tol(Om) if zero_tol is None else float(zero_tol)
    nodes = list(range(S.shape[0]))
    edges, order = [], []
    rnd = 0
    while nodes:
        try:
            n = len(nodes)
            blankets = {i: markov_blanket(Om, i, tol) for i in range(n)}
            thetas = {i: regression_coeffs(S, i, blankets[i]) for i in range(n)}
            v = find_terminal(Om, thetas, range(n), blankets)
        except (NumericError, StructuralError) as exc:
            raise type(exc)(f"elimination round {rnd}: {exc}") from exc
        child = nodes[v]
        for j in blankets[v]:
            edges.append((nodes[j], child, float(thetas[v][j])))
        order.append(child)
        if n == 1:
            break
        S = marginalize(S, v)
        nodes.pop(v)
        if recompute == "inverse":
            try:
                Om = np.linalg.inv(S)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"elimination round {rnd}: reduced covariance is singular", state=rnd) from exc
        else:
            Om = clime(S, clime_lambda).omega_hat
        rnd += 1
    return GraphEstimate(edges, order)
