"""Synthetic Gaussian Bayesian networks and the linear measurement system.

The SEM is ``x_i = W[:, i] @ x + z_i`` with ``z ~ N(0, noise_var I)``, so that
``x = (I - W^T)^{-1} z``.  Measurements are ``y = A x + n``.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, StructuralError
from .seeding import rng_for

SAMPLES_MAGIC = b"CSSAMP01"


@dataclass(frozen=True)
class Gbn:
    """Weighted DAG; ``W[i, j]`` is the weight of the edge ``x_i -> x_j``."""

    W: np.ndarray
    noise_var: float = 1.0

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ParameterError("W must be square")
        if np.any(np.diag(W) != 0):
            raise StructuralError("W must have a zero diagonal")
        if self.noise_var <= 0:
            raise ParameterError("noise_var must be positive")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def p(self) -> int:
        return self.W.shape[0]

    def edges(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.W)
        return [(int(i), int(j), float(self.W[i, j])) for i, j in zip(rows, cols)]

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; raises StructuralError on a cycle."""
        adj = self.W != 0
        indeg = adj.sum(axis=0)
        ready = sorted(np.flatnonzero(indeg == 0).tolist())
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in np.flatnonzero(adj[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(int(c))
            ready.sort()
        if len(order) != self.p:
            raise StructuralError("W contains a directed cycle")
        return order

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "edges": [[i, j, w] for i, j, w in self.edges()],
            "noise_var": float(self.noise_var),
        }

    @classmethod
    def from_json(cls, obj) -> "Gbn":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        W = np.zeros((int(obj["p"]), int(obj["p"])))
        for i, j, w in obj["edges"]:
            W[int(i), int(j)] = float(w)
        return cls(W, float(obj.get("noise_var", 1.0)))


@dataclass(frozen=True)
class MeasurementSystem:
    A: object  # SensingMatrix or a dense/sparse d x p array
    meas_noise_std: float = 0.0

    def __post_init__(self):
        if self.meas_noise_std < 0:
            raise ParameterError("meas_noise_std must be >= 0")


def gen_er_dag(p: int, edge_prob: float, weight_magnitude: float = 0.5, seed=0,
               noise_var: float = 1.0) -> Gbn:
    """Erdos-Renyi DAG under a uniformly random topological order.

    Each ordered pair admissible under the order carries an edge with
    probability ``edge_prob``; weights are ``+-weight_magnitude`` with equal odds.
    """
    if p < 1:
        raise ParameterError("p must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ParameterError("edge_prob must lie in [0, 1]")
    rng = rng_for(seed, "gbn")
    perm = rng.permutation(p)
    upper = np.triu(rng.random((p, p)) < edge_prob, k=1)
    signs = np.where(rng.random((p, p)) < 0.5, -1.0, 1.0)
    W_ordered = upper * signs * weight_magnitude
    W = np.zeros((p, p))
    W[np.ix_(perm, perm)] = W_ordered
    return Gbn(W, noise_var)


def default_edge_prob(p: int, c: float = 1.0) -> float:
    """Edge probability ``c / p`` keeping the expected degree fixed as p grows."""
    return min(1.0, c / p) if p > 1 else 0.0


def true_covariance(g: Gbn) -> np.ndarray:
    """Covariance ``noise_var (I - W^T)^{-1} (I - W^T)^{-T}``."""
    g.topological_order()
    M = np.linalg.inv(np.eye(g.p) - g.W.T)
    S = g.noise_var * M @ M.T
    return (S + S.T) / 2


def simulate_sem(g: Gbn, N: int, seed=0) -> np.ndarray:
    """Draw ``N`` samples of the SEM; returns an ``(N, p)`` array."""
    if N < 1:
        raise ParameterError("N must be >= 1")
    rng = rng_for(seed, "sem")
    Z = rng.standard_normal((N, g.p)) * np.sqrt(g.noise_var)
    X = np.zeros_like(Z)
    for i in g.topological_order():
        parents = np.flatnonzero(g.W[:, i])
        X[:, i] = Z[:, i] + X[:, parents] @ g.W[parents, i]
    return X


def _dense(A) -> np.ndarray:
    if hasattr(A, "to_dense"):
        return A.to_dense()
    if hasattr(A, "toarray"):
        return A.toarray()
    return np.asarray(A, dtype=float)


def measure(ms: MeasurementSystem, xs: np.ndarray, seed=0) -> np.ndarray:
    """Apply ``y = A x + n`` row-wise to an ``(N, p)`` sample array."""
    xs = np.asarray(xs, dtype=float)
    A = ms.A.to_csr() if hasattr(ms.A, "to_csr") else ms.A
    if xs.ndim != 2 or xs.shape[1] != A.shape[1]:
        raise ParameterError(f"samples have dimension {xs.shape[-1]}, sensing matrix expects {A.shape[1]}")
    ys = np.asarray((A @ xs.T).T)
    if ms.meas_noise_std > 0:
        rng = rng_for(seed, "measure")
        ys = ys + ms.meas_noise_std * rng.standard_normal(ys.shape)
    return ys


def sample_covariance(ys: np.ndarray, centered: bool = False) -> np.ndarray:
    """Second-moment matrix ``(1/N) sum_i y_i y_i^T`` (uncentered by default)."""
    ys = np.asarray(ys, dtype=float)
    if ys.ndim != 2 or ys.shape[0] < 1:
        raise ParameterError("need an (N, d) array with N >= 1")
    if centered:
        ys = ys - ys.mean(axis=0)
    S = ys.T @ ys / ys.shape[0]
    return (S + S.T) / 2


def write_samples(path, ys: np.ndarray, text: bool = False) -> None:
    """Write samples; binary layout is a 16-byte header then column-major float64.

    Header: 8-byte magic, uint32 rows (dimension), uint32 cols (sample count).
    """
    ys = np.asarray(ys, dtype=float)
    if not np.all(np.isfinite(ys)):
        raise ParameterError("samples must be finite")
    path = Path(path)
    if text:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            for row in ys:
                w.writerow([repr(float(v)) for v in row])
        return
    N, dim = ys.shape
    with path.open("wb") as fh:
        fh.write(SAMPLES_MAGIC + struct.pack("<II", dim, N))
        fh.write(np.ascontiguousarray(ys, dtype="<f8").tobytes())


def read_samples(path, text: bool = False) -> np.ndarray:
    path = Path(path)
    if text:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    raw = path.read_bytes()
    if raw[:8] != SAMPLES_MAGIC:
        raise ParameterError(f"{path} is not a sample file")
    dim, N = struct.unpack("<II", raw[8:16])
    return np.frombuffer(raw[16:], dtype="<f8").reshape(N, dim).copy()
