"""Experiment orchestration: design, sample, simulate, recover, score.

For every seed a random GBN is drawn and simulated once; each sensing method
(DE-designed regular matrix, preferential matrix, delta-left-regular
baselines) then compresses the same samples, and the pipeline recovers the
covariance, the precision (CLIME) and the DAG.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .causal import GraphEstimate, recover_structure
from .design import (PreferentialDesignSpec, RegularDesignSpec, design_preferential, design_regular,
                     row_law_for_dimension)
from .errors import InfeasibleDesignError, NumericError, ParameterError, SamplingError, StructuralError
from .factorgraph import DegreeDistribution
from .model import Gbn, MeasurementSystem, default_edge_prob, gen_er_dag, measure, sample_covariance, simulate_sem, true_covariance
from .recovery import clime, select_mu
from .sampler import baseline_left_regular, sample_preferential_matrix, sample_sensing_matrix
from .seeding import sub_seed

METRICS = ("cov_mae", "cov_support_precision", "cov_support_recall", "edge_precision", "edge_recall")
HIGHER_IS_BETTER = {"cov_mae": False, "cov_support_precision": True, "cov_support_recall": True,
                    "edge_precision": True, "edge_recall": True}
STAGE_ERRORS = (ParameterError, NumericError, StructuralError, SamplingError, InfeasibleDesignError,
                np.linalg.LinAlgError)


# -- metrics -------------------------------------------------------------------

def _block(M: np.ndarray, block):
    if block is None:
        return M
    lo, hi = block
    return M[lo:hi, lo:hi]


def metric_mae(est: np.ndarray, truth: np.ndarray, block=None) -> float:
    """Maximum absolute entry error, optionally over the square block ``[lo, hi)``."""
    est, truth = np.asarray(est, dtype=float), np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ParameterError(f"shape mismatch {est.shape} vs {truth.shape}")
    return float(np.abs(_block(est, block) - _block(truth, block)).max())


def support_of(M: np.ndarray, rel_threshold: float = 0.1) -> np.ndarray:
    """Entries with ``|M_ij| > rel_threshold * max|M|``."""
    M = np.asarray(M, dtype=float)
    top = np.abs(M).max()
    if top == 0:
        return np.zeros(M.shape, dtype=bool)
    return np.abs(M) > rel_threshold * top


def precision_recall(est_set: set, true_set: set) -> tuple[float, float]:
    """Precision is 1 for an empty estimate of an empty truth and 0 otherwise; recall of an empty truth is 1."""
    hit = len(est_set & true_set)
    if est_set:
        prec = hit / len(est_set)
    else:
        prec = 1.0 if not true_set else 0.0
    rec = hit / len(true_set) if true_set else 1.0
    return prec, rec


def metric_support_pr(est: np.ndarray, truth: np.ndarray, rel_threshold: float = 0.1,
                      block=None) -> tuple[float, float]:
    est, truth = np.asarray(est), np.asarray(truth)
    if est.shape != truth.shape:
        raise ParameterError(f"shape mismatch {est.shape} vs {truth.shape}")
    S_hat = support_of(_block(est, block), rel_threshold)
    S = support_of(_block(truth, block), rel_threshold)
    return precision_recall(set(zip(*np.nonzero(S_hat))), set(zip(*np.nonzero(S))))


def metric_edge_pr(est: GraphEstimate, truth: Gbn, restrict_to_high: bool = False,
                   n_H: int = 0) -> tuple[float, float]:
    """Directed-edge precision/recall; optionally only edges among the first ``n_H`` nodes."""
    E_hat = est.edge_set()
    E = {(i, j) for i, j, _ in truth.edges()}
    if restrict_to_high:
        E_hat = {(i, j) for i, j in E_hat if i < n_H and j < n_H}
        E = {(i, j) for i, j in E if i < n_H and j < n_H}
    return precision_recall(E_hat, E)


# -- configuration ---------------------------------------------------------------

@dataclass
class ExperimentConfig:
    p: int = 50
    d: int | None = None
    n_H: int = 0
    N: int = 5000
    seeds: list = field(default_factory=lambda: list(range(10)))
    k: float = 12.0
    c0: float = 2.0
    dv: int = 20
    dc: int = 20
    mode: str = "fixed_row"
    baseline_deltas: list = field(default_factory=lambda: list(range(2, 9)))
    noise_std: float = 0.0
    edge_c: float = 1.0
    weight_magnitude: float = 0.5
    noise_var: float = 1.0
    misfit_target: float = 0.01
    mu_grid: int = 10
    mu_span: float = 1e-4
    recovery_max_iters: int = 2000
    recovery_tol: float = 1e-8
    support_threshold: float = 0.1
    clime_lambda: float = 0.1
    structure: bool = True
    structure_prune: float = 0.1
    structure_ridge: float = 0.05
    structure_zero_tol: float = 1e-3
    recompute: str = "inverse"
    methods: list = field(default_factory=lambda: ["de", "baseline"])
    k_HH: float | None = None
    k_HL: float | None = None
    k_LL: float | None = None
    dv_H: int = 20
    dv_L: int = 20
    rho_H: int = 4
    rho_L: int = 4
    out_dir: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ParameterError("seeds must be nonempty")
        if self.d is not None and self.d > self.p:
            raise ParameterError("d must not exceed p")
        if not 0 <= self.n_H < self.p:
            raise ParameterError("need 0 <= n_H < p")
        if "pref" in self.methods and self.n_H == 0:
            raise ParameterError("the preferential method needs n_H > 0")
        unknown = set(self.methods) - {"de", "pref", "baseline", "identity"}
        if unknown:
            raise ParameterError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ParameterError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def high_block(self):
        return (0, self.n_H) if self.n_H > 0 else None


@dataclass
class ExperimentReport:
    config: dict
    designs: dict
    rows: list
    aggregates: dict
    failures: list
    timings: list = field(default_factory=list)

    def to_json(self) -> dict:
        # wall-clock timings are kept out of the report so it is reproducible byte for byte
        return {"config": self.config, "designs": self.designs, "rows": self.rows,
                "aggregates": self.aggregates, "failures": self.failures}

    def method_values(self, method: str, metric: str) -> list:
        return [r[metric] for r in self.rows if r["method"] == method]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        (out / "timings.json").write_text(json.dumps(self.timings, indent=2) + "\n")
        cols = ["seed", "method", "d", "mu"] + [m for m in self.rows[0] if m not in ("seed", "method", "d", "mu", "error")] + ["error"] \
            if self.rows else ["seed", "method"]
        with (out / "metrics.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


# -- pipeline --------------------------------------------------------------------

def _design_regular(cfg: ExperimentConfig):
    res = design_regular(RegularDesignSpec(cfg.p, cfg.k, cfg.c0, cfg.dv, cfg.dc, cfg.mode))
    d_design = cfg.p * res.objective
    return res, d_design


def _design_pref(cfg: ExperimentConfig):
    n_L = cfg.p - cfg.n_H
    spec = PreferentialDesignSpec(cfg.n_H, n_L, cfg.k_HH, cfg.k_HL, cfg.k_LL, cfg.dv_H, cfg.dv_L, cfg.c0)
    res = design_preferential(spec, DegreeDistribution.point_mass(cfg.rho_H), DegreeDistribution.point_mass(cfg.rho_L))
    return res


def build_methods(cfg: ExperimentConfig):
    """Design step shared by all seeds; returns ``(d, method specs, design summaries)``."""
    designs, specs = {}, {}
    d = cfg.d
    if "de" in cfg.methods or d is None:
        res, d_design = _design_regular(cfg)
        designs["de"] = res.to_json() | {"d_design": d_design}
        if d is None:
            d = max(2, int(round(d_design)))
        rho = row_law_for_dimension(cfg.p * res.lam.mean(), d, res.rho.max_degree)
        designs["de"]["rho_sampled"] = rho.to_json()
        specs["de"] = ("regular", res.lam, rho)
    if "pref" in cfg.methods:
        res = _design_pref(cfg)
        n_L = cfg.p - cfg.n_H
        lam_H, lam_L = res.dists["lambda_H"], res.dists["lambda_L"]
        rho_H = row_law_for_dimension(cfg.n_H * lam_H.mean(), d, res.dists["rho_H"].max_degree)
        rho_L = row_law_for_dimension(n_L * lam_L.mean(), d, res.dists["rho_L"].max_degree)
        designs["pref"] = res.to_json() | {"rho_sampled": {"H": rho_H.to_json(), "L": rho_L.to_json()}}
        specs["pref"] = ("preferential", {"H": lam_H, "L": lam_L}, {"H": rho_H, "L": rho_L})
    if "baseline" in cfg.methods:
        for delta in cfg.baseline_deltas:
            if delta <= d:
                specs[f"baseline_{delta}"] = ("baseline", delta)
    if "identity" in cfg.methods:
        specs["identity"] = ("identity",)
    return d, specs, designs


def _matrix(spec, cfg: ExperimentConfig, d: int, seed: int):
    kind = spec[0]
    if kind == "regular":
        return sample_sensing_matrix(spec[1], spec[2], d, cfg.p, seed=sub_seed(seed, "matrix", "de"))
    if kind == "preferential":
        return sample_preferential_matrix(spec[1], spec[2], d, cfg.n_H, cfg.p - cfg.n_H,
                                          seed=sub_seed(seed, "matrix", "pref"))
    if kind == "baseline":
        return baseline_left_regular(spec[1], d, cfg.p, seed=sub_seed(seed, "matrix", "baseline"))
    return np.eye(cfg.p)


def run_trial(cfg: ExperimentConfig, method: str, spec, d: int, seed: int, g: Gbn, sigma: np.ndarray,
              xs: np.ndarray, timings: dict) -> dict:
    row = {"seed": seed, "method": method}
    t0 = time.perf_counter()
    A = _matrix(spec, cfg, d, seed)
    row["d"] = int(A.shape[0])
    ys = measure(MeasurementSystem(A, cfg.noise_std), xs, seed=sub_seed(seed, "noise", method))
    sigma_y = sample_covariance(ys)
    timings["measure"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mu, est, _ = select_mu(A, sigma_y, cfg.misfit_target, cfg.mu_grid, cfg.mu_span,
                           cfg.recovery_max_iters, cfg.recovery_tol)
    S_hat = est.sigma_hat
    timings["recover"] = time.perf_counter() - t0
    row["mu"] = mu
    row["cov_mae"] = metric_mae(S_hat, sigma)
    row["cov_support_precision"], row["cov_support_recall"] = metric_support_pr(S_hat, sigma, cfg.support_threshold)
    hb = cfg.high_block
    if hb is not None:
        row["hh_cov_mae"] = metric_mae(S_hat, sigma, hb)
        row["hh_cov_support_precision"], row["hh_cov_support_recall"] = metric_support_pr(
            S_hat, sigma, cfg.support_threshold, hb)

    if cfg.structure:
        t0 = time.perf_counter()
        S_pd, shift = condition_covariance(prune_covariance(S_hat, cfg.structure_prune), cfg.structure_ridge)
        row["ridge_shift"] = shift
        prec = clime(S_pd, cfg.clime_lambda)
        zero_tol = cfg.structure_zero_tol * float(np.abs(prec.omega_hat).max())
        ge = recover_structure(S_pd, prec.omega_hat, zero_tol, cfg.recompute, cfg.clime_lambda)
        timings["structure"] = time.perf_counter() - t0
        row["clime_flagged"] = len(prec.flagged)
        row["edge_precision"], row["edge_recall"] = metric_edge_pr(ge, g)
        if hb is not None:
            row["hh_edge_precision"], row["hh_edge_recall"] = metric_edge_pr(ge, g, True, cfg.n_H)
    return row


def prune_covariance(S: np.ndarray, rel_threshold: float) -> np.ndarray:
    """Zero off-diagonal entries outside ``support_of(S, rel_threshold)``."""
    S = np.array(S, dtype=float)
    if rel_threshold <= 0:
        return S
    keep = support_of(S, rel_threshold) | np.eye(S.shape[0], dtype=bool)
    return np.where(keep, S, 0.0)


def condition_covariance(S: np.ndarray, rel_floor: float) -> tuple[np.ndarray, float]:
    """Shift the diagonal so the smallest eigenvalue is ``rel_floor * mean(diag)``.

    The L1 estimate is not constrained to be positive definite; the
    regressions of the structure step need it to be.
    """
    S = (S + S.T) / 2
    floor = rel_floor * max(float(np.mean(np.diag(S))), 1e-12)
    low = float(np.linalg.eigvalsh(S)[0])
    shift = max(0.0, floor - low)
    return S + shift * np.eye(S.shape[0]), shift


def _aggregate(rows: list, methods: list) -> dict:
    agg = {}
    for m in methods:
        mrows = [r for r in rows if r["method"] == m and "error" not in r]
        keys = sorted({k for r in mrows for k in r if k not in ("seed", "method", "error", "d")})
        agg[m] = {}
        for k in keys:
            vals = np.array([r[k] for r in mrows], dtype=float)
            agg[m][k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return agg


def baseline_extremes(report_rows: list, aggregates: dict, metric: str) -> dict:
    """Best and worst baseline delta for ``metric`` judged by the mean over seeds."""
    bases = [m for m in aggregates if m.startswith("baseline_") and metric in aggregates[m]]
    if not bases:
        return {}
    sign = 1.0 if HIGHER_IS_BETTER.get(metric.replace("hh_", ""), True) else -1.0
    ranked = sorted(bases, key=lambda m: (-sign * aggregates[m][metric]["mean"], m))
    return {"best": ranked[0], "worst": ranked[-1]}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    d, specs, designs = build_methods(cfg)
    rows, failures, timings = [], [], []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        g = gen_er_dag(cfg.p, default_edge_prob(cfg.p, cfg.edge_c), cfg.weight_magnitude,
                       seed=sub_seed(seed, "gbn"), noise_var=cfg.noise_var)
        sigma = true_covariance(g)
        xs = simulate_sem(g, cfg.N, seed=sub_seed(seed, "sem"))
        timings.append({"seed": seed, "method": None, "simulate": time.perf_counter() - t0})
        for method, spec in specs.items():
            tm = {}
            try:
                row = run_trial(cfg, method, spec, d, seed, g, sigma, xs, tm)
            except STAGE_ERRORS as exc:
                row = {"seed": seed, "method": method, "error": f"{type(exc).__name__}: {exc}"}
                failures.append({"seed": seed, "method": method, "error": row["error"]})
            rows.append(row)
            timings.append({"seed": seed, "method": method, **tm})
    aggregates = _aggregate(rows, list(specs))
    extremes = {}
    for metric in sorted({k for a in aggregates.values() for k in a}):
        ex = baseline_extremes(rows, aggregates, metric)
        if ex:
            extremes[metric] = ex
    aggregates["baseline_extremes"] = extremes
    # the output location is not part of the experiment, so reports written to different places still match
    echo = {k: v for k, v in cfg.to_json().items() if k != "out_dir"}
    report = ExperimentReport(echo, designs | {"d": d}, rows, aggregates, failures, timings)
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report
