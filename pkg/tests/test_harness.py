import json

import numpy as np
import pytest

import covsense.harness as harness
from covsense.causal import GraphEstimate
from covsense.errors import NumericError, ParameterError
from covsense.harness import (ExperimentConfig, baseline_extremes, condition_covariance, metric_edge_pr,
                              metric_mae, metric_support_pr, precision_recall, prune_covariance, run_experiment,
                              support_of)
from covsense.model import Gbn


def test_mae_cases():
    T = np.eye(4)
    assert metric_mae(T, T) == 0.0
    E = T.copy()
    E[0, 1] += 0.3
    assert metric_mae(E, T) == pytest.approx(0.3)
    F = T.copy()
    F[3, 3] += 5.0
    assert metric_mae(F, T, block=(0, 2)) == 0.0
    with pytest.raises(ParameterError):
        metric_mae(np.eye(2), np.eye(3))


def test_support_pr_hand_case():
    truth = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 0), (2, 3), (3, 2)]:
        truth[i, j] = 1.0
    est = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 0), (2, 3), (4, 5), (5, 4)]:
        est[i, j] = 1.0
    assert metric_support_pr(est, truth) == pytest.approx((3 / 5, 3 / 4))


def test_support_pr_extremes():
    truth = np.eye(5)
    assert metric_support_pr(truth, truth) == (1.0, 1.0)
    assert metric_support_pr(np.ones((5, 5)), truth) == pytest.approx((5 / 25, 1.0))
    assert metric_support_pr(np.zeros((5, 5)), truth) == (0.0, 0.0)
    assert metric_support_pr(np.zeros((5, 5)), np.zeros((5, 5))) == (1.0, 1.0)


def test_support_threshold_is_relative():
    M = np.array([[10.0, 0.5], [2.0, 1.0]])
    assert np.array_equal(support_of(M, 0.1), np.array([[True, False], [True, False]]))


def test_precision_recall_conventions():
    assert precision_recall(set(), set()) == (1.0, 1.0)
    assert precision_recall(set(), {(0, 1)}) == (0.0, 0.0)
    assert precision_recall({(0, 1)}, set()) == (0.0, 1.0)


def test_edge_pr_direction_and_restriction():
    W = np.zeros((4, 4))
    W[0, 1] = 0.5
    W[2, 3] = 0.5
    g = Gbn(W)
    same = GraphEstimate([(0, 1, 0.5), (2, 3, 0.5)], [3, 2, 1, 0])
    assert metric_edge_pr(same, g) == (1.0, 1.0)
    flipped = GraphEstimate([(1, 0, 0.5), (2, 3, 0.5)], [0, 1, 3, 2])
    assert metric_edge_pr(flipped, g) == (0.5, 0.5)
    bad_low = GraphEstimate([(0, 1, 0.5), (3, 2, 0.5)], [1, 0, 2, 3])
    assert metric_edge_pr(bad_low, g, restrict_to_high=True, n_H=2) == (1.0, 1.0)


def test_prune_and_condition():
    S = np.array([[1.0, 0.05, 0.5], [0.05, 1.0, 0.0], [0.5, 0.0, 0.01]])
    P = prune_covariance(S, 0.1)
    assert P[0, 1] == 0.0 and P[0, 2] == 0.5 and P[2, 2] == 0.01
    assert np.array_equal(prune_covariance(S, 0.0), S)
    C, shift = condition_covariance(P, 0.05)
    floor = 0.05 * np.mean(np.diag(P))
    assert shift > 0 and np.linalg.eigvalsh(C)[0] == pytest.approx(floor)
    C2, shift2 = condition_covariance(np.eye(3), 0.05)
    assert shift2 == 0.0 and np.array_equal(C2, np.eye(3))


def test_config_validation_and_json():
    cfg = ExperimentConfig(p=10, d=5, seeds=[1, 2])
    assert ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    with pytest.raises(ParameterError):
        ExperimentConfig.from_json({"p": 10, "unknown": 1})
    with pytest.raises(ParameterError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ParameterError):
        ExperimentConfig(p=10, d=11)
    with pytest.raises(ParameterError):
        ExperimentConfig(methods=["pref"])
    with pytest.raises(ParameterError):
        ExperimentConfig(methods=["magic"])


def test_baseline_extremes_direction():
    agg = {"baseline_2": {"cov_mae": {"mean": 0.5}, "edge_recall": {"mean": 0.4}},
           "baseline_3": {"cov_mae": {"mean": 0.2}, "edge_recall": {"mean": 0.9}},
           "de": {"cov_mae": {"mean": 0.0}}}
    assert baseline_extremes([], agg, "cov_mae") == {"best": "baseline_3", "worst": "baseline_2"}
    assert baseline_extremes([], agg, "edge_recall") == {"best": "baseline_3", "worst": "baseline_2"}
    assert baseline_extremes([], agg, "missing") == {}


def small_cfg(**kw):
    base = dict(p=20, N=400, seeds=[0, 1], k=4.0, c0=1.0, d=12, baseline_deltas=[2, 3], misfit_target=0.05,
                mu_grid=5, recovery_max_iters=300)
    return ExperimentConfig(**(base | kw))


def test_small_experiment_report_and_files(tmp_path):
    rep = run_experiment(small_cfg(out_dir=str(tmp_path)))
    assert not rep.failures
    assert {r["method"] for r in rep.rows} == {"de", "baseline_2", "baseline_3"}
    for r in rep.rows:
        assert r["cov_mae"] >= 0
        for k in ("cov_support_precision", "cov_support_recall", "edge_precision", "edge_recall"):
            assert 0.0 <= r[k] <= 1.0
    vals = np.array(rep.method_values("de", "cov_mae"))
    assert rep.aggregates["de"]["cov_mae"]["mean"] == float(vals.mean())
    assert rep.aggregates["de"]["cov_mae"]["std"] == float(vals.std())
    assert (tmp_path / "report.json").exists() and (tmp_path / "metrics.csv").exists()
    lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + len(rep.rows)


def test_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(small_cfg(out_dir=str(a), structure=False))
    run_experiment(small_cfg(out_dir=str(b), structure=False))
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_uncompressed_sanity():
    rep = run_experiment(ExperimentConfig(p=12, d=12, N=200_000, seeds=[0], methods=["identity"],
                                          misfit_target=1e-3, structure=False))
    row = rep.rows[0]
    assert row["cov_mae"] < 0.05
    assert row["cov_support_precision"] == 1.0 and row["cov_support_recall"] == 1.0


def test_preferential_experiment_reports_high_block():
    cfg = ExperimentConfig(p=60, n_H=15, d=20, N=500, seeds=[0], methods=["pref"], k_HH=22.5, k_HL=22.275,
                           k_LL=66.825, rho_H=3, rho_L=2, structure=False, mu_grid=5, recovery_max_iters=300)
    rep = run_experiment(cfg)
    assert not rep.failures
    assert "hh_cov_mae" in rep.rows[0] and rep.designs["pref"]["rho_sampled"]


def test_stage_failure_is_recorded(monkeypatch):
    real = harness.select_mu

    def flaky(A, *args, **kw):
        if A.shape[0] == 12 and getattr(A, "nnz", 0) == 2 * 20:
            raise NumericError("injected")
        return real(A, *args, **kw)

    monkeypatch.setattr(harness, "select_mu", flaky)
    rep = run_experiment(small_cfg(seeds=[0], methods=["de", "baseline"]))
    assert [f["method"] for f in rep.failures] == ["baseline_2"]
    failed = [r for r in rep.rows if "error" in r]
    assert len(failed) == 1 and "injected" in failed[0]["error"]
    assert not rep.aggregates["baseline_2"] and rep.aggregates["de"]
