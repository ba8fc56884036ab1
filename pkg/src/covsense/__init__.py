"""Sparse sensing-matrix design and compressed covariance / DAG recovery."""
from .causal import GraphEstimate, find_terminal, marginalize, markov_blanket, recover_structure, regression_coeffs
from .de import (DeParams, DeState, PrefDeState, SignalPrior, de_step_preferential, de_step_regular,
                 de_trajectory, default_beta, pref_trajectory, prox, prox_deriv)
from .design import (DesignResult, PreferentialDesignSpec, RegularDesignSpec, check_convergence_bounds,
                     design_preferential, design_regular)
from .errors import InfeasibleDesignError, NumericError, ParameterError, SamplingError, StructuralError
from .factorgraph import DegreeDistribution, KronDegreeLaw, coeff_a1, coeff_a2, kron_degree_law, moments
from .harness import (ExperimentConfig, ExperimentReport, metric_edge_pr, metric_mae, metric_support_pr,
                      run_experiment)
from .lp import LpResult, lp_solve
from .model import (Gbn, MeasurementSystem, gen_er_dag, measure, sample_covariance, simulate_sem,
                    true_covariance)
from .recovery import (CovEstimate, PrecisionEstimate, RecoveryConfig, clime, kron_adjoint, kron_apply,
                       recover_covariance)
from .sampler import SensingMatrix, baseline_left_regular, sample_preferential_matrix, sample_sensing_matrix

__all__ = [
    "CovEstimate",
    "DeParams",
    "DeState",
    "DegreeDistribution",
    "DesignResult",
    "ExperimentConfig",
    "ExperimentReport",
    "Gbn",
    "GraphEstimate",
    "InfeasibleDesignError",
    "KronDegreeLaw",
    "LpResult",
    "MeasurementSystem",
    "NumericError",
    "ParameterError",
    "PrecisionEstimate",
    "PrefDeState",
    "PreferentialDesignSpec",
    "RecoveryConfig",
    "RegularDesignSpec",
    "SamplingError",
    "SensingMatrix",
    "SignalPrior",
    "StructuralError",
    "baseline_left_regular",
    "check_convergence_bounds",
    "clime",
    "coeff_a1",
    "coeff_a2",
    "de_step_preferential",
    "de_step_regular",
    "de_trajectory",
    "default_beta",
    "design_preferential",
    "design_regular",
    "find_terminal",
    "gen_er_dag",
    "kron_adjoint",
    "kron_apply",
    "kron_degree_law",
    "lp_solve",
    "marginalize",
    "markov_blanket",
    "measure",
    "metric_edge_pr",
    "metric_mae",
    "metric_support_pr",
    "moments",
    "pref_trajectory",
    "prox",
    "prox_deriv",
    "recover_covariance",
    "recover_structure",
    "regression_coeffs",
    "run_experiment",
    "sample_covariance",
    "sample_preferential_matrix",
    "sample_sensing_matrix",
    "simulate_sem",
    "true_covariance",
]

__version__ = "0.1.0"
