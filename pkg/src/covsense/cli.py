"""Command-line entry point: ``covsense <subcommand> ...``.

Exit status is 0 on success and 2 when a stage fails (an experiment with any
failed trial still writes its partial report).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .causal import recover_structure
from .design import (DesignResult, PreferentialDesignSpec, RegularDesignSpec, design_preferential,
                     design_regular)
from .errors import InfeasibleDesignError, NumericError, ParameterError, SamplingError, StructuralError
from .factorgraph import DegreeDistribution
from .harness import ExperimentConfig, run_experiment
from .model import (Gbn, MeasurementSystem, default_edge_prob, gen_er_dag, measure, read_samples,
                    sample_covariance, simulate_sem, write_samples)
from .recovery import RecoveryConfig, clime, recover_covariance, select_mu
from .sampler import SensingMatrix, baseline_left_regular, sample_preferential_matrix, sample_sensing_matrix

FAILURE = 2
_ERRORS = (ParameterError, NumericError, StructuralError, SamplingError, InfeasibleDesignError,
           np.linalg.LinAlgError, FileNotFoundError, KeyError, json.JSONDecodeError)


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def _save_matrix_csv(path, M) -> None:
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def _dist(obj) -> DegreeDistribution:
    """Serialized distribution, or a plain ``{degree: weight}`` mapping."""
    if "weights" in obj:
        return DegreeDistribution.from_json(obj)
    return DegreeDistribution.from_mapping({int(k): float(v) for k, v in obj.items()})


def cmd_design(args) -> int:
    if args.kind == "regular":
        spec = RegularDesignSpec(args.p, args.k, args.c0, args.dv, args.dc, args.mode)
        res = design_regular(spec)
    else:
        rhos = json.loads(Path(args.rho_file).read_text())
        spec = PreferentialDesignSpec(args.nh, args.nl, args.khh, args.khl, args.kll,
                                      args.dvh, args.dvl, args.c0)
        res = design_preferential(spec, _dist(rhos["rho_H"]), _dist(rhos["rho_L"]))
    _emit(res.to_json(), args.out)
    return 0


def cmd_sample(args) -> int:
    if args.baseline is not None:
        M = baseline_left_regular(args.baseline, args.d, args.p, seed=args.seed)
    else:
        res = DesignResult.from_json(json.loads(Path(args.design).read_text()))
        if res.kind == "preferential":
            M = sample_preferential_matrix({"H": res.dists["lambda_H"], "L": res.dists["lambda_L"]},
                                           {"H": res.dists["rho_H"], "L": res.dists["rho_L"]},
                                           args.d, args.nh, args.p - args.nh, seed=args.seed)
        else:
            M = sample_sensing_matrix(res.lam, res.rho, args.d, args.p, seed=args.seed)
    M.write(args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.gbn:
        g = Gbn.from_json(args.gbn)
    else:
        g = gen_er_dag(args.p, default_edge_prob(args.p, args.edge_c), args.weight, seed=args.seed)
    if args.gbn_out:
        _emit(g.to_json(), args.gbn_out)
    xs = simulate_sem(g, args.N, seed=args.seed)
    if args.matrix:
        xs = measure(MeasurementSystem(SensingMatrix.read(args.matrix), args.noise_std), xs, seed=args.seed)
    write_samples(args.out, xs, text=args.text)
    return 0


def cmd_recover(args) -> int:
    A = SensingMatrix.read(args.matrix)
    if args.samples:
        sigma_y = sample_covariance(read_samples(args.samples, text=args.text))
    else:
        sigma_y = _load_matrix_csv(args.sigma_y)
    if args.mu is None:
        mu, est, _ = select_mu(A, sigma_y, args.misfit_target)
    else:
        mu = args.mu
        est = recover_covariance(A, sigma_y, RecoveryConfig(mu, args.max_iters))
    _save_matrix_csv(args.out, est.sigma_hat)
    sys.stderr.write(f"mu={mu!r} residual={est.residual!r} iterations={est.iterations} "
                     f"converged={est.converged}\n")
    return 0 if est.converged else FAILURE


def cmd_clime(args) -> int:
    res = clime(_load_matrix_csv(args.sigma), args.lam)
    _save_matrix_csv(args.out, res.omega_hat)
    if res.flagged:
        sys.stderr.write(f"ridge fallback used for columns {res.flagged}\n")
        return FAILURE
    return 0


def cmd_causal(args) -> int:
    S = _load_matrix_csv(args.sigma)
    Om = _load_matrix_csv(args.omega) if args.omega else np.linalg.inv(S)
    ge = recover_structure(S, Om, args.zero_tol, args.recompute, args.clime_lambda)
    _emit(ge.to_json(), args.out)
    return 0


def cmd_experiment(args) -> int:
    obj = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        obj["seeds"] = [args.seed]
    if args.out:
        obj["out_dir"] = args.out
    cfg = ExperimentConfig.from_json(obj)
    report = run_experiment(cfg)
    if not cfg.out_dir:
        _emit(report.to_json(), None)
    for f in report.failures:
        sys.stderr.write(f"seed {f['seed']} {f['method']}: {f['error']}\n")
    return FAILURE if report.failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covsense", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="design degree distributions")
    dsub = d.add_subparsers(dest="kind", required=True)
    r = dsub.add_parser("regular")
    r.add_argument("--p", type=int, required=True)
    r.add_argument("--k", type=float, required=True)
    r.add_argument("--c0", type=float, default=1.0)
    r.add_argument("--dv", type=int, default=20)
    r.add_argument("--dc", type=int, default=20)
    r.add_argument("--mode", choices=["fixed_row", "fixed_col", "both"], default="both")
    r.add_argument("--out")
    pr = dsub.add_parser("pref")
    pr.add_argument("--nh", type=int, required=True)
    pr.add_argument("--nl", type=int, required=True)
    pr.add_argument("--khh", type=float, required=True)
    pr.add_argument("--khl", type=float, required=True)
    pr.add_argument("--kll", type=float, required=True)
    pr.add_argument("--rho-file", required=True, help="JSON with rho_H and rho_L distributions")
    pr.add_argument("--dvh", type=int, default=20)
    pr.add_argument("--dvl", type=int, default=20)
    pr.add_argument("--c0", type=float, default=1.0)
    pr.add_argument("--out")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("sample", help="instantiate a sensing matrix")
    s.add_argument("--design", help="design JSON from the design subcommand")
    s.add_argument("--baseline", type=int, help="delta for a delta-left-regular baseline")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--nh", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("simulate", help="simulate SEM samples, optionally compressed")
    m.add_argument("--p", type=int, default=50)
    m.add_argument("--edge-c", type=float, default=1.0)
    m.add_argument("--weight", type=float, default=0.5)
    m.add_argument("--gbn", help="GBN JSON to simulate instead of a random graph")
    m.add_argument("--gbn-out")
    m.add_argument("--N", type=int, default=1000)
    m.add_argument("--matrix", help="sensing matrix file; samples are compressed when given")
    m.add_argument("--noise-std", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--text", action="store_true")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)

    rc = sub.add_parser("recover", help="L1 covariance recovery")
    rc.add_argument("--matrix", required=True)
    src = rc.add_mutually_exclusive_group(required=True)
    src.add_argument("--sigma-y", help="CSV of the compressed second-moment matrix")
    src.add_argument("--samples", help="compressed sample file")
    rc.add_argument("--text", action="store_true")
    rc.add_argument("--mu", type=float, help="penalty; selected on a grid when omitted")
    rc.add_argument("--misfit-target", type=float, default=0.05)
    rc.add_argument("--max-iters", type=int, default=5000)
    rc.add_argument("--out", required=True)
    rc.set_defaults(func=cmd_recover)

    c = sub.add_parser("clime", help="CLIME precision estimate")
    c.add_argument("--sigma", required=True)
    c.add_argument("--lambda", dest="lam", type=float, default=0.1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_clime)

    g = sub.add_parser("causal", help="DAG recovery from covariance and precision")
    g.add_argument("--sigma", required=True)
    g.add_argument("--omega")
    g.add_argument("--zero-tol", type=float)
    g.add_argument("--recompute", choices=["inverse", "clime"], default="inverse")
    g.add_argument("--clime-lambda", type=float, default=0.1)
    g.add_argument("--out")
    g.set_defaults(func=cmd_causal)

    e = sub.add_parser("experiment", help="run a full experiment from a JSON config")
    e.add_argument("--config")
    e.add_argument("--out")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
