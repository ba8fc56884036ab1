"""Degree-distribution design for regular and preferential sensing matrices.

Regular design minimizes ``d/p = sum i lam_i / sum j rho_j`` subject to

    a1^2 <= p^2 / k^2
    a2   <= p^2 / (2 c0 k^2 log(p/k))

With one of the two distributions fixed both constraints are linear in the
other (``a1`` and ``a2`` factor into moment products), so each half-step is a
small linear program.

Preferential design fixes the row-side laws ``rho_H``, ``rho_L`` and chooses
the column laws ``lam_H``, ``lam_L`` of the high- and low-priority column
blocks under three constraints: a nonzero-count consistency equality, a
variance-contraction bound (quadratic in the inverse-degree moments) and two
error-ordering inequalities (linear in the inverse-square-root moments).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleDesignError, ParameterError
from .factorgraph import DegreeDistribution, coeff_a1, coeff_a2, moments
from .lp import lp_solve

SLACK_TOL = 1e-9
MODES = ("fixed_row", "fixed_col", "both")


@dataclass(frozen=True)
class RegularDesignSpec:
    p: int
    k: float
    c0: float = 1.0
    dv: int = 20
    dc: int = 20
    mode: str = "both"

    def __post_init__(self):
        if not 2 <= self.k < self.p:
            raise ParameterError("need 2 <= k < p")
        if self.dv < 2 or self.dc < 2:
            raise ParameterError("maximum degrees must be >= 2")
        if self.c0 <= 0:
            raise ParameterError("c0 must be positive")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")

    @property
    def a1_sq_bound(self) -> float:
        return (self.p / self.k) ** 2

    @property
    def a2_bound(self) -> float:
        return self.p ** 2 / (2.0 * self.c0 * self.k ** 2 * math.log(self.p / self.k))


@dataclass
class DesignResult:
    """Designed distributions, achieved ``d/p`` and per-constraint slacks (bound - value)."""

    dists: dict
    objective: float
    feasibility_report: dict
    kind: str = "regular"

    @property
    def lam(self) -> DegreeDistribution:
        return self.dists["lambda"]

    @property
    def rho(self) -> DegreeDistribution:
        return self.dists["rho"]

    def min_slack(self) -> float:
        return min(c["slack"] for c in self.feasibility_report["constraints"].values())

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "objective": self.objective,
            "distributions": {k: v.to_json() for k, v in self.dists.items()},
            "feasibility_report": self.feasibility_report,
        }

    @classmethod
    def from_json(cls, obj) -> "DesignResult":
        dists = {k: DegreeDistribution.from_json(v) for k, v in obj["distributions"].items()}
        return cls(dists, float(obj["objective"]), obj["feasibility_report"], obj.get("kind", "regular"))


def _entry(value: float, bound: float, description: str) -> dict:
    slack = bound - value
    return {"value": value, "bound": bound, "slack": slack, "ok": bool(slack >= -SLACK_TOL),
            "inequality": description}


def check_convergence_bounds(lam: DegreeDistribution, rho: DegreeDistribution, p: float, k: float,
                    c0: float = 1.0) -> dict:
    """Slacks of the two sufficient conditions for DE convergence to zero."""
    if not 0 < k < p:
        raise ParameterError("need 0 < k < p")
    a1, a2 = coeff_a1(lam, rho), coeff_a2(lam, rho)
    b1 = (p / k) ** 2
    b2 = p ** 2 / (2.0 * c0 * k ** 2 * math.log(p / k))
    cons = {
        "a1_sq": _entry(a1 * a1, b1, "a1^2 <= p^2/k^2"),
        "a2": _entry(a2, b2, "a2 <= p^2/(2 c0 k^2 log(p/k))"),
    }
    return {"constraints": cons, "feasible": all(c["ok"] for c in cons.values()),
            "a1": a1, "a2": a2}


def _dist(x: np.ndarray) -> DegreeDistribution:
    w = np.concatenate([[0.0], x])
    w[np.abs(w) < 1e-15] = 0.0
    return DegreeDistribution.normalized(w)


def _solve_lambda(rho: DegreeDistribution, dv: int, s1: float, s2: float):
    """Minimize mean column degree with ``rho`` fixed; ``None`` if infeasible.

    Returns ``(lam, binding)`` where ``binding`` names the violated bound when
    the LP has no solution.
    """
    j = np.arange(2, dv + 1, dtype=float)
    r_sqrt, r_lin = moments(rho, 0.5), moments(rho, 1.0)
    res = lp_solve(j, A_ub=np.vstack([1 / np.sqrt(j), 1 / j]),
                   b_ub=[s1 / r_sqrt, s2 / r_lin],
                   A_eq=np.ones((1, j.size)), b_eq=[1.0])
    if not res.ok:
        return None, _binding_lambda(j, s1 / r_sqrt, s2 / r_lin)
    return _dist(res.x), None


def _binding_lambda(j, c1, c2):
    # smallest achievable moments sit at the largest degree
    if 1 / math.sqrt(j[-1]) > c1:
        return "a1_sq"
    return "a2"


def _solve_rho(lam: DegreeDistribution, dc: int, s1: float, s2: float):
    """Maximize mean row degree with ``lam`` fixed; ``None`` if infeasible."""
    i = np.arange(2, dc + 1, dtype=float)
    l_sqrt, l_lin = moments(lam, -0.5), moments(lam, -1.0)
    res = lp_solve(-i, A_ub=np.vstack([np.sqrt(i), i]),
                   b_ub=[s1 / l_sqrt, s2 / l_lin],
                   A_eq=np.ones((1, i.size)), b_eq=[1.0])
    if not res.ok:
        return None, ("a1_sq" if math.sqrt(2.0) > s1 / l_sqrt else "a2")
    return _dist(res.x), None


def _ratio(lam, rho) -> float:
    return lam.mean() / rho.mean()


def _alternate(lam, rho, spec, s1, s2, tol=1e-6, max_rounds=100):
    best = _ratio(lam, rho)
    for _ in range(max_rounds):
        new_rho, _ = _solve_rho(lam, spec.dc, s1, s2)
        if new_rho is not None:
            rho = new_rho
        new_lam, _ = _solve_lambda(rho, spec.dv, s1, s2)
        if new_lam is not None:
            lam = new_lam
        obj = _ratio(lam, rho)
        if best - obj < tol:
            best = min(best, obj)
            break
        best = obj
    return lam, rho


def design_regular(spec: RegularDesignSpec) -> DesignResult:
    """Minimum-``d/p`` degree pair meeting both convergence bounds."""
    s1, s2 = math.sqrt(spec.a1_sq_bound), math.sqrt(spec.a2_bound)
    candidates = []
    failure = None

    if spec.mode in ("fixed_row", "both"):
        rho = DegreeDistribution.point_mass(spec.dc)
        lam, failure = _solve_lambda(rho, spec.dv, s1, s2)
        if lam is not None:
            candidates.append((lam, rho))
    if spec.mode in ("fixed_col", "both"):
        lam = DegreeDistribution.point_mass(spec.dv)
        rho, why = _solve_rho(lam, spec.dc, s1, s2)
        failure = failure or why
        if rho is not None:
            candidates.append((lam, rho))
    if spec.mode == "both":
        for dv in range(2, spec.dv + 1):
            lam = DegreeDistribution.point_mass(dv, spec.dv)
            rho, _ = _solve_rho(lam, spec.dc, s1, s2)
            if rho is not None:
                candidates.append((lam, rho))
        candidates = [_alternate(lam, rho, spec, s1, s2) for lam, rho in candidates]

    if not candidates:
        raise InfeasibleDesignError(
            f"no degree distribution with max degrees (dv={spec.dv}, dc={spec.dc}) satisfies the {failure} bound",
            constraint=failure)
    # strict improvement keeps the earliest candidate, so ties are deterministic
    lam, rho = candidates[0]
    for cand in candidates[1:]:
        if _ratio(*cand) < _ratio(lam, rho) - 1e-12:
            lam, rho = cand
    report = check_convergence_bounds(lam, rho, spec.p, spec.k, spec.c0)
    obj = _ratio(lam, rho)
    if obj > 1.0:
        raise InfeasibleDesignError(f"best design needs d/p = {obj:.4g} > 1 (no compression)",
                                    constraint="compression")
    return DesignResult({"lambda": lam, "rho": rho}, obj, report, "regular")


# -- preferential design -----------------------------------------------------

@dataclass(frozen=True)
class PreferentialDesignSpec:
    """Block sizes and per-block nonzero counts of the covariance.

    ``k_HH`` counts nonzeros among the ``n_H**2`` entries of the HH block, and
    likewise ``k_HL`` over ``n_H * n_L`` and ``k_LL`` over ``n_L**2``.  Missing
    ``beta_*`` default to ``c0 log(n_BB / k_BB)``.
    """

    n_H: int
    n_L: int
    k_HH: float
    k_HL: float
    k_LL: float
    dv_H: int = 20
    dv_L: int = 20
    c0: float = 1.0
    beta_HH: float | None = None
    beta_HL: float | None = None
    beta_LL: float | None = None

    def __post_init__(self):
        if self.n_H < 1 or self.n_L < 1:
            raise ParameterError("block sizes must be >= 1")
        if self.dv_H < 2 or self.dv_L < 2:
            raise ParameterError("maximum degrees must be >= 2")
        for blk in ("HH", "HL", "LL"):
            k = getattr(self, "k_" + blk)
            if not 0 < k < self.block_size(blk):
                raise ParameterError(f"k_{blk} must lie in (0, n_{blk})")
        if self.k_HH * self.n_LL <= self.k_LL * self.n_HH:
            warnings.warn("high-priority block is not denser than the low-priority block; "
                          "the relaxed constraints assume it is", stacklevel=2)

    @property
    def p(self) -> int:
        return self.n_H + self.n_L

    @property
    def n_HH(self) -> int:
        return self.n_H ** 2

    @property
    def n_HL(self) -> int:
        return self.n_H * self.n_L

    @property
    def n_LL(self) -> int:
        return self.n_L ** 2

    def block_size(self, blk: str) -> int:
        return getattr(self, "n_" + blk)

    def density(self, blk: str) -> float:
        return getattr(self, "k_" + blk) / self.block_size(blk)

    def beta(self, blk: str) -> float:
        b = getattr(self, "beta_" + blk)
        return self.c0 * math.log(1.0 / self.density(blk)) if b is None else float(b)


def _pref_quantities(spec: PreferentialDesignSpec, rho_H, rho_L):
    RH, RL = moments(rho_H, 1.0), moments(rho_L, 1.0)
    c = {b: spec.beta(b) * spec.density(b) for b in ("HH", "HL", "LL")}
    return RH, RL, c


def preferential_report(spec: PreferentialDesignSpec, lam_H, lam_L, rho_H, rho_L) -> dict:
    """Evaluate every preferential constraint at a candidate design."""
    RH, RL, c = _pref_quantities(spec, rho_H, rho_L)
    m1H, m1L = lam_H.mean(), lam_L.mean()
    mH, mL = moments(lam_H, -1.0), moments(lam_L, -1.0)
    MH, ML = moments(lam_H, -0.5), moments(lam_L, -0.5)
    ratio = (m1L / m1H) * (RH / RL)
    target = spec.n_H / spec.n_L
    quad = (c["HH"] * mH * mH + 2 * c["HL"] * mH * mL + c["LL"] * mL * mL) * (RH * RH + RL * RL)
    rel = abs(ratio - target) / target
    cons = {
        "consistency": {"value": ratio, "bound": target, "slack": -rel, "ok": bool(rel <= SLACK_TOL),
                        "inequality": "(mean lam_L / mean lam_H) (mean rho_H / mean rho_L) == n_H / n_L"},
        "variance_contraction": _entry(
            quad, 1.0,
            "(c_HH m_H^2 + 2 c_HL m_H m_L + c_LL m_L^2) (R_H^2 + R_L^2) <= 1, "
            "c_B = beta_B k_B / n_B, m_B = sum lam_B/l, R_B = sum i rho_B"),
        "ordering_HL": _entry(math.sqrt(spec.density("HH")) * MH, math.sqrt(spec.density("HL")) * ML,
                              "sqrt(k_HH/n_HH) M_H <= sqrt(k_HL/n_HL) M_L, M_B = sum lam_B/sqrt(l)"),
        "ordering_LL": _entry(spec.density("HH") ** 0.25 * MH, spec.density("LL") ** 0.25 * ML,
                              "(k_HH/n_HH)^(1/4) M_H <= (k_LL/n_LL)^(1/4) M_L"),
    }
    d = spec.n_H * m1H / RH
    return {"constraints": cons, "feasible": all(v["ok"] for v in cons.values()),
            "d": d, "objective": (spec.n_H * m1H + spec.n_L * m1L) / ((RH + RL) * spec.p)}


class _PrefProblem:
    """Linear data of the preferential program over ``x = (lam_H[2..dvH], lam_L[2..dvL])``."""

    def __init__(self, spec: PreferentialDesignSpec, rho_H, rho_L):
        self.nh = spec.dv_H - 1
        lh = np.arange(2, spec.dv_H + 1, dtype=float)
        ll = np.arange(2, spec.dv_L + 1, dtype=float)
        RH, RL, c = _pref_quantities(spec, rho_H, rho_L)
        self.c = c
        zh, zl = np.zeros(lh.size), np.zeros(ll.size)
        self.cost = np.concatenate([spec.n_H * lh, spec.n_L * ll]) / ((RH + RL) * spec.p)
        a = np.concatenate([spec.n_H * RL * lh, -spec.n_L * RH * ll])
        self.A_eq = np.vstack([
            np.concatenate([np.ones(lh.size), zl]),
            np.concatenate([zh, np.ones(ll.size)]),
            a / np.abs(a).max(),
        ])
        self.b_eq = np.array([1.0, 1.0, 0.0])
        self.A_order = np.vstack([
            np.concatenate([math.sqrt(spec.density("HH")) / np.sqrt(lh),
                            -math.sqrt(spec.density("HL")) / np.sqrt(ll)]),
            np.concatenate([spec.density("HH") ** 0.25 / np.sqrt(lh),
                            -spec.density("LL") ** 0.25 / np.sqrt(ll)]),
        ])
        self.inv_h = np.concatenate([1 / lh, zl])
        self.inv_l = np.concatenate([zh, 1 / ll])
        self.rsum = RH * RH + RL * RL

    def split(self, x):
        return x[:self.nh], x[self.nh:]

    def variance_bound(self, x):
        """Value and gradient of ``Q(m_H, m_L) (R_H^2 + R_L^2) - 1``."""
        mH, mL = self.inv_h @ x, self.inv_l @ x
        c = self.c
        g = (c["HH"] * mH * mH + 2 * c["HL"] * mH * mL + c["LL"] * mL * mL) * self.rsum - 1.0
        gH = 2 * (c["HH"] * mH + c["HL"] * mL) * self.rsum
        gL = 2 * (c["HL"] * mH + c["LL"] * mL) * self.rsum
        return g, gH * self.inv_h + gL * self.inv_l


def _first_ordering_violation(prob: _PrefProblem) -> str:
    for row, name in ((0, "ordering_HL"), (1, "ordering_LL")):
        res = lp_solve(prob.cost, A_ub=prob.A_order[row:row + 1], b_ub=[0.0],
                       A_eq=prob.A_eq, b_eq=prob.b_eq)
        if not res.ok:
            return name
    return "ordering_HL"


def _cutting_plane(prob: _PrefProblem, tol: float = 1e-10, max_cuts: int = 200):
    """Sequential LP: linear constraints exact, the quadratic bound through tangent cuts."""
    res = lp_solve(prob.cost, A_eq=prob.A_eq, b_eq=prob.b_eq)
    if not res.ok:
        raise InfeasibleDesignError("consistency equality cannot be met within the degree ranges",
                                    constraint="consistency")
    cuts_A, cuts_b = [], []
    for _ in range(max_cuts):
        A_ub = np.vstack([prob.A_order] + cuts_A) if cuts_A else prob.A_order
        b_ub = np.concatenate([np.zeros(2), cuts_b])
        res = lp_solve(prob.cost, A_ub=A_ub, b_ub=b_ub, A_eq=prob.A_eq, b_eq=prob.b_eq)
        if not res.ok:
            name = _first_ordering_violation(prob) if not cuts_A else "variance_contraction"
            raise InfeasibleDesignError(f"preferential design infeasible at the {name} constraint",
                                        constraint=name)
        x = res.x
        g, grad = prob.variance_bound(x)
        if g <= tol:
            return x
        # tangent cut g(x) + grad . (z - x) <= 0, backed off past the simplex tolerance
        cuts_A.append(grad[None, :])
        cuts_b.append(grad @ x - g - 2 * tol)
    raise InfeasibleDesignError("variance-contraction cuts did not converge",
                                constraint="variance_contraction")


def design_preferential(spec: PreferentialDesignSpec, rho_H: DegreeDistribution,
                        rho_L: DegreeDistribution) -> DesignResult:
    """Column-degree laws for both priority blocks with the row-side laws held fixed.

    The objective, the consistency equality and the two ordering inequalities
    are linear in ``(lam_H, lam_L)``; the variance bound is a quadratic in two
    moments and is imposed by tangent cuts until violated by at most 1e-10.
    Every constraint is replayed at the returned point.
    """
    prob = _PrefProblem(spec, rho_H, rho_L)
    xh, xl = prob.split(_cutting_plane(prob))
    lam_H, lam_L = _dist(xh), _dist(xl)
    report = preferential_report(spec, lam_H, lam_L, rho_H, rho_L)
    for name, c in report["constraints"].items():
        if not c["ok"]:
            raise InfeasibleDesignError(
                f"preferential design violates the {name} constraint (slack {c['slack']:.3g})",
                constraint=name)
    if report["objective"] > 1.0:
        raise InfeasibleDesignError(f"design needs d/p = {report['objective']:.4g} > 1",
                                    constraint="compression")
    dists = {"lambda_H": lam_H, "lambda_L": lam_L, "rho_H": rho_H, "rho_L": rho_L}
    return DesignResult(dists, report["objective"], report, "preferential")


def row_law_for_dimension(col_mean_total: float, d: int, max_degree: int | None = None) -> DegreeDistribution:
    """Row law whose mean makes ``d`` rows carry ``col_mean_total`` nonzeros.

    Mass is split between the two integers around the required mean so the
    stub counts agree in expectation.
    """
    target = col_mean_total / d
    if target < 2:
        raise ParameterError(f"d={d} rows would need mean row degree {target:.3g} < 2")
    lo = int(math.floor(target))
    hi = lo + 1
    w_hi = target - lo
    top = max(hi, max_degree or 0)
    if w_hi < 1e-12:
        return DegreeDistribution.point_mass(lo, top)
    return DegreeDistribution.from_mapping({lo: 1.0 - w_hi, hi: w_hi}, top)
