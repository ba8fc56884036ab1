import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covsense.errors import ParameterError
from covsense.factorgraph import DegreeDistribution, coeff_a1, coeff_a2, kron_degree_law, moments

from conftest import random_dist


def brute_a(lam, rho, power):
    """Quadruple sum over (i, i', j, j') of rho rho' lam lam' (i i' / j j')**power."""
    total = 0.0
    for i, ip, j, jp in itertools.product(range(1, rho.max_degree + 1), range(1, rho.max_degree + 1),
                                          range(1, lam.max_degree + 1), range(1, lam.max_degree + 1)):
        w = rho.weights[i - 1] * rho.weights[ip - 1] * lam.weights[j - 1] * lam.weights[jp - 1]
        if w:
            total += w * (i * ip / (j * jp)) ** power
    return total


def test_point_mass_values():
    lam = DegreeDistribution.point_mass(3)
    rho = DegreeDistribution.point_mass(12)
    assert coeff_a1(lam, rho) == pytest.approx(12 / 3, rel=1e-14)
    assert coeff_a2(lam, rho) == pytest.approx(16.0, rel=1e-14)


def test_coefficients_match_quadruple_sum(rng):
    for _ in range(20):
        lam, rho = random_dist(rng, 6), random_dist(rng, 9)
        assert coeff_a1(lam, rho) == pytest.approx(brute_a(lam, rho, 0.5), rel=1e-12)
        assert coeff_a2(lam, rho) == pytest.approx(brute_a(lam, rho, 1.0), rel=1e-12)


def test_kron_law_small_example():
    d = DegreeDistribution.from_mapping({2: 0.5, 3: 0.5})
    law = kron_degree_law(d).as_dict()
    assert law == pytest.approx({4: 0.25, 6: 0.5, 9: 0.25})
    assert kron_degree_law(d).mean() == pytest.approx(d.mean() ** 2)


def test_kron_law_mixed():
    a = DegreeDistribution.point_mass(2)
    b = DegreeDistribution.from_mapping({3: 0.25, 4: 0.75})
    assert kron_degree_law(a, b).as_dict() == pytest.approx({6: 0.25, 8: 0.75})


def test_kron_law_matches_materialized_kronecker(rng):
    # row degrees of A (x) A are products of row degrees of A
    A = (rng.random((5, 7)) < 0.4).astype(float)
    A[A.sum(axis=1) < 2, :2] = 1.0
    K = np.kron(A, A)
    rdeg = (A != 0).sum(axis=1)
    kdeg = (K != 0).sum(axis=1)
    assert sorted(kdeg.tolist()) == sorted(np.multiply.outer(rdeg, rdeg).ravel().tolist())
    emp = DegreeDistribution.normalized(np.bincount(rdeg, minlength=8)[1:])
    law = kron_degree_law(emp).as_dict()
    vals, counts = np.unique(kdeg, return_counts=True)
    assert {int(v): c / kdeg.size for v, c in zip(vals, counts)} == pytest.approx(law)


def test_validation():
    with pytest.raises(ParameterError):
        DegreeDistribution(np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        DegreeDistribution(np.array([0.0, 0.5, 0.4]))
    with pytest.raises(ParameterError):
        DegreeDistribution(np.array([0.0, 1.5, -0.5]))
    with pytest.raises(ParameterError):
        DegreeDistribution.point_mass(1)
    with pytest.raises(ParameterError):
        DegreeDistribution.from_json({"max_degree": 4, "weights": [0, 1, 0]})


def test_json_round_trip(rng):
    d = random_dist(rng, 10)
    back = DegreeDistribution.from_json(d.to_json())
    assert np.array_equal(back.weights, d.weights)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12).filter(lambda w: sum(w[1:]) > 1e-3))
def test_jensen_bounds(w):
    w = [0.0] + list(w[1:])
    lam = DegreeDistribution.normalized(w)
    rho = DegreeDistribution.normalized([0.0] + list(reversed(w[1:])))
    # Cauchy-Schwarz: E[sqrt X]^2 <= E[X] and E[1/sqrt X]^2 <= E[1/X]
    assert coeff_a1(lam, rho) <= np.sqrt(coeff_a2(lam, rho)) * (1 + 1e-12)
    assert moments(rho, 0.5) ** 2 <= moments(rho, 1.0) * (1 + 1e-12)
    assert moments(lam, -0.5) ** 2 <= moments(lam, -1.0) * (1 + 1e-12)
    assert coeff_a1(lam, rho) >= 0 and coeff_a2(lam, rho) >= 0
