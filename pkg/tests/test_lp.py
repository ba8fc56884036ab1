import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from covsense.errors import ParameterError
from covsense.lp import lp_solve


def vertex_enumeration(c, A_ub, b_ub):
    """Brute-force optimum of min c x, A_ub x <= b_ub, x >= 0 over all basic points."""
    m, n = A_ub.shape
    G = np.vstack([A_ub, -np.eye(n)])
    h = np.concatenate([b_ub, np.zeros(n)])
    best = None
    for rows in itertools.combinations(range(m + n), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            val = c @ x
            if best is None or val < best:
                best = val
    return best


def test_textbook_example():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    res = lp_solve(np.array([-3.0, -5.0]), np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 2.0]]),
                   np.array([4.0, 12.0, 18.0]))
    assert res.ok
    assert res.fun == pytest.approx(-36.0)
    assert np.allclose(res.x, [2.0, 6.0])


def test_equality_and_infeasible_and_unbounded():
    res = lp_solve(np.array([1.0, 2.0]), A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    assert res.ok and np.allclose(res.x, [1.0, 0.0])
    bad = lp_solve(np.array([1.0]), np.array([[1.0]]), np.array([-1.0]))
    assert bad.status == "infeasible" and not bad.ok
    unb = lp_solve(np.array([-1.0, 0.0]), np.array([[0.0, 1.0]]), np.array([1.0]))
    assert unb.status == "unbounded"


def test_negative_rhs_equality():
    res = lp_solve(np.array([1.0, 1.0]), A_eq=np.array([[-1.0, -2.0]]), b_eq=np.array([-4.0]))
    assert res.ok and res.fun == pytest.approx(2.0)


def test_shape_validation():
    with pytest.raises(ParameterError):
        lp_solve(np.array([1.0, 1.0]), np.array([[1.0]]), np.array([1.0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 5))
def test_matches_vertex_enumeration(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.1, 2.0, size=m)
    # box rows keep the region bounded
    A = np.vstack([A, np.eye(n)])
    b = np.concatenate([b, np.full(n, 3.0)])
    c = rng.normal(size=n)
    res = lp_solve(c, A, b)
    assert res.ok
    assert res.fun == pytest.approx(vertex_enumeration(c, A, b), abs=1e-8)
    assert np.all(A @ res.x <= b + 1e-9) and np.all(res.x >= -1e-12)


def test_matches_highs_with_equalities():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = rng.integers(2, 7)
        A = rng.normal(size=(3, n))
        A_eq = rng.uniform(0.1, 1.0, size=(1, n))
        c = rng.normal(size=n)
        b = rng.uniform(0.5, 2.0, size=3)
        ours = lp_solve(c, A, b, A_eq, np.array([1.0]))
        ref = linprog(c, A, b, A_eq, np.array([1.0]), bounds=(0, None), method="highs")
        assert ours.ok == (ref.status == 0)
        if ours.ok:
            assert ours.fun == pytest.approx(ref.fun, abs=1e-8)


def test_degenerate_problem_terminates():
    # many redundant tight constraints at the optimum; Bland's rule must not cycle
    A = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0], [1.0, 0.0], [0.0, 1.0]])
    b = np.array([1.0, 1.0, 2.0, 1.0, 1.0])
    res = lp_solve(np.array([-1.0, -1.0]), A, b)
    assert res.ok and res.fun == pytest.approx(-1.0)
    again = lp_solve(np.array([-1.0, -1.0]), A, b)
    assert np.array_equal(res.x, again.x)
