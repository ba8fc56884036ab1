import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covsense.design import RegularDesignSpec, design_regular, row_law_for_dimension
from covsense.errors import ParameterError
from covsense.factorgraph import DegreeDistribution
from covsense.sampler import SensingMatrix, baseline_left_regular, sample_preferential_matrix, sample_sensing_matrix

LAM = DegreeDistribution.from_mapping({3: 0.5, 5: 0.5})


def tv_distance(degrees, dist):
    emp = np.bincount(degrees, minlength=dist.max_degree + 1)[1:] / degrees.size
    ref = np.zeros(max(emp.size, dist.max_degree))
    ref[:dist.max_degree] = dist.weights
    emp = np.pad(emp, (0, ref.size - emp.size))
    return 0.5 * np.abs(emp - ref).sum()


def test_degrees_and_values():
    p, d = 600, 200
    rho = row_law_for_dimension(p * LAM.mean(), d)
    M = sample_sensing_matrix(LAM, rho, d, p, seed=1)
    assert M.column_degrees().sum() == M.row_degrees().sum() == M.nnz
    assert np.all(M.column_degrees() >= 2) and np.all(M.column_degrees() <= d)
    assert tv_distance(M.column_degrees(), LAM) < 0.05
    assert tv_distance(M.row_degrees(), rho) < 0.1
    assert np.allclose(np.abs(M.vals), 1 / np.sqrt(LAM.mean()))
    assert M.norm_const == pytest.approx(LAM.mean())
    assert abs(np.mean(M.vals > 0) - 0.5) < 0.03


def test_no_duplicates_possible():
    with pytest.raises(ParameterError):
        SensingMatrix(2, 2, [0, 0], [1, 1], [1.0, 1.0])
    with pytest.raises(ParameterError):
        SensingMatrix(2, 2, [0, 2], [1, 1], [1.0, 1.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 80), st.integers(2, 6))
def test_sampled_matrices_are_valid(seed, p, lam_deg):
    lam = DegreeDistribution.point_mass(lam_deg)
    d = max(lam_deg + 1, p // 3)
    rho = row_law_for_dimension(p * lam_deg, d)
    M = sample_sensing_matrix(lam, rho, d, p, seed=seed)
    dense = M.to_dense()
    assert dense.shape == (d, p)
    assert np.count_nonzero(dense) == M.nnz
    assert np.array_equal((dense != 0).sum(axis=0), M.column_degrees())
    assert np.array_equal((dense != 0).sum(axis=1), M.row_degrees())
    deg = M.column_degrees()
    assert np.all((deg >= 2) & (deg <= d))
    # the stub-count correction touches few columns
    assert np.count_nonzero(deg != lam_deg) <= max(3, p // 10)


def test_deterministic_per_seed():
    rho = row_law_for_dimension(100 * LAM.mean(), 40)
    a = sample_sensing_matrix(LAM, rho, 40, 100, seed=5)
    b = sample_sensing_matrix(LAM, rho, 40, 100, seed=5)
    c = sample_sensing_matrix(LAM, rho, 40, 100, seed=6)
    assert np.array_equal(a.to_dense(), b.to_dense())
    assert not np.array_equal(a.to_dense(), c.to_dense())


def test_inconsistent_laws_rejected():
    with pytest.raises(ParameterError):
        sample_sensing_matrix(LAM, DegreeDistribution.point_mass(10), 30, 100)
    with pytest.raises(ParameterError):
        sample_sensing_matrix(DegreeDistribution.point_mass(8), DegreeDistribution.point_mass(8), 5, 5)


def test_harness_design_samples_on_100_seeds():
    res = design_regular(RegularDesignSpec(50, 12, 2.0, mode="fixed_row"))
    d = int(round(50 * res.objective))
    rho = row_law_for_dimension(50 * res.lam.mean(), d, res.rho.max_degree)
    for seed in range(100):
        M = sample_sensing_matrix(res.lam, rho, d, 50, seed=seed)
        assert M.nnz == M.column_degrees().sum()
        assert M.row_degrees().max() <= 50


def test_preferential_blocks():
    lam_H, lam_L = DegreeDistribution.point_mass(6), DegreeDistribution.point_mass(3)
    d, n_H, n_L = 20, 15, 45
    rho_H = row_law_for_dimension(n_H * 6, d)
    rho_L = row_law_for_dimension(n_L * 3, d)
    M = sample_preferential_matrix({"H": lam_H, "L": lam_L}, {"H": rho_H, "L": rho_L}, d, n_H, n_L, seed=2)
    deg = M.column_degrees()
    assert np.all(deg[:n_H] == 6) and np.all(deg[n_H:] == 3)
    dense = M.to_dense()
    assert np.array_equal((dense[:, :n_H] != 0).sum(axis=1), np.bincount(M.rows[M.cols < n_H], minlength=d))
    assert M.norm_const == pytest.approx((n_H * 6 + n_L * 3) / 60)


def test_baseline_left_regular():
    M = baseline_left_regular(4, 12, 30, seed=3)
    assert np.all(M.column_degrees() == 4)
    assert np.all(M.vals == 1.0) and M.norm_const == 1.0
    assert np.array_equal(M.to_dense(), baseline_left_regular(4, 12, 30, seed=3).to_dense())
    with pytest.raises(ParameterError):
        baseline_left_regular(13, 12, 30)


def test_file_round_trip(tmp_path):
    rho = row_law_for_dimension(60 * LAM.mean(), 25)
    M = sample_sensing_matrix(LAM, rho, 25, 60, seed=9)
    M.write(tmp_path / "m.txt")
    back = SensingMatrix.read(tmp_path / "m.txt")
    assert np.array_equal(back.to_dense(), M.to_dense()) and back.norm_const == M.norm_const
    assert np.array_equal(SensingMatrix.from_dense(M.to_dense(), M.norm_const).to_dense(), M.to_dense())
    assert np.allclose(M.to_csr().toarray(), M.to_dense())
