import itertools
import math

import numpy as np
import pytest

from conftest import additive_table, checker_table
from striprct.design import Contrast, DesignDims, DesignError, PotentialOutcomeTable
from striprct.estimators import ContrastEstimate, conservative_variance
from striprct.oracle import enumerated_permutation_covariance, exact_block_moments, exact_estimator_moments
from striprct.simulation import eq14_bias_factor, generate_eq13_table, paper_contrasts, psi_values
from striprct.variance import (
    UEstimatorMatrix,
    block_variances,
    covariance_matrix,
    delta0_bias,
    is_u0,
    permutation_pair_covariance,
    matrix_to_csv,
    max_eigenvalue,
    mean_product_matrices,
    mean_products,
    minimax_bound,
    quadratic_variance_estimator,
    random_class_v_matrix,
    sampling_variance,
    theorem1_covariance,
    u0_matrix,
)
from striprct.verification import random_integer_table, formula_covariance_matrix


def test_mean_products_constant_table():
    t = PotentialOutcomeTable(np.full((2, 2, 3, 2, 3), 2.0))
    assert mean_products(t, 0, (0, 0), (1, 2)) == (0.0, 0.0, 0.0)
    assert theorem1_covariance(t, 1, (1, 1), (0, 2)) == 0.0


def test_mean_products_row_effect_only():
    # Y(rc; pq) = r: row means 1, 2 around 1.5 -> 2 * (0.25 + 0.25) / 1
    t = PotentialOutcomeTable.from_function(DesignDims(2, 2, 2), lambda b, r, c, p, q: r)
    assert mean_products(t, 0, (0, 0), (0, 0)) == (1.0, 0.0, 0.0)


def test_mean_products_symmetric_and_diagonal_nonnegative(rng):
    t = PotentialOutcomeTable(rng.normal(size=(2, 3, 2, 3, 2)))
    for m in mean_product_matrices(t, 1):
        assert np.allclose(m, m.T, atol=1e-14)
        assert np.all(np.diag(m) >= 0)
    ts = t.dims.treatments()
    for t1, t2 in itertools.product(ts, ts):
        assert mean_products(t, 1, t1, t2) == pytest.approx(mean_products(t, 1, t2, t1), abs=1e-14)


def test_index_errors():
    t = PotentialOutcomeTable(np.zeros((2, 2, 2, 2, 2)))
    with pytest.raises(DesignError):
        mean_products(t, 2, (0, 0), (0, 0))
    with pytest.raises(DesignError):
        theorem1_covariance(t, 0, (2, 0), (0, 0))


@pytest.mark.parametrize("P,Q", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_covariance_matches_enumeration(P, Q):
    rng = np.random.default_rng(P * 10 + Q)
    for _ in range(10):
        t = random_integer_table(rng, 2, P, Q)
        for b in range(2):
            _, cov = exact_block_moments(t, b)
            np.testing.assert_allclose(formula_covariance_matrix(t, b), cov, rtol=0, atol=1e-10 * 81)
            np.testing.assert_allclose(covariance_matrix(t, b), cov, rtol=0, atol=1e-10 * 81)


def test_float_table_covariance_matches_enumeration(rng):
    t = PotentialOutcomeTable(rng.normal(scale=50, size=(2, 3, 3, 3, 3)))
    for b in range(2):
        _, cov = exact_block_moments(t, b)
        np.testing.assert_allclose(covariance_matrix(t, b), cov, rtol=0, atol=1e-10 * t.scale() ** 2)


@pytest.mark.parametrize("P,Q", [(2, 2), (2, 3)])
@pytest.mark.parametrize("t1,t2", [(2.0, 0.0), (5.0, -1.0)])
def test_single_checker_configuration(P, Q, t1, t2):
    t = checker_table(P, Q, t1, t2)
    theta = (t1 - t2) ** 2 / (P * Q)
    w = covariance_matrix(t, 0)
    assert theorem1_covariance(t, 0, (0, 0), (0, 0)) == pytest.approx(theta, abs=1e-12)
    expected = np.zeros_like(w)
    expected[0, 0] = theta
    np.testing.assert_allclose(w, expected, atol=1e-12)
    np.testing.assert_allclose(covariance_matrix(t, 1), 0, atol=1e-12)


def test_checker_cross_covariance_example():
    # 2 x 2, pattern at 11 and 12: delta0 = (2 - 1)(0 - 1) / 1 = -1
    t = checker_table(2, 2, 2.0, 0.0, treatments=((0, 0), (0, 1)))
    assert theorem1_covariance(t, 0, (0, 0), (0, 1)) == pytest.approx(-1.0, abs=1e-12)
    assert exact_block_moments(t, 0)[1][0, 1] == pytest.approx(-1.0, abs=1e-12)


def test_covariance_matrix_nonnegative_definite(rng):
    for shape in [(2, 2), (2, 3), (3, 3), (4, 3)]:
        P, Q = shape
        t = PotentialOutcomeTable(rng.normal(scale=10, size=(3, P, Q, P, Q)))
        for b in range(3):
            w = covariance_matrix(t, b)
            assert np.linalg.eigvalsh(w).min() >= -1e-9 * t.scale() ** 2


def test_sampling_variance_examples(rng):
    l = Contrast([1, -1, -1, 1], 2, 2)
    assert sampling_variance(PotentialOutcomeTable(np.full((2, 2, 2, 2, 2), 3.0)), l) == 0.0
    unit = rng.normal(size=(3, 2, 3, 1, 1))
    effect = rng.normal(size=(1, 1, 1, 2, 3))
    base = PotentialOutcomeTable(np.broadcast_to(unit, (3, 2, 3, 2, 3)))
    shifted = PotentialOutcomeTable(np.broadcast_to(unit + effect, (3, 2, 3, 2, 3)))
    for lc in paper_contrasts():
        assert sampling_variance(shifted, lc) == pytest.approx(sampling_variance(base, lc), abs=1e-12)
    t = random_integer_table(rng, 2, 2, 2)
    half = Contrast([0.5, -0.5, -0.5, 0.5], 2, 2)
    assert sampling_variance(t, half) == pytest.approx(exact_estimator_moments(t, half).var_tau_hat, abs=1e-12)


def test_sampling_variance_is_sum_of_block_variances(rng):
    t = random_integer_table(rng, 3, 2, 3)
    l = paper_contrasts()[3]
    per_block = []
    for b in range(3):
        _, cov = exact_block_moments(t, b)
        per_block.append(l.l @ cov @ l.l)
    assert sampling_variance(t, l) == pytest.approx(sum(per_block) / 9, abs=1e-12)
    np.testing.assert_allclose(block_variances(t, l), per_block, atol=1e-12)


def test_delta0_examples(rng):
    l = Contrast([1, -1, -1, 1], 2, 2)
    m = np.zeros((2, 2, 2))
    m[1, 0, 0] = 2.0  # block contrasts 0 and 2
    t = PotentialOutcomeTable(np.broadcast_to(m[:, None, None], (2, 2, 2, 2, 2)))
    assert delta0_bias(t, l) == 1.0
    add = additive_table(rng, 4, 2, 3, between_only=True)
    for lc in paper_contrasts():
        assert delta0_bias(add, lc) == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("B", [20, 40, 60])
def test_delta0_on_simulation_model(B):
    t = generate_eq13_table(B, 0.5, seed=3)
    for l in paper_contrasts():
        psi = float(l.l @ psi_values().ravel())
        assert delta0_bias(t, l) == pytest.approx(psi**2 * eq14_bias_factor(B, 0.5), rel=1e-10)


def test_permutation_pair_examples():
    pairs = [(0.0, 0.0), (1.0, 1.0)]
    assert permutation_pair_covariance(pairs, 0, 0) == 0.25
    assert permutation_pair_covariance(pairs, 0, 1) == -0.25
    assert enumerated_permutation_covariance(pairs, 0, 0) == 0.25
    assert enumerated_permutation_covariance(pairs, 0, 1) == -0.25
    flat = [(3.0, 7.0), (-1.0, 7.0), (4.0, 7.0)]
    assert all(permutation_pair_covariance(flat, i, j) == 0.0 for i in range(3) for j in range(3))
    with pytest.raises(DesignError):
        permutation_pair_covariance([(1.0, 2.0)], 0, 0)


def test_u0_examples():
    np.testing.assert_array_equal(u0_matrix(2).u, [[0.25, -0.25], [-0.25, 0.25]])
    u3 = u0_matrix(3).u
    assert np.allclose(np.diag(u3), 1 / 9, atol=1e-16) and np.allclose(u3[0, 1:], -1 / 18, atol=1e-16)
    assert np.abs(u0_matrix(60).u.sum(axis=1)).max() <= 1e-15
    with pytest.raises(DesignError):
        u0_matrix(1)


@pytest.mark.parametrize("B", [2, 3, 7, 20, 60])
def test_u0_class_invariants(B):
    u = u0_matrix(B)
    assert np.trace(u.u) == pytest.approx(1 / B, abs=1e-15)
    assert np.abs(u.u @ np.ones(B)).max() <= 1e-15
    assert max_eigenvalue(u) == pytest.approx(1 / (B * (B - 1)), abs=1e-12)
    ev = np.linalg.eigvalsh(u.u)
    assert abs(ev[0]) < 1e-15
    np.testing.assert_allclose(ev[1:], 1 / (B * (B - 1)), atol=1e-15)


def test_u_matrix_validation():
    with pytest.raises(DesignError, match="diagonal"):
        UEstimatorMatrix(np.zeros((3, 3)))
    with pytest.raises(DesignError, match="row sums"):
        UEstimatorMatrix(np.eye(2) / 4)
    bad = np.array([[0.25, 0.25], [0.25, 0.25]])
    with pytest.raises(DesignError):
        UEstimatorMatrix(bad)
    # unit diagonal 1/9, zero row sums, but indefinite
    indef = np.array([[1, -2, 1], [-2, 1, 1], [1, 1, 1]], dtype=float) / 9
    indef[2] = [1 / 9, 1 / 9, 1 / 9]
    with pytest.raises(DesignError):
        UEstimatorMatrix(indef)


def test_quadratic_estimator_examples(rng):
    est = ContrastEstimate.from_block_estimates([1.0, 3.0])
    assert quadratic_variance_estimator(est, u0_matrix(2)) == 1.0
    u = random_class_v_matrix(5, rng)
    assert not is_u0(u)
    assert quadratic_variance_estimator(ContrastEstimate.from_block_estimates([2.0] * 5), u) == 0.0
    with pytest.raises(DesignError):
        quadratic_variance_estimator(est, u)


def test_quadratic_estimator_nonnegative_and_matches_plain_form(rng):
    for B in (3, 6, 12):
        for _ in range(20):
            u = random_class_v_matrix(B, rng)
            tau = rng.normal(scale=5, size=B)
            v = quadratic_variance_estimator(ContrastEstimate.from_block_estimates(tau), u)
            assert v >= 0
            assert v == pytest.approx(float(tau @ u.u @ tau), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("B", [3, 5, 10])
def test_random_members_valid_and_above_bound(B, rng):
    u0 = u0_matrix(B)
    for _ in range(100):
        u = random_class_v_matrix(B, rng)
        assert np.trace(u.u) == pytest.approx(1 / B, abs=1e-12)
        assert np.abs(u.u.sum(axis=1)).max() < 1e-12
        assert np.linalg.eigvalsh(u.u).min() > -1e-12
        lam = max_eigenvalue(u)
        assert lam >= minimax_bound(B) - 1e-12
        if B > 3:
            assert lam > minimax_bound(B) + 1e-12
            assert np.linalg.norm(u.u - u0.u) > 1e-9
        else:
            # diagonal and row-sum constraints leave no freedom at B = 3
            assert np.linalg.norm(u.u - u0.u) <= 1e-9


def test_class_is_a_single_point_for_three_blocks(rng):
    # 1 + a + b = 1 + a + c = 1 + b + c = 0 forces a = b = c = -1/2
    for _ in range(10):
        np.testing.assert_allclose(random_class_v_matrix(3, rng).u, u0_matrix(3).u, atol=1e-15)


def test_mixtures_approach_bound(rng):
    B = 6
    u0 = u0_matrix(B).u
    other = random_class_v_matrix(B, rng).u
    gaps = []
    for eps in (0.5, 0.1, 0.01, 0.0):
        u = UEstimatorMatrix((1 - eps) * u0 + eps * other)
        gaps.append(max_eigenvalue(u) - minimax_bound(B))
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert abs(gaps[3]) <= 1e-12


def test_bias_of_class_member_is_quadratic_form(rng):
    # expected estimate = true variance + tau_bar' U tau_bar, checked by exact moments
    t = random_integer_table(rng, 3, 2, 2)
    l = Contrast([1, -1, -1, 1], 2, 2)
    u = random_class_v_matrix(3, rng)
    m = exact_estimator_moments(t, l)
    from striprct.oracle import block_observation_matrix

    taus = [block_observation_matrix(t, b) @ l.l for b in range(3)]
    expect = 0.0
    for combo in itertools.product(*taus):
        expect += np.array(combo) @ u.u @ np.array(combo)
    expect /= math.prod(len(x) for x in taus)
    from striprct.design import block_contrasts

    tb = block_contrasts(t, l)
    assert expect == pytest.approx(m.var_tau_hat + tb @ u.u @ tb, abs=1e-10)


def test_matrix_csv():
    text = matrix_to_csv(u0_matrix(2).u, ["1", "2"])
    assert text.splitlines() == [",1,2", "1,0.25,-0.25", "2,-0.25,0.25"]
