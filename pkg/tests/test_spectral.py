import math

import numpy as np
import pytest
import scipy.sparse as sp

from besovtransfer.besov import BesovParams
from besovtransfer.maps import (
    linear_circle,
    lorenz_map,
    markov_holder,
    tent,
    wild_family,
    winky_face,
)
from besovtransfer.spectral import (
    SparseOperator,
    dense_spectrum,
    ess_bound,
    h_top_estimate,
    leading_eigen,
    ly_fit,
    ly_profile,
    markov_partition_sum,
    second_modulus,
    weighted_sup_radius,
)
from besovtransfer.transfer import ulam_matrix


def test_leading_eigen_doubling():
    op = ulam_matrix(linear_circle(2), 8)
    lam, v, diag = leading_eigen(op)
    assert lam == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(v.values, 1.0, atol=1e-10)
    assert diag["converged"]


def test_leading_eigen_full_tent_uniform():
    op = ulam_matrix(tent(1.0), 9)
    lam, v, _ = leading_eigen(op)
    assert lam == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(v.values, 1.0, atol=1e-8)


def test_leading_eigen_renormalizable_tent():
    # t < 1/sqrt(2): period-2 interval cycle; damping still converges
    op = ulam_matrix(tent(0.6), 10)
    lam, v, diag = leading_eigen(op, tol=1e-11)
    assert lam == pytest.approx(1.0, abs=1e-9)
    assert diag["residual"] < 1e-10


def test_leading_eigen_wild_drain():
    # truncated alpha=1 family: mass drains toward 0, lambda1 < 1 and the
    # surviving mass concentrates near the origin
    op = ulam_matrix(wild_family(1.0, 1.0, 4, i_max=14), 10)
    lam, v, _ = leading_eigen(op, tol=1e-11, max_iter=4000)
    assert lam < 0.995
    mass_near_zero = float(v.values[:128].sum()) * 2.0**-10  # [0, 1/8)
    assert mass_near_zero > 0.9


def test_residual_decreases_for_positive_ops():
    op = ulam_matrix(tent(1.0), 8)
    v = np.abs(np.random.default_rng(0).normal(size=op.n)) + 0.1
    cellm = op.cell_measure
    res = []
    for _ in range(40):
        w = op.matrix @ v
        lam = (np.abs(w).sum()) / np.abs(v).sum()
        res.append(float(np.abs(w - lam * v).sum()) * cellm)
        v = w / (np.abs(w).sum() * cellm)
    drops = np.diff(res)
    assert np.all(drops <= 1e-12 + np.abs(np.array(res[:-1])) * 1e-6)


def test_second_modulus_nilpotent_doubling():
    # Ulam of the doubling map kills Haar details level by level: lambda2=0.
    K = 6
    op = ulam_matrix(linear_circle(2), K)
    lam, v, _ = leading_eigen(op)
    l2, _ = second_modulus(op, lam, v)
    assert l2 < 1e-8
    # direct nilpotency oracle: M^K annihilates every mean-zero vector
    M = op.matrix.toarray()
    P = np.linalg.matrix_power(M, K)
    w = np.random.default_rng(1).normal(size=op.n)
    w -= w.mean()
    assert np.max(np.abs(P @ w)) < 1e-12


def test_second_modulus_matches_dense():
    for t in (0.8, 0.9):
        op = ulam_matrix(tent(t), 9)
        lam, v, _ = leading_eigen(op)
        l2, diag = second_modulus(op, lam, v)
        dense = dense_spectrum(op)[1]
        assert abs(l2 - dense) < 1e-6, (t, l2, dense)


def test_second_modulus_stable_in_level():
    vals = []
    for K in (8, 9, 10, 11, 12):
        op = ulam_matrix(tent(0.8), K)
        lam, v, _ = leading_eigen(op)
        l2, _ = second_modulus(op, lam, v)
        vals.append(l2)
        assert l2 < 1.0
    # the discretized lambda2 stays in a narrow band under refinement
    assert max(vals) - min(vals) < 0.1


def test_second_modulus_rank_one():
    n = 64
    col = np.full(n, 1.0)
    M = sp.csr_matrix(np.outer(col, np.full(n, 1.0)) / n * 0 + 1.0 / n)
    op = SparseOperator(6, 1, M.tocsr(), {})
    lam, v, _ = leading_eigen(op)
    l2, _ = second_modulus(op, lam, v)
    assert l2 < 1e-10


def test_ly_fit_identity():
    fit = ly_fit(linear_circle(2), BesovParams(0.5, 1.0, 1.0), 0, 8,
                 n_probes=32, seed=2)
    assert fit.lam <= 1.0 + 1e-9


def test_ly_fit_doubling_single_step_matches_atom_multiplier():
    fit = ly_fit(linear_circle(2), BesovParams(0.5, 1.0, 1.0), 1, 12,
                 n_probes=32, seed=2)
    assert fit.lam == pytest.approx(2.0**-0.5, abs=0.02)


def test_ly_profile_geometric_decay():
    prof = ly_profile(linear_circle(2), BesovParams(0.5, 1.0, 1.0),
                      [2, 3, 4], 14, n_probes=32, seed=2)
    r1 = prof[3].lam / prof[2].lam
    r2 = prof[4].lam / prof[3].lam
    assert r1 == pytest.approx(2.0**-0.5, abs=0.03)
    assert r2 == pytest.approx(2.0**-0.5, abs=0.03)


def test_markov_partition_sums_linear():
    for ell in (2, 3):
        m = linear_circle(ell)
        for j in (1, 3, 5):
            S, jroot, val = markov_partition_sum(m, j, 0.5, 2.0)
            assert S == pytest.approx(float(ell) ** (-j * 0.5 * 2.0), rel=1e-12)
            assert val == pytest.approx(float(ell) ** -0.5, rel=1e-12)
    assert markov_partition_sum(linear_circle(2), 0, 0.5, 2.0)[0] == 1.0


def test_markov_partition_sums_holder():
    m = markov_holder(2, 0.1)
    roots = [markov_partition_sum(m, j, 0.3, 2.0)[2] for j in (5, 6, 7)]
    assert abs(roots[-1] - roots[0]) < 0.1 * roots[-1]
    assert roots[-1] <= (2 * 0.9) ** -0.3


def test_h_top_tent():
    h, counts = h_top_estimate(tent(1.0), 8)
    assert h == pytest.approx(math.log(2.0), abs=1e-9)
    h8, _ = h_top_estimate(tent(0.8), 10)
    assert h8 == pytest.approx(math.log(1.6), abs=0.15)


def test_ess_bounds():
    p = BesovParams(0.5, 1.0, math.inf)
    assert ess_bound(tent(0.8), p).value == pytest.approx(1.6**-0.5, rel=1e-12)
    assert ess_bound(linear_circle(2), p).value == pytest.approx(2.0**-0.5)
    b = ess_bound(winky_face(2), BesovParams(0.3, 1.0, math.inf))
    assert b.value == pytest.approx(2.0 ** (-2 * 0.3), rel=1e-12)
    assert ess_bound(lorenz_map(0.5), p).value == pytest.approx((4 / 3.0) ** -0.5)
    mh = ess_bound(markov_holder(2, 0.1), BesovParams(0.3, 2.0, 2.0))
    assert 0.0 < mh.value < 1.0
    assert "partition_sum_root" in mh.ingredients
    with pytest.raises(ValueError):
        ess_bound(wild_family(1.0, 1.0, 2, i_max=10), p)


def test_ess_bounds_inside_unit_interval():
    p = BesovParams(0.4, 1.0, math.inf)
    for m in (linear_circle(2), linear_circle(3), markov_holder(2, 0.2),
              tent(0.6), tent(1.0), lorenz_map(0.5), winky_face(2)):
        v = ess_bound(m, p).value
        assert 0.0 < v < 1.0, m.name


def test_fitted_roots_below_family_bounds():
    # the central empirical reproduction: fitted lambda^(1/j) sits under
    # the closed-form essential-radius bound plus 0.05 for every family
    # carrying one
    p = BesovParams(0.5, 1.0, math.inf)
    for m in (linear_circle(2), tent(0.8), lorenz_map(0.5),
              markov_holder(2, 0.1)):
        bound = ess_bound(m, p).value
        op = ulam_matrix(m, 12)
        for j in (6, 8):
            fit = ly_fit(m, p, j, 12, n_probes=48, seed=1, op=op)
            assert fit.lam_root <= bound + 0.05, (m.name, j, fit.lam_root, bound)


def test_weighted_sup_radius_linear():
    # for x -> ell x mod 1 the weighted operator has sup-norm growth
    # ell^(1 - tau) with tau = 1 + s p'
    p = BesovParams(0.3, 2.0, 2.0)
    r = weighted_sup_radius(linear_circle(2), p, level=8, iters=30)
    assert r == pytest.approx(2.0 ** (1 - (1 + 0.3 * 2.0)), rel=1e-10)
    # markov bound: r(weighted)^(1/p') close to ell^-s
    assert r ** (1 / p.pprime) == pytest.approx(2.0**-0.3, rel=1e-10)
