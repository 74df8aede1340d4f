import math

import numpy as np
import pytest

from besovtransfer.maps import (
    apply_forward,
    besov_jacobian_example,
    besov_jacobian_family,
    conjugacy_check,
    dynamical_partition,
    linear_circle,
    lorenz_map,
    markov_holder,
    monotone_piece_count,
    sinlog_positive_infima,
    skew_drift_exact,
    skew_g,
    skew_product_step,
    skew_psi,
    tent,
    validate_map,
    wild_G,
    wild_family,
    wild_slopes,
    winky_face,
)


def test_linear_circle_basics():
    m = linear_circle(2)
    assert apply_forward(m, np.array([0.3]))[0] == pytest.approx(0.6, abs=1e-15)
    m3 = linear_circle(3)
    assert len(m3.branches) == 3
    for b in m3.branches:
        assert b.inv_jacobian(np.array([0.2]))[0] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        linear_circle(1)


def test_linear_circle_iterate_is_power():
    m2, m4 = linear_circle(2), linear_circle(4)
    xs = np.random.default_rng(0).uniform(0, 1, 200)
    once = apply_forward(m2, apply_forward(m2, xs))
    assert np.allclose(once, apply_forward(m4, xs), atol=1e-12)


def test_tent_native_coordinates():
    # native form -2t|x| + 2t - 1 on [-1,1] via the recorded conjugacy
    for t in (0.8, 1.0):
        m = tent(t)
        xs = np.linspace(-0.999, 0.999, 101)
        native = 2.0 * apply_forward(m, (xs + 1.0) / 2.0) - 1.0
        assert np.allclose(native, -2 * t * np.abs(xs) + 2 * t - 1, atol=1e-12)
    m1 = tent(1.0)
    f = lambda x: 2.0 * apply_forward(m1, (np.asarray(x) + 1) / 2) - 1.0
    assert f(np.array([0.0]))[0] == pytest.approx(1.0)
    # f_1(x) = -2|x| + 1 near the endpoints: f(+-1) = -1
    assert f(np.array([-0.9999]))[0] == pytest.approx(-0.9998, abs=1e-10)
    assert f(np.array([0.9999]))[0] == pytest.approx(-0.9998, abs=1e-10)
    # slope magnitude and image
    m = tent(0.8)
    assert all(b.expansion == pytest.approx(1.6) for b in m.branches)
    hi = max(b.image[1] for b in m.branches)
    assert 2 * hi - 1 == pytest.approx(2 * 0.8 - 1)  # image top = 2t-1 natively
    with pytest.raises(ValueError):
        tent(0.5)


def test_markov_holder():
    m0 = markov_holder(3, 0.0)
    xs = np.random.default_rng(1).uniform(0, 1, 100)
    assert np.allclose(apply_forward(m0, xs), apply_forward(linear_circle(3), xs))
    m = markov_holder(2, 0.3)
    rep = validate_map(m, 400)
    assert rep["roundtrip"] < 1e-11
    assert rep["jacobian_mass"] < 1e-10
    assert m.meta["inf_w"] == pytest.approx(2 * 0.7)
    with pytest.raises(ValueError):
        markov_holder(2, 0.6)


def test_lorenz_closed_forms():
    m = lorenz_map(1.0, layout=[("lorenz", (0.0, 1.0), 1.0, 0.0)])
    b = m.branches[0]
    xs = np.array([0.0, 0.25, 0.81])
    assert np.allclose(b.forward(xs), np.sqrt(xs))
    ys = np.array([0.0, 0.5, 0.9])
    assert np.allclose(b.inverse(ys), ys**2)
    assert np.allclose(b.inv_jacobian(ys), 2 * ys)
    assert b.inv_jacobian(np.array([0.0]))[0] == 0.0
    # jacobian mass: int_0^1 2y dy = 1 = |domain|
    rep = validate_map(m, 200)
    assert rep["jacobian_mass"] < 1e-12


def test_lorenz_default_layout():
    m = lorenz_map(0.5)
    assert m.meta["inf_abs_fprime"] == pytest.approx(2.0 / 1.5)
    rep = validate_map(m, 500)
    assert rep["roundtrip"] < 1e-12 and rep["expansion_violation"] == 0.0
    with pytest.raises(ValueError):
        lorenz_map(0.5, layout=[("affine", (0.0, 0.6), 2.0, 0.0),
                                ("affine", (0.5, 1.0), 2.0, -1.0)])


def test_wild_first_piece_endpoint():
    # G(2^-(i+1)) = alpha 2^-(i+2); at alpha=1 the left endpoint drops one block
    for i in (3, 6, 10):
        x = 2.0 ** -(i + 1)
        assert wild_G(1.0, 1.0, i, x) == pytest.approx(2.0 ** -(i + 2), rel=1e-14)


def test_wild_image_identity_repaired():
    # G_{1,zeta,i} maps L_i onto L_{i+1} u L_i u L_{i-1} (alpha = 1)
    for zeta in (0.0, 0.5, 1.0):
        i = 5
        xs = np.linspace(2.0 ** -(i + 1), 2.0**-i, 20001, endpoint=False)
        ys = wild_G(1.0, zeta, i, xs)
        assert np.all(np.diff(ys) > 0)  # continuous monotone, no jumps
        assert ys[0] == pytest.approx(2.0 ** -(i + 2), rel=1e-12)
        assert ys[-1] == pytest.approx(2.0 ** -(i - 1), rel=1e-3)
        jumps = np.max(np.abs(np.diff(ys)))
        assert jumps < 2.0**-i * 8.0 * (xs[1] - xs[0]) / 2.0**-i * 10


def test_wild_verbatim_discontinuity():
    # the printed middle-piece offset is discontinuous at the 11/16 break
    i = 4
    x = 11.0 / 16.0 * 2.0**-i
    left = wild_G(1.0, 1.0, i, x - 1e-12)
    right = wild_G(1.0, 1.0, i, x, mode="verbatim")
    gap = abs(right - left)
    assert gap > 0.3 * 2.0**-i  # jump of 13/32 * 2^-i
    assert wild_G(1.0, 1.0, i, x) == pytest.approx(left, rel=1e-9)


def test_wild_slope_bound():
    for alpha in (1.0, 2.0, 5.0):
        for zeta in (0.0, 0.5, 1.0):
            assert min(wild_slopes(alpha, zeta)) >= 4.0 * alpha / 3.0 - 1e-12


def test_wild_family_structure():
    m = wild_family(1.0, 1.0, 4, i_max=20)
    assert m.meta["i0"] == 1
    assert m.meta["truncation_mass"] == 2.0**-21
    assert m.meta["truncation_mass"] <= 2.0 ** (-20 + 1)
    # branch domains are pairwise disjoint and fill [2^-21, 1)
    doms = sorted(b.domain for b in m.branches)
    for (a0, b0), (a1, b1) in zip(doms, doms[1:]):
        assert a1 >= b0 - 1e-15
    total = sum(b - a for a, b in doms)
    assert total == pytest.approx(1.0 - 2.0**-21, rel=1e-12)
    rep = validate_map(m, 100)
    assert rep["roundtrip"] < 1e-12


def test_skew_product():
    assert skew_g(np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-15)
    # slopes (8/3, 8/3, 4) give sum of inverse slopes 1: Lebesgue invariant
    assert 3 / 8 + 3 / 8 + 1 / 4 == 1.0
    # psi is +-1 only on the outer pieces
    assert skew_psi(np.array([0.6]))[0] == 1.0
    assert skew_psi(np.array([0.8]))[0] == 0.0
    assert skew_psi(np.array([0.95]))[0] == -1.0
    x1, i1 = skew_product_step(0.6, 5)
    assert (x1, i1) == (pytest.approx(8 * 0.6 / 3 - 5 / 6), 6)
    with pytest.raises(ValueError):
        skew_product_step(0.3, 0)


def test_conjugacy_fixes_psi_sign():
    out = conjugacy_check()
    assert out["passing"] == "conjugacy"
    assert out["errors"]["conjugacy"] < 1e-12
    assert out["errors"]["printed"] > 1e3 * max(out["errors"]["conjugacy"], 1e-300)
    assert skew_drift_exact() == pytest.approx(0.125, abs=1e-15)


def test_besov_jacobian_family():
    m = besov_jacobian_example(0.1)
    rep = validate_map(m, 300)
    assert rep["roundtrip"] < 5e-12
    assert rep["jacobian_mass"] < 1e-9
    # affine reduction: alpha = 0 gives constant jacobian theta
    aff = besov_jacobian_family([0.5, 0.75], [(0.0, 1.0), (1.0 / 3, 1.0)])
    assert aff.branches[0].inv_jacobian(np.array([0.4]))[0] == pytest.approx(0.5)
    # endpoint consistency h_r(d_r) = b_r
    for b in m.branches:
        d = b.image[1]
        assert float(b.inverse(np.array([d]))[0]) == pytest.approx(
            b.domain[1], abs=1e-10
        )
    # jacobian positive on a fine grid
    for b in m.branches:
        ys = np.linspace(b.image[0], b.image[1], 4096)
        assert float(np.min(b.inv_jacobian(ys))) > 0.0
    with pytest.raises(ValueError):
        besov_jacobian_family([0.5], [(0.0, 1.0)], [("sinlog", 20.0)])


def test_winky_face():
    m = winky_face(2)
    assert len(m.branches) == 4**2
    assert m.min_expansion() == pytest.approx(2.0)
    for b in m.branches:
        assert b.inv_jacobian_const == pytest.approx(
            ((b.domain[1] - b.domain[0]) * (b.domain[3] - b.domain[2]))
            / ((b.image[1] - b.image[0]) * (b.image[3] - b.image[2]))
        )
    rep = validate_map(m, 200)
    assert rep["roundtrip"] < 1e-12 and rep["jacobian_mass"] < 1e-15
    with pytest.raises(ValueError):
        winky_face(0)  # identity-layout degenerate case
    with pytest.raises(ValueError):
        winky_face(2, {(0, 0): (0.0, 0.25, 0.0, 0.25)})  # non-expanding


def test_mass_balance_full_branch():
    # sum over branches of the jacobian integrates to 1 over the codomain
    for m in (linear_circle(3), tent(0.9), markov_holder(2, 0.2),
              lorenz_map(0.5), besov_jacobian_example(0.05)):
        xs = np.linspace(1e-6, 1 - 1e-6, 2001)
        total = np.zeros_like(xs)
        for b in m.branches:
            c, d = b.image
            mask = (xs >= c) & (xs < d)
            if mask.any():
                total[mask] += b.inv_jacobian(xs[mask])
        # integrate sum_r g_r 1_{J_r} over [0,1]
        integral = float(np.trapezoid(total, xs))
        assert integral == pytest.approx(1.0, abs=1e-3)


def test_dynamical_partition_and_counts():
    cells = dynamical_partition(linear_circle(3), 4)
    assert len(cells) == 81
    lens = cells[:, 1] - cells[:, 0]
    assert np.allclose(lens, 3.0**-4, atol=1e-12)
    with pytest.raises(ValueError):
        dynamical_partition(tent(0.8), 3)  # not Markov
    # monotone branch counts grow like (2t)^j for the tent family
    counts = [monotone_piece_count(tent(1.0), j) for j in (1, 2, 3, 4)]
    assert counts == [2, 4, 8, 16]
    c08 = [monotone_piece_count(tent(0.8), j) for j in (1, 2, 3, 4, 5, 6)]
    assert all(b <= 2 * a for a, b in zip(c08, c08[1:]))
    growth = (c08[-1] / c08[2]) ** (1 / 3)
    assert growth == pytest.approx(1.6, abs=0.25)


def test_sinlog_positive_infima():
    K = 10
    infs = sinlog_positive_infima(K)
    n = 1 << K
    # zero on (1/2, 1] and nonnegative everywhere
    assert np.all(infs[n // 2 :] == 0.0)
    assert np.all(infs >= 0.0)
    # sample-based oracle: inf over each cell of the positive part
    xs = np.linspace(0, 1, 1 << 14, endpoint=False)[1:]
    vals = np.maximum(np.sin(2 * math.pi * np.log2(xs)), 0.0)
    vals[xs > 0.5] = 0.0
    idx = np.minimum((xs * n).astype(int), n - 1)
    for i in (3, 7, 100, 400, 511):
        samp = vals[idx == i]
        if samp.size:
            assert infs[i] <= samp.min() + 1e-9
            assert infs[i] >= samp.min() - 0.05  # coarse sampling slack
