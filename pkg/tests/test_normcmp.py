import math

import numpy as np
import pytest

from besovtransfer.besov import besov_norm_osc
from besovtransfer.functions import (
    PiecewiseConstantFn,
    constant,
    indicator,
)
from besovtransfer.grid import Region
from besovtransfer.normcmp import (
    butterley_upper,
    inclusion_suite,
    keller_var,
    liverani_lower,
    norm_corpus,
    osc_window_integral,
    total_variation,
)


def halfline(K):
    return indicator(Region.intervals([(0.0, 0.5)]), K)


def test_keller_constant():
    assert keller_var(constant(4.0, 8), 0.5) == 0.0


def test_keller_halfline_window_integral():
    # osc(f, eps, y) = 1 exactly when the window straddles 1/2: OSC1 = 2 eps
    f = halfline(8)
    for i in (1, 2, 3, 5):
        eps = 2.0**-i
        assert osc_window_integral(f, i) == pytest.approx(2 * eps, rel=1e-12)
    # clipped window at eps = 1 sees the global oscillation everywhere
    assert osc_window_integral(f, 0) == 1.0
    # sup over dyadic eps of 2 eps^(1-s) is attained at eps = 1/2
    s = 0.5
    assert keller_var(f, s) == pytest.approx(2 * 0.5 ** (1 - s), rel=1e-12)


def test_keller_staircase_bounded():
    K = 9
    xs = (np.arange(1 << K) + 0.5) / (1 << K)
    vals = []
    for n in (4, 16, 64):
        stair = np.floor(xs * n) / n
        vals.append(keller_var(PiecewiseConstantFn(1, K, stair), 0.5))
    assert max(vals) <= 3.0  # bounded independently of the jump count


def test_butterley_constant():
    # the candidate family is exact at level 0: value 2^(1-s) |c|
    s = 0.5
    v, lev = butterley_upper(constant(1.0, 8), s)
    assert v == pytest.approx(2.0 ** (1 - s), rel=1e-12)
    assert lev == 0


def test_butterley_halfline_finite():
    v, lev = butterley_upper(halfline(8), 0.5)
    assert 0.5 <= v <= 4.0
    assert 0 <= lev <= 8


def test_total_variation():
    f = PiecewiseConstantFn(1, 3, np.array([0.0, 1.0, 1.0, 0.5, 0.5, 2.0, 2.0, 2.0]))
    assert total_variation(f) == pytest.approx(1.0 + 0.5 + 1.5)


def test_liverani_constant_bounded():
    c = 3.0
    v = liverani_lower(constant(c, 8), 0.5)
    assert 0.0 < v <= c


def test_liverani_antisymmetry_and_monotonicity():
    rng = np.random.default_rng(8)
    f = PiecewiseConstantFn(1, 8, rng.normal(size=256))
    s = 0.4
    assert liverani_lower(f, s) == pytest.approx(
        liverani_lower(PiecewiseConstantFn(1, 8, -f.values), s), rel=1e-12
    )
    sizes = [4, 8, 16, 32, None]
    vals = [liverani_lower(f, s, dict_size=d) for d in sizes]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_liverani_detail_scaling():
    # single Haar details: the sign-matched profile extracts the level term
    s = 0.3
    got = []
    for k in (3, 5, 7):
        vals = np.zeros(1 << 9)
        block = 1 << (9 - k - 1)
        vals[: block] = 2.0 ** (k / 2)
        vals[block : 2 * block] = -(2.0 ** (k / 2))
        f = PiecewiseConstantFn(1, 9, vals)
        got.append(liverani_lower(f, s) / 2.0 ** (-k * (0.5 - s)))
    # ratio to the Haar level weight approaches the bump shape constant
    assert got[-1] == pytest.approx(2.0 ** (1 - s) * math.pi ** (s - 1), rel=0.1)
    assert max(got) / min(got) < 1.6


def test_inclusion_suite_structured():
    fns = [
        constant(1.0, 8),
        halfline(8),
        indicator(Region.intervals([(0.25, 0.8)]), 8),
    ]
    for s in (0.3, 0.5):
        reports = inclusion_suite(fns, s)
        for r in reports:
            assert r.keller_ok and r.liverani_ok and r.butterley_ok


def test_inclusion_suite_random_corpus():
    fns = norm_corpus(9, 40, seed=99)
    reports = inclusion_suite(fns, 0.5)
    assert all(r.keller_ok for r in reports)
    assert all(r.liverani_ok for r in reports)
    assert all(r.butterley_ok for r in reports)


def test_keller_vs_osc_equivalence_on_indicators():
    s = 0.5
    ratios = []
    for k in (1, 2, 3, 4):
        f = indicator(Region.intervals([(0.0, 2.0**-k)]), 9)
        semi = besov_norm_osc(f, s) - abs(f.integral())
        ratios.append(semi / keller_var(f, s))
    assert 0.1 <= min(ratios) <= max(ratios) <= 1.0 + 1e-12
    print("osc-seminorm / keller ratios on dyadic indicators:", ratios)
