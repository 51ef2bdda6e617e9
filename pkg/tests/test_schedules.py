import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subgradfed.schedules import (
    FACTOR_GRID,
    DegenerateOracleError,
    Schedule,
    ScheduleError,
    TheoryConstantsEF21P,
    TheoryConstantsMarinaP,
    gamma0_optimal_ef21p,
    gamma0_optimal_marinap,
    gamma_constant_ef21p,
    gamma_constant_marinap,
    gamma_decreasing,
    gamma_polyak_ef21p,
    gamma_polyak_marinap,
    gamma_sm_baseline,
)

alphas = st.floats(min_value=1e-4, max_value=1.0)
factors = st.sampled_from(FACTOR_GRID)
positive = st.floats(min_value=1e-3, max_value=1e3)


def ef(alpha):
    return TheoryConstantsEF21P.from_alpha(alpha)


def mp(omega, p, lb=1.0, lt=1.0):
    return TheoryConstantsMarinaP.from_params(omega, p, lb, lt)


def test_ef21p_constants_by_hand():
    c = ef(0.75)
    assert (c.theta, c.lambda_star, c.B_star, c.lyapunov_weight) == (0.5, 1.0, 3.0, 2.0)
    one = ef(1.0)
    assert (one.theta, one.lambda_star, one.B_star, one.lyapunov_weight) == (1.0, 0.0, 1.0, 0.0)


def test_marinap_constants_by_hand():
    c = mp(3.0, 0.25)
    assert c.ratio == 3.0 and c.B_tilde_star == 7.0 and c.lambda_star == 3.0
    assert c.lyapunov_weight == pytest.approx(1 / (3.0 * 0.25), rel=1e-15)
    assert mp(5.0, 1.0, 2.0, 3.0).B_tilde_star == 4.0
    assert mp(0.0, 0.3, 2.0, 3.0).B_tilde_star == 4.0
    assert mp(0.0, 0.3).lyapunov_weight == 0.0


def test_B_star_bound_on_grid():
    grid = np.round(np.arange(0.01, 1.0 + 1e-9, 0.01), 10)
    prev = math.inf
    for a in grid:
        b = ef(a).B_star
        assert b <= 4 / a - 1 + 1e-12
        assert b < prev
        prev = b
    assert ef(1.0).B_star == 1.0


def test_B_tilde_monotone():
    omegas = [0.0, 0.5, 1, 3, 9, 99]
    vals = [mp(o, 0.1, 1.0, 1.5).B_tilde_star for o in omegas]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    ps = [0.01, 0.1, 0.5, 0.9, 1.0]
    vals = [mp(9.0, p, 1.0, 1.5).B_tilde_star for p in ps]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_invalid_constants():
    for a in (0.0, -0.1, 1.1):
        with pytest.raises(ScheduleError):
            ef(a)
    with pytest.raises(ScheduleError):
        mp(1.0, 0.0)
    with pytest.raises(ScheduleError):
        mp(-1.0, 0.5)
    with pytest.raises(ScheduleError):
        mp(1.0, 0.5, 0.0, 1.0)


def test_constant_ef21p_examples():
    assert gamma_constant_ef21p(ef(1.0), 1.0, 1.0, 1) == 1.0
    assert gamma_constant_ef21p(ef(0.75), 9.0, 1.0, 4) == pytest.approx(math.sqrt(3) / 2, rel=1e-15)
    assert gamma_constant_ef21p(ef(1.0), 1.0, 1.0, 1, 2.0**-9) == 2.0**-9
    with pytest.raises(ScheduleError):
        gamma_constant_ef21p(ef(1.0), 0.0, 1.0, 1)
    with pytest.raises(ScheduleError):
        gamma_constant_ef21p(ef(1.0), 1.0, 1.0, 0)


def test_constant_marinap_examples():
    assert gamma_constant_marinap(mp(3.0, 1.0), 1.0, 1) == 1.0
    assert gamma_constant_marinap(mp(3.0, 0.25), 7.0, 1) == 1.0
    assert gamma_constant_marinap(mp(3.0, 0.25), 7.0, 4) == 0.5
    with pytest.raises(ScheduleError):
        gamma_constant_marinap(mp(3.0, 0.25), -1.0, 1)


def test_sm_baseline_examples():
    assert gamma_sm_baseline(1.0, 1.0, 1) == 1.0
    assert gamma_sm_baseline(2.0, 4.0, 4) == 0.25
    assert gamma_sm_baseline(1.0, 1.0, 100) == pytest.approx(0.1, rel=1e-15)
    with pytest.raises(ScheduleError):
        gamma_sm_baseline(1.0, 0.0, 1)


def test_polyak_ef21p_examples():
    assert gamma_polyak_ef21p(ef(1.0), 2.0, 0.0, 4.0) == 0.5
    assert gamma_polyak_ef21p(ef(0.75), 2.0, 0.0, 4.0) == pytest.approx(1 / 6, rel=1e-15)
    assert gamma_polyak_ef21p(ef(0.75), 3.0, 3.0, 4.0) == 0.0
    assert gamma_polyak_ef21p(ef(0.75), 3.0, 3.0, 0.0) == 0.0
    with pytest.raises(DegenerateOracleError):
        gamma_polyak_ef21p(ef(0.5), 1.0, 0.0, 0.0)


def test_polyak_marinap_examples():
    g = np.array([2.0, 0.0])
    assert gamma_polyak_marinap(2.0, g, [g], 3.0, 0.25) == pytest.approx(1 / 14, rel=1e-15)
    assert gamma_polyak_marinap(0.0, g, [g], 3.0, 0.25) == 0.0
    with pytest.raises(DegenerateOracleError):
        gamma_polyak_marinap(1.0, np.zeros(2), [np.ones(2), -np.ones(2)], 3.0, 0.25)


@given(positive, positive, factors)
def test_polyak_ef21p_alpha_one_is_classic(gap, sq, factor):
    assert gamma_polyak_ef21p(ef(1.0), gap, 0.0, sq, factor) == factor * gap / sq


@given(positive, st.integers(0, 2**32 - 1), st.sampled_from([0.0, 3.0, 99.0]), factors)
def test_polyak_marinap_collapses_to_classic(gap, seed, omega, factor):
    G = np.random.default_rng(seed).normal(size=(4, 6))
    g = G.mean(axis=0)
    sq = float(sum(v * v for v in g))
    want = factor * gap / sq
    assert gamma_polyak_marinap(gap, g, G, omega, 1.0, factor) == want
    assert gamma_polyak_marinap(gap, g, G, 0.0, 0.3, factor) == want


@given(alphas, positive, positive, st.integers(1, 10**6), factors)
def test_stepsizes_linear_in_factor(alpha, V0, L0, T, factor):
    c = ef(alpha)
    assert gamma_constant_ef21p(c, V0, L0, T, factor) == pytest.approx(factor * gamma_constant_ef21p(c, V0, L0, T),
                                                                        rel=1e-15)
    m = mp(1 / alpha - 1, alpha, L0, 2 * L0)
    assert gamma_constant_marinap(m, V0, T, factor) == pytest.approx(factor * gamma_constant_marinap(m, V0, T),
                                                                      rel=1e-15)
    assert gamma_decreasing(V0, T, factor) == pytest.approx(factor * gamma_decreasing(V0, T), rel=1e-15)
    assert gamma_polyak_ef21p(c, V0, 0.0, L0, factor) == pytest.approx(factor * gamma_polyak_ef21p(c, V0, 0.0, L0),
                                                                       rel=1e-15)


def test_decreasing_examples():
    assert gamma_decreasing(0.7, 0, 3.0) == pytest.approx(2.1, rel=1e-15)
    assert gamma_decreasing(1.0, 3) == 0.5
    with pytest.raises(ScheduleError):
        gamma_decreasing(1.0, -1)


@pytest.mark.parametrize("T", [10, 100, 10**3, 10**6])
def test_decreasing_partial_sums(T):
    g = 1.0 / np.sqrt(np.arange(1, T + 1))
    assert g.sum() >= math.sqrt(T) / 2
    assert (g * g).sum() <= 2 * math.log(T + 1)


def test_optimal_gamma0():
    c = ef(0.75)
    assert gamma0_optimal_ef21p(c, 9.0, 1.0, 100) == pytest.approx(math.sqrt(9 / (6 * math.log(101))), rel=1e-15)
    m = mp(3.0, 0.25)
    assert gamma0_optimal_marinap(m, 7.0, 100) == pytest.approx(math.sqrt(1 / (2 * math.log(101))), rel=1e-15)


def test_schedule_validation():
    assert Schedule("Decreasing").factor == 1.0
    assert Schedule("ConstantOptimal", 4.0).with_factor(0.5).factor == 0.5
    assert Schedule("PolyakMarinaP").is_polyak and not Schedule("SMBaseline").is_polyak
    for bad in (dict(kind="ConstantOptimal", factor=0.0), dict(kind="FixedConstant"),
                dict(kind="Decreasing", horizon_T=0), dict(kind="PolyakEF21P", f_star=math.nan)):
        with pytest.raises(ScheduleError):
            Schedule(**bad)
    with pytest.raises(ValueError):
        Schedule("Adam")


def test_factor_grid():
    assert FACTOR_GRID[0] == 2.0**-9 and FACTOR_GRID[-1] == 2.0**7 and len(FACTOR_GRID) == 17
