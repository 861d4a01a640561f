import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from qrbdo.benchmarks import (CHOI_PF, CONFIGS, COLUMN_LOAD, FrozenSampler, bracket_bending,
                              bracket_buckling, bracket_problem, bracket_weight, choi_limit_states,
                              choi_problem, column_analytic_optimum, column_problem,
                              column_response, default_config, failure_probabilities, get_problem,
                              janusevskis_function, janusevskis_problem, true_quantiles)
from qrbdo.errors import ConfigurationError
from qrbdo.space import build_augmented


def _column_lognormal_exponent(p_f):
    # ln(k E / L^2) is normal; parameters from mean and cov of each factor
    def ln_params(mean, cov):
        zeta2 = math.log(1 + cov**2)
        return math.log(mean) - zeta2 / 2, zeta2

    lk, zk = ln_params(0.6, 0.10)
    le, ze = ln_params(10_000.0, 0.05)
    ll, zl = ln_params(3_000.0, 0.01)
    lam, zeta = lk + le - 2 * ll, math.sqrt(zk + ze + 4 * zl)
    return lam + stats.norm.ppf(p_f) * zeta


def test_column_plug_in_is_fourth_power():
    value = 12 * 1.4622e6 / (math.pi**2 * math.exp(_column_lognormal_exponent(0.05)))
    assert value == pytest.approx(3.236e9, rel=1e-3)
    assert value**0.25 == pytest.approx(238.5, abs=0.1)


def test_column_analytic_optimum():
    assert column_analytic_optimum(0.05) == pytest.approx(238.45, abs=0.05)
    assert column_analytic_optimum(0.5) < column_analytic_optimum(0.05)


def test_column_optimum_failure_probability_by_mc():
    p = column_problem()
    b = column_analytic_optimum(0.05)
    pf = failure_probabilities(p, np.array([b, b]), 10**6, np.random.default_rng(0))[0]
    assert 0.048 <= pf <= 0.052


def test_column_large_section_is_safe():
    # P(k pi^2 E b^4 / (12 L^2) < F) in closed form at b = h = 350
    def ln_params(mean, cov):
        zeta2 = math.log(1 + cov**2)
        return math.log(mean) - zeta2 / 2, zeta2

    parts = [ln_params(0.6, 0.10), ln_params(10_000.0, 0.05), ln_params(3_000.0, 0.01)]
    lam = parts[0][0] + parts[1][0] - 2 * parts[2][0]
    zeta = math.sqrt(parts[0][1] + parts[1][1] + 4 * parts[2][1])
    pf = stats.norm.cdf((math.log(12 * COLUMN_LOAD / (math.pi**2 * 350.0**4)) - lam) / zeta)
    assert pf < 1e-10
    x = column_problem().model.transform(np.array([350.0, 350.0]),
                                         np.random.default_rng(1).random((100_000, 5)))
    assert np.all(column_response(x) < 0)


def test_column_soft_constraint():
    p = column_problem()
    assert p.soft_values(np.array([200.0, 300.0]))[0] > 0
    assert p.soft_values(np.array([300.0, 200.0]))[0] < 0


def test_choi_reference_values():
    p = choi_problem()
    assert p.reference.d_star == (3.44, 3.29) and p.reference.cost == 6.73
    assert p.cost(np.array([3.44, 3.29])) == pytest.approx(6.73)
    assert p.start().tolist() == [4.0, 5.0]
    assert all(c.alpha == pytest.approx(1 - CHOI_PF) for c in p.constraints)


def test_choi_g1_at_reference():
    g = choi_limit_states(np.array([[3.44, 3.29]]))[0]
    assert g[0] == pytest.approx(3.44**2 * 3.29 / 20 - 1, rel=1e-14)
    assert g[0] == pytest.approx(0.947, abs=1e-3)


def test_choi_reference_failure_probabilities():
    p = choi_problem()
    pf = failure_probabilities(p, np.array([3.44, 3.29]), 10**6, np.random.default_rng(2))
    assert np.all(pf <= CHOI_PF * 1.2)


def test_bracket_reference():
    p = bracket_problem()
    assert p.start().tolist() == [6.1, 20.2, 26.9]
    assert bracket_weight(p.reference.d_star) == pytest.approx(1364, abs=0.5)


def test_bracket_weight_hand_calculation():
    # rho * t * L * (4 sqrt(3) / 9 * w_AB + w_CD), SI units
    expected = 7860 * 0.269 * 5 * (4 * math.sqrt(3) / 9 * 0.061 + 0.202)
    assert bracket_weight([6.1, 20.2, 26.9]) == pytest.approx(expected, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("name,lower,upper", [("sigma_y", 176.49, 285.01),
                                              ("rho", 4760.20, 9576.3),
                                              ("L", 4.25, 5.75), ("w_AB", 4.25, 34.5),
                                              ("t", 4.25, 34.5)])
def test_bracket_augmented_rows(name, lower, upper):
    p = bracket_problem()
    sp = build_augmented(p.model)
    i = p.model.names.index(name)
    assert sp.lower[i] == pytest.approx(lower, rel=5e-4)
    assert sp.upper[i] == pytest.approx(upper, rel=5e-4)


@pytest.mark.parametrize("name,lower,upper", [("P", 15.98, 109.58), ("E", 110.38, 224.31)])
def test_bracket_gumbel_rows_are_left_skewed(name, lower, upper):
    # the tabulated rows do not follow from mean/cov alone; only their
    # orientation (long lower tail) is reproduced
    p = bracket_problem()
    sp = build_augmented(p.model)
    i = p.model.names.index(name)
    mean = p.model.env[i - 3].mean
    assert (mean - sp.lower[i]) > (sp.upper[i] - mean)
    assert (mean - lower) > (upper - mean)


def test_bracket_responses_units():
    x = np.array([[6.1, 20.2, 26.9, 100.0, 200.0, 225.0, 7860.0, 5.0]])
    w_cd, t, length = 0.202, 0.269, 5.0
    m_b = 100e3 * length / 3 + 7860 * 9.81 * w_cd * t * length**2 / 18
    sig_b = 6 * m_b / (w_cd * t**2)
    assert bracket_bending(x)[0] == pytest.approx((sig_b - 225e6) / 1e6, rel=1e-12)
    l_ab = 2 * length / (3 * math.sin(math.pi / 3))
    f_b = math.pi**2 * 200e9 * t * 0.061**3 / (12 * l_ab**2)
    f_ab = (1.5 * 100e3 + 0.75 * 7860 * 9.81 * w_cd * t * length) / math.cos(math.pi / 3)
    assert bracket_buckling(x)[0] == pytest.approx((f_ab - f_b) / 1e3, rel=1e-12)


def test_janusevskis_values():
    assert janusevskis_function(0.0, 0.0) == 0.0
    assert janusevskis_function(1.0, 0.0) == 0.0
    assert janusevskis_function(-1.0, 0.0) == 0.0
    d = z = Fraction(1, 2)
    exact = (z**4 / 3 - Fraction(21, 10) * z**2 + 4) * z**2 + d * z + 4 * d**2 * (d**2 - 1)
    assert janusevskis_function(0.5, 0.5) == pytest.approx(float(exact), rel=1e-15)


def test_janusevskis_problem():
    p = janusevskis_problem()
    assert p.constraints[0].threshold == 0.5 and p.model.dim == 2


def test_registry():
    for name in CONFIGS:
        assert get_problem(name).name == name
        default_config(name).validate()
    with pytest.raises(ConfigurationError):
        get_problem("nope")
    assert default_config("choi", n_mc=1000).n_mc == 1000


def test_frozen_sampler_reuses_uniforms():
    p = choi_problem()
    s = FrozenSampler(p.model, 1000, np.random.default_rng(0))
    a, b = s(np.array([3.0, 3.0])), s(np.array([4.0, 3.0]))
    assert np.allclose(b[:, 0] - a[:, 0], 1.0) and np.array_equal(a[:, 1], b[:, 1])
    q = true_quantiles(p, np.array([3.44, 3.29]), s)
    assert q.shape == (3,)
