import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levy_euler.errors import ConfigError
from levy_euler.levy_model import (Case, FiniteActivity, MeasureSpec, TabulatedDensity,
                                   TruncatedStable, asymptotic_diagnostics, check_hypotheses,
                                   classify_case, compound_poisson, gamma_n, lambda_asymptote,
                                   lambda_n, levy_exponent, moment_via_tail, plan_for,
                                   stable_exponent_closed, tail_functionals, truncated_stable)

# frozen values from independent mpmath computations (see comments at each use)
GAMMA_A1_N1024 = 5.94950139409197112641575233023e-06      # 2-D mpmath quadrature, alpha=1, c+=1, c-=0
GAMMA_A07_N1024 = 2.86683986996712469757911063961e-07     # alpha=0.7, c+=0.8, c-=0.3
GAMMA_A15_N4096 = 5.1062940078600497603142937375e-07      # alpha=1.5, c+=0.6, c-=0.4
U_CASE1_4096 = 62.3594334091194794090844843263            # (4096/log 4096)^(2/3)
U_CASE2A_4096 = 59.203384348603955139401432284            # 4096/(log 4096)^2
BETA_3B_1024 = 4.58195699613763260523893858267e-05        # (log 1024/1024)^2
LAMBDA_3B_1024 = 0.1432929415888963407359924681           # (beta^-1/2 - 1)/1024
ASYM_3B_1024 = 0.1442695040888963407359924681             # 1/log 1024


def sym(alpha, c=0.5, p=1.0, b=0.0):
    return truncated_stable(alpha, c, c, p, b)


# --- construction -----------------------------------------------------------

def test_invalid_measures_rejected():
    with pytest.raises(ConfigError):
        TruncatedStable(2.5, 1, 1)
    with pytest.raises(ConfigError):
        TruncatedStable(1.0, 0, 0)
    with pytest.raises(ConfigError):
        TruncatedStable(1.0, -1, 1)
    with pytest.raises(ConfigError):
        MeasureSpec.from_dict({"family": "nope"})
    with pytest.raises(ConfigError):
        MeasureSpec.from_dict({"family": "truncated_stable", "alpha": 1, "c_plus": 1,
                               "c_minus": 1, "extra": 3})


def test_spec_round_trip():
    for spec in (sym(0.5), truncated_stable(1.5, 0.6, 0.4, 2.0, 0.3),
                 compound_poisson(1.0, [(-1, -0.1, 0.5), (0.1, 1, 0.5)]),
                 MeasureSpec(TabulatedDensity((-1, -0.2, 0.3, 1), (1, 2, 2, 1)))):
        again = MeasureSpec.from_dict(spec.to_dict())
        assert again.to_dict() == spec.to_dict()
        assert again.theta(0.5) == spec.theta(0.5)


# --- tail functionals ---------------------------------------------------------

def test_theta_plus_example():
    spec = truncated_stable(0.5, 1.0, 1.0)
    tf = tail_functionals(spec, 0.25)
    oracle = float(mp.quad(lambda x: 0.5 * x ** -1.5, [0.25, 1]))
    assert tf.theta_plus == pytest.approx(oracle, rel=1e-13)
    assert tf.theta_plus == pytest.approx(1.0, rel=1e-14)


def test_c_beta_example():
    spec = sym(0.5)
    assert tail_functionals(spec, 1.0).c_beta == pytest.approx(1 / 3, rel=1e-13)
    oracle = 2 * float(mp.quad(lambda x: x * x * 0.25 * x ** -1.5, [0, 1]))
    assert tail_functionals(spec, 1.0, method="quad").c_beta == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.5])
def test_symmetric_drift_terms_vanish(alpha):
    for beta in (0.5, 1e-2, 1e-5):
        tf = tail_functionals(sym(alpha), beta)
        assert tf.d_prime == 0.0
        assert tf.d_beta == 0.0


def test_theta_vanishes_beyond_support():
    spec = sym(1.2, p=0.7)
    assert spec.theta(0.7) == 0.0
    assert spec.theta(3.0) == 0.0


@pytest.mark.parametrize("alpha,cp,cm,p", [(0.5, 0.8, 0.2, 1.0), (1.0, 1.0, 0.3, 1.0),
                                           (1.5, 0.6, 0.4, 2.0), (1.9, 0.5, 0.5, 0.5)])
def test_closed_forms_match_quadrature(alpha, cp, cm, p):
    spec = truncated_stable(alpha, cp, cm, p)
    for beta in np.geomspace(1e-7, 0.99 * p, 12):
        a = tail_functionals(spec, beta, method="closed").as_row()
        b = tail_functionals(spec, beta, method="quad").as_row()
        for x, y in zip(a, b):
            assert abs(x - y) <= 1e-9 * max(abs(y), 1e-300) + 1e-13


def test_identity_truncated_moments():
    spec = truncated_stable(0.8, 0.7, 0.4)
    for gamma in (1.0, 2.0, 1.5):
        for a, b in ((0.01, 0.5), (1e-4, 1.0), (0.2, 0.3)):
            lhs = spec.moment(1, a, b, gamma)
            rhs = moment_via_tail(spec, 1, a, b, gamma)
            assert abs(lhs - rhs) <= 1e-8 * abs(lhs)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.1, 1.95), cp=st.floats(0.05, 2), cm=st.floats(0.05, 2),
       b1=st.floats(1e-6, 0.9), b2=st.floats(1e-6, 0.9))
def test_functional_monotonicity(alpha, cp, cm, b1, b2):
    spec = truncated_stable(alpha, cp, cm)
    lo, hi = min(b1, b2), max(b1, b2)
    t_lo, t_hi = tail_functionals(spec, lo), tail_functionals(spec, hi)
    assert t_lo.theta_plus >= t_hi.theta_plus >= 0
    assert t_lo.theta_minus >= t_hi.theta_minus >= 0
    assert t_lo.c_beta <= t_hi.c_beta * (1 + 1e-12)
    assert t_lo.theta == pytest.approx(t_lo.theta_plus + t_lo.theta_minus)
    assert t_lo.delta == pytest.approx(t_lo.d_plus + t_lo.d_minus)


def test_finite_activity_functionals():
    spec = compound_poisson(2.0, [(-1, -0.1, 0.5), (0.1, 1, 0.5)])
    assert spec.theta(0.0) == pytest.approx(2.0)
    assert spec.theta(0.05) == pytest.approx(2.0)
    # uniform on [0.1,1] with mass 1: tail above 0.55 is half
    assert tail_functionals(spec, 0.55).theta_plus == pytest.approx(0.5)


def test_tabulated_matches_quadrature_of_interpolant():
    x = (-1.0, -0.5, 0.25, 1.0)
    d = (1.0, 3.0, 2.0, 0.5)
    spec = MeasureSpec(TabulatedDensity(x, d))
    dens = lambda t: float(np.interp(t, x, d))  # noqa: E731
    oracle = float(mp.quad(lambda t: dens(float(t)), [0.3, 1.0]))
    assert tail_functionals(spec, 0.3).theta_plus == pytest.approx(oracle, rel=1e-10)


# --- hypotheses and cases -----------------------------------------------------

def test_hypotheses_example():
    r = check_hypotheses(truncated_stable(1.5, 0.6, 0.4))
    assert r.h1_alpha == pytest.approx(1.5)
    assert r.h2_alpha == pytest.approx(1.5)
    assert r.theta_plus_lim == pytest.approx(0.6, rel=1e-6)
    assert r.theta_minus_lim == pytest.approx(0.4, rel=1e-6)
    assert r.h3 is False
    assert r.h4 is True


def test_hypotheses_finite_and_symmetric():
    r = check_hypotheses(compound_poisson(1.0, [(-1, -0.1, 0.5), (0.1, 1, 0.5)]))
    assert r.finite_measure
    assert r.h1_alpha == pytest.approx(min(r.h1_indices))
    assert check_hypotheses(sym(0.7)).h3


def test_h1_monotone_in_index():
    r = check_hypotheses(sym(0.7))
    idx = sorted(r.h1_indices)
    assert idx[0] == pytest.approx(0.7)
    grid = [a for a in np.arange(0.05, 2.0, 0.05) if a >= 0.7 - 1e-9]
    assert len(idx) >= len(grid)


def test_case_examples():
    plan, _ = plan_for(sym(0.5))
    assert plan.case is Case.CASE3B
    plan, _ = plan_for(truncated_stable(1.5, 0.6, 0.4))
    assert plan.case is Case.CASE1
    assert plan.u(4096) == pytest.approx(U_CASE1_4096, rel=1e-13)
    plan, _ = plan_for(truncated_stable(1.0, 0.8, 0.2))
    assert plan.case is Case.CASE2A
    assert plan.u(4096) == pytest.approx(U_CASE2A_4096, rel=1e-13)
    assert plan_for(sym(1.0))[0].case is Case.CASE2B
    assert plan_for(truncated_stable(0.5, 0.8, 0.2))[0].case is Case.CASE3A
    # nonzero drift breaks H4
    assert plan_for(sym(0.5, b=0.1))[0].case is Case.CASE3A


def test_rate_formulas_spot_checks():
    for n in (2 ** 8, 2 ** 12, 2 ** 16):
        L = math.log(n)
        a = 1.5
        assert plan_for(sym(a))[0].u(n) == pytest.approx((n / L) ** (1 / a), rel=1e-14)
        assert plan_for(sym(a))[0].beta(n) == pytest.approx(L / n ** (1 / (2 * a)), rel=1e-14)
        assert plan_for(sym(1.0))[0].u(n) == pytest.approx(n / L, rel=1e-14)
        assert plan_for(sym(1.0))[0].beta(n) == pytest.approx(L / n, rel=1e-14)
        p3a = plan_for(truncated_stable(0.5, 0.8, 0.2))[0]
        assert p3a.u(n) == pytest.approx(n, rel=1e-14)
        assert p3a.beta(n) == pytest.approx(L * L / n, rel=1e-14)
        p3b = plan_for(sym(0.5))[0]
        assert p3b.beta(n) == pytest.approx((L / n) ** 2, rel=1e-14)


def test_plan_growth():
    for spec in (sym(1.5), sym(1.0), truncated_stable(1.0, 0.8, 0.2), sym(0.5),
                 truncated_stable(0.5, 0.8, 0.2)):
        plan = plan_for(spec)[0]
        us = [plan.u(2 ** k) for k in range(10, 30, 4)]
        bs = [plan.beta(2 ** k) for k in range(10, 30, 4)]
        assert all(b > a for a, b in zip(us, us[1:]))
        assert all(b < a for a, b in zip(bs, bs[1:]))
        assert lambda_n(spec, plan, 2 ** 40) < lambda_n(spec, plan, 2 ** 12)


def test_lambda_example():
    spec = sym(0.5)
    plan = plan_for(spec)[0]
    assert plan.beta(1024) == pytest.approx(BETA_3B_1024, rel=1e-13)
    assert lambda_n(spec, plan, 1024) == pytest.approx(LAMBDA_3B_1024, rel=1e-12)
    assert lambda_asymptote(plan, 1.0, 1024) == pytest.approx(ASYM_3B_1024, rel=1e-13)


def test_lambda_finite_measure_bound():
    spec = compound_poisson(3.0, [(0.1, 1, 1.0)])
    plan = classify_case(check_hypotheses(spec), spec=spec)
    for n in (16, 256, 4096):
        assert lambda_n(spec, plan, n) <= 3.0 / n + 1e-15


def test_lambda_zero_beyond_support():
    spec = sym(1.9, p=0.05)
    plan = plan_for(spec)[0]
    assert plan.beta(128) > 0.05
    assert lambda_n(spec, plan, 128) == 0.0
    assert plan.is_clamped(128)
    assert plan.beta_used(128) == pytest.approx(0.025)


# --- modified-scheme constant --------------------------------------------------

def test_gamma_symmetric_zero():
    assert gamma_n(sym(1.0), 1024) == 0.0
    assert gamma_n(sym(0.4), 4096) == 0.0


@pytest.mark.parametrize("args,n,oracle", [((1.0, 1.0, 0.0), 1024, GAMMA_A1_N1024),
                                           ((0.7, 0.8, 0.3), 1024, GAMMA_A07_N1024),
                                           ((1.5, 0.6, 0.4), 4096, GAMMA_A15_N4096)])
def test_gamma_against_double_integral(args, n, oracle):
    spec = truncated_stable(*args)
    assert gamma_n(spec, n) > 0
    assert gamma_n(spec, n) == pytest.approx(oracle, rel=1e-10)
    assert gamma_n(spec, n, method="quad") == pytest.approx(oracle, rel=1e-8)


def test_gamma_empty_domain():
    # all mass above 1: the cutoff domain (log n/n, 1] is empty
    spec = compound_poisson(1.0, [(1.5, 2.0, 1.0)])
    assert gamma_n(spec, 1024) == 0.0


# --- asymptotics and exponents --------------------------------------------------

def test_asymptotic_ratios_tend_to_one():
    spec = sym(0.5)
    diag = asymptotic_diagnostics(spec)
    r = diag.ratios("c")
    assert abs(r[-1] - 1) < 1e-3


def test_alpha1_log_asymptotics():
    spec = truncated_stable(1.0, 0.7, 0.3)
    for beta in (1e-6, 1e-8):
        tf = tail_functionals(spec, beta)
        assert tf.d_plus / math.log(1 / beta) == pytest.approx(0.7, rel=0.01)
    beta = 1e-8
    xlogx = spec.family.side_xlogx(1, beta, 0.5)
    assert xlogx / math.log(1 / beta) ** 2 == pytest.approx(-0.35, rel=0.1)


@pytest.mark.parametrize("alpha,cp,cm", [(0.5, 0.8, 0.2), (1.0, 0.8, 0.2), (1.5, 0.6, 0.4),
                                         (1.0, 0.5, 0.5)])
def test_levy_exponent_closed_vs_quadrature(alpha, cp, cm):
    spec = truncated_stable(alpha, cp, cm, math.inf)
    for u in (-2.0, -0.5, 0.7, 1.0, 3.0):
        a = levy_exponent(spec, u)
        b = levy_exponent(spec, u, method="quad")
        assert abs(a - b) < 1e-8 * max(1, abs(a))


def test_stable_exponent_gamma_function_oracle():
    # symmetric, density c*alpha*|x|^(-1-alpha): exponent -2 c alpha Gamma(-alpha)... in closed form
    alpha, c = 1.5, 0.4
    u = 1.3
    oracle = 2 * c * alpha * float(mp.gamma(-alpha) * mp.cos(mp.pi * alpha / 2)) * u ** alpha
    assert stable_exponent_closed(alpha, c, c, u).real == pytest.approx(oracle, rel=1e-12)
