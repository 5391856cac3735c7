import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levy_euler import coefficients as co
from levy_euler import rng as rngmod
from levy_euler.errors import ConfigError
from levy_euler.euler_engine import SchemeConfig, reference_path
from levy_euler.levy_model import Case, check_hypotheses, plan_for, truncated_stable
from levy_euler.limit_law import (LimitSpec, VProcessParams, build_limit_spec, exponent_V,
                                  exponent_V_closed, sample_V_increments, simulate_W,
                                  solve_limit_sde, v_params_from_case)
from levy_euler.path_sampler import (ExactStable, PathBundle, SamplerConfig, TruncationCompound,
                                     sample_path)
from levy_euler.stats_verify import empirical_chf, ks_two_sample


def ls_for(case, tp, tm, alpha, f=None, d=math.nan):
    return LimitSpec(case, alpha, tp, tm, tp + tm, tp - tm, d, f or co.lorentzian(), None)


def exponent_oracle(u, p):
    """mpmath: [0, 1] by quad; on [1, inf) the power terms analytically and the
    oscillatory part by quadosc."""
    a = p.alpha

    @mp.workdps(30)  # the head integrand cancels badly near 0 at default precision
    def side(k, sgn):
        if k == 0:
            return mp.mpc(0)
        v = sgn * u
        head = mp.quad(lambda x: (mp.expj(v * x) - 1 - 1j * v * x) * x ** (-1 - a), [0, 1])
        osc = mp.quadosc(lambda x: mp.expj(v * x) * x ** (-1 - a), [1, mp.inf], omega=abs(v))
        tail = osc - 1 / mp.mpf(a)
        if p.compensation == "full":
            tail -= 1j * v / (mp.mpf(a) - 1)
        return k * (head + tail)

    return complex(side(p.k_plus, 1) + side(p.k_minus, -1))


def test_v_params_examples():
    p = v_params_from_case(ls_for(Case.CASE2B, 0.5, 0.5, 1.0))
    assert p.k_plus == p.k_minus == pytest.approx(1.0 * 1.0 / 4)
    p = v_params_from_case(ls_for(Case.CASE1, 0.7, 0.0, 1.5))
    assert p.k_minus == 0.0
    assert p.k_plus == pytest.approx(0.75 * 0.49)
    with pytest.raises(ConfigError):
        v_params_from_case(ls_for(Case.CASE2A, 0.7, 0.3, 1.0))


def test_limit_spec_needs_h2():
    with pytest.raises(ConfigError):
        LimitSpec(Case.CASE1, 1.5, None, None, None, None, math.nan, co.lorentzian(), None)
    with pytest.raises(ConfigError):
        LimitSpec(Case.CASE3A, 0.5, 0.8, 0.2, 1.0, 0.6, math.nan, co.lorentzian(), None)


def test_exponent_zero_and_symmetry():
    p = VProcessParams(1.5, 0.6, 0.6, "truncated")
    assert exponent_V(0.0, p) == 0
    for u in (0.3, 1.0, 2.5):
        e = exponent_V(u, p)
        assert abs(e.imag) < 1e-12
        assert exponent_V(-u, p) == pytest.approx(e, abs=1e-12)


@pytest.mark.parametrize("p", [VProcessParams(1.5, 1.5, 1.5, "full"),
                               VProcessParams(1.5, 0.75, 0.25, "full"),
                               VProcessParams(0.5, 0.3, 0.1, "truncated"),
                               VProcessParams(1.0, 0.4, 0.2, "truncated")])
def test_exponent_three_routes(p):
    for u in (1.0, -2.0):
        a, b = exponent_V(u, p), exponent_V_closed(u, p)
        assert abs(a - b) < 1e-8 * max(1, abs(a))
        assert abs(a - exponent_oracle(u, p)) < 1e-8 * max(1, abs(a))


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.2, 1.9), kp=st.floats(0.0, 2.0), km=st.floats(0.01, 2.0),
       u=st.floats(-4, 4))
def test_exponent_properties(a, kp, km, u):
    p = VProcessParams(a, kp, km, "truncated")
    e = exponent_V(u, p)
    assert e.real <= 1e-12
    assert exponent_V(-u, p) == pytest.approx(e.conjugate(), abs=1e-9)
    assert abs(e - exponent_V_closed(u, p)) < 1e-8 * max(1.0, abs(e))


@pytest.mark.parametrize("p", [VProcessParams(1.0, 0.5, 0.2, "truncated"),
                               VProcessParams(1.5, 0.7, 0.2, "full"),
                               VProcessParams(0.5, 0.3, 0.1, "truncated")])
@pytest.mark.parametrize("u", [5e-324, 1e-300, 1e-8, -1e-5, 0.3])
def test_exponent_tiny_u(p, u):
    e = exponent_V(u, p)
    ref = exponent_V_closed(u, p)
    assert math.isfinite(e.real) and math.isfinite(e.imag)
    assert abs(e - ref) <= 1e-12 * abs(ref) + 1e-300


def test_remark_agreement_symmetric():
    alpha, theta = 1.5, 1.2
    p1 = v_params_from_case(ls_for(Case.CASE1, theta / 2, theta / 2, alpha))
    p2 = v_params_from_case(ls_for(Case.CASE2B, theta / 2, theta / 2, alpha))
    assert p1.k_plus == pytest.approx(p2.k_plus) and p1.k_minus == pytest.approx(p2.k_minus)
    for u in np.linspace(-3, 3, 25):
        assert abs(exponent_V(u, p1) - exponent_V(u, p2)) < 1e-8


@pytest.mark.parametrize("p", [VProcessParams(1.5, 1.5, 1.5, "full"),
                               VProcessParams(1.5, 0.75, 0.25, "full"),
                               VProcessParams(0.5, 0.3, 0.1, "truncated")])
def test_v_sampler_chf(p):
    x = sample_V_increments(p, 1.0, 100_000, rngmod.stream(3, 0))
    for u in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
        assert abs(empirical_chf(x, u)[0] - np.exp(exponent_V(u, p))) < 0.02


def _bundle_and_ref(spec, mode, f, n=64, K=8, i=0):
    b = sample_path(SamplerConfig(mode, spec, n, K), 5, i)
    ref = reference_path(SchemeConfig(f, x0=0.5), b)
    return b, ref


def test_w_vanishes_degenerate_cases():
    spec = truncated_stable(1.0, 0.5, 0.5)
    b, ref = _bundle_and_ref(spec, ExactStable(), co.lorentzian())
    w = simulate_W(ls_for(Case.CASE2A, 0.5, 0.5, 1.0), ref, b)
    assert np.all(w == 0.0)
    b, ref = _bundle_and_ref(spec, ExactStable(), co.constant(2.0))
    for case in (Case.CASE1, Case.CASE2A, Case.CASE2B, Case.CASE3B):
        w = simulate_W(ls_for(case, 0.6, 0.4, 1.5 if case is Case.CASE1 else 1.0, co.constant(2.0)),
                       ref, b, rngmod.stream(1, 0, 10))
        assert np.all(w == 0.0)
    spec = truncated_stable(0.5, 0.8, 0.2)
    b, ref = _bundle_and_ref(spec, TruncationCompound(0.01), co.lorentzian())
    w = simulate_W(ls_for(Case.CASE3A, 0.8, 0.2, 0.5, d=0.0), ref, b,
                   rng_marks=rngmod.stream(1, 0, 11))
    assert np.all(w == 0.0)
    b, ref = _bundle_and_ref(spec, TruncationCompound(0.01), co.constant(1.0))
    w = simulate_W(ls_for(Case.CASE3A, 0.8, 0.2, 0.5, co.constant(1.0), d=-0.6), ref, b,
                   rng_marks=rngmod.stream(1, 0, 11))
    assert np.all(w == 0.0)


def test_linear_sde_zero_forcing():
    b = PathBundle(np.random.default_rng(1).standard_cauchy(32) * 0.01, 4, 1.0, 8, (0, 0))
    ls = ls_for(Case.CASE2A, 0.5, 0.5, 1.0)
    x = np.linspace(0, 1, 33)
    assert np.all(solve_limit_sde(ls, b, np.zeros(33), x) == 0.0)


def test_linear_sde_decoupled():
    # constant f: f' = 0, so U = -W pathwise
    b = PathBundle(np.random.default_rng(1).standard_cauchy(32) * 0.01, 4, 1.0, 8, (0, 0))
    ls = ls_for(Case.CASE2A, 0.5, 0.5, 1.0, co.constant(1.0))
    w = np.cumsum(np.r_[0.0, np.random.default_rng(2).normal(size=32)])
    u = solve_limit_sde(ls, b, w, np.zeros(33))
    assert np.allclose(u, -w, atol=1e-14)


def test_linear_sde_hand_solution():
    # f(x) = x, dY = 0, W_t = t: U_t = -t
    b = PathBundle(np.zeros(16), 2, 1.0, 8, (0, 0))
    ls = ls_for(Case.CASE2A, 0.5, 0.5, 1.0, co.linear())
    t = np.linspace(0, 1, 17)
    assert np.allclose(solve_limit_sde(ls, b, t, np.ones(17)), -t, atol=1e-15)


def test_linear_sde_grid_refinement():
    spec = truncated_stable(1.0, 0.8, 0.2)
    report = check_hypotheses(spec)
    plan = plan_for(spec)[0]
    f = co.lorentzian()
    ls = build_limit_spec(spec, report, plan, f)
    for i in range(3):
        fine = sample_path(SamplerConfig(ExactStable(), spec, 256, 256), 8, i)
        vals = []
        for b in (fine, fine.with_refinement(128)):
            ref = reference_path(SchemeConfig(f, x0=0.5), b, method="euler")
            vals.append(solve_limit_sde(ls, b, simulate_W(ls, ref, b), ref)[-1])
        assert abs(vals[0] - vals[1]) <= 1e-3 * abs(vals[0])


class _Permuted:
    """Uniform marks from a generator, returned in reversed order."""

    def __init__(self, gen):
        self.gen = gen

    def random(self, k):
        return self.gen.random(k)[::-1].copy()


def test_case3a_mark_order_irrelevant_in_law():
    spec = truncated_stable(0.5, 0.8, 0.2)
    report = check_hypotheses(spec)
    plan = plan_for(spec)[0]
    f = co.lorentzian()
    ls = build_limit_spec(spec, report, plan, f)
    a, b = [], []
    for i in range(5000):
        bun, ref = _bundle_and_ref(spec, TruncationCompound(0.02), f, n=16, K=4, i=i)
        a.append(simulate_W(ls, ref, bun, rng_marks=rngmod.stream(2, i, 11))[-1])
        b.append(simulate_W(ls, ref, bun, rng_marks=_Permuted(rngmod.stream(3, i, 11)))[-1])
    assert not ks_two_sample(a, b).reject
