"""Limit processes for the normalised Euler error.

The limit U solves U = int f'(X_-) U_- dY - W, where W depends on the case:

* Case 1, 2b, 3b: W = int f f'(X_-) dV with V stable and independent of Y;
* Case 2a: W = -(theta_plus - theta_minus)^2 / 4 * int f f'(X_-) ds;
* Case 3a: a sum over the jumps of Y with independent uniform marks, plus
  (d^2 / 2) * int f f'(X_-) ds.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .coefficients import coef_eval, coef_values
from .errors import ConfigError, NumericalFailure
from .levy_model import Case, _unit_exponent_parts, stable_exponent_closed
from .path_sampler import sample_stable_increments, sampler_drift


@dataclass(frozen=True)
class LimitSpec:
    case: Case
    alpha: float
    theta_plus: float
    theta_minus: float
    theta: float
    theta_prime: float
    d: float
    f: object
    driver: object

    def __post_init__(self):
        needs_h2 = self.case in (Case.CASE1, Case.CASE2A, Case.CASE2B, Case.CASE3B)
        if needs_h2 and not (self.theta is not None and self.theta > 0):
            raise ConfigError(f"{self.case.value} limit needs H2 limits with theta > 0")
        if self.case is Case.CASE3A and not math.isfinite(self.d):
            raise ConfigError("Case3a limit needs a finite drift d")


def build_limit_spec(spec, report, plan, f):
    """Collect the constants of the limit for the plan's case."""
    d = spec.drift_at(0.0) if plan.alpha < 1 else math.nan
    tp, tm = report.theta_plus_lim, report.theta_minus_lim
    if tp is None:
        tp = tm = th = thp = None
    else:
        th, thp = tp + tm, tp - tm
    return LimitSpec(plan.case, plan.alpha, tp, tm, th, thp, d, f, spec)


@dataclass(frozen=True)
class VProcessParams:
    """Stable process with Lévy density k_plus/x^(1+alpha) (x>0), k_minus/|x|^(1+alpha) (x<0).

    ``compensation`` is "full" (e^{iux}-1-iux) or "truncated" (e^{iux}-1-iux 1{|x|<=1}).
    """

    alpha: float
    k_plus: float
    k_minus: float
    compensation: str = "truncated"

    def __post_init__(self):
        if self.k_plus < 0 or self.k_minus < 0 or self.k_plus + self.k_minus <= 0:
            raise ConfigError("V density coefficients must be >= 0 and not both 0")
        if self.compensation not in ("full", "truncated"):
            raise ConfigError(f"unknown compensation {self.compensation!r}")
        if self.compensation == "full" and self.alpha <= 1:
            raise ConfigError("full compensation needs alpha > 1")


def v_params_from_case(ls):
    if ls.theta is None:
        raise ConfigError("V parameters need the H2 limits")
    a = ls.alpha
    if ls.case is Case.CASE1:
        tp, tm = ls.theta_plus, ls.theta_minus
        return VProcessParams(a, a / 2 * (tp * tp + tm * tm), a / 2 * (2 * tp * tm), "full")
    if ls.case in (Case.CASE2B, Case.CASE3B):
        k = ls.theta ** 2 * a / 4
        return VProcessParams(a, k, k, "truncated")
    raise ConfigError(f"{ls.case.value} has no stable V component")


def exponent_V(u, params):
    """log E exp(iu V_1) by quadrature of the Lévy-Khintchine integrand."""
    u = float(u)
    if u == 0.0:
        return 0j
    re, im = _unit_exponent_parts(u, params.alpha, math.inf)
    if params.compensation == "full":
        im -= u / (params.alpha - 1)
    return complex((params.k_plus + params.k_minus) * re, (params.k_plus - params.k_minus) * im)


def exponent_V_closed(u, params):
    """Same exponent from the closed stable form (independent route)."""
    a = params.alpha
    val = stable_exponent_closed(a, params.k_plus / a, params.k_minus / a, float(u))
    if params.compensation == "full":
        val -= 1j * u * (params.k_plus - params.k_minus) / (a - 1)
    return val


def sample_V_increments(params, dt, count, rng):
    a = params.alpha
    cp, cm = params.k_plus / a, params.k_minus / a
    inc = sample_stable_increments(a, cp, cm, dt, count, rng)
    target = 0.0
    if params.compensation == "full":
        target = -(params.k_plus - params.k_minus) / (a - 1)
    shift = target - sampler_drift(a, cp, cm)
    if shift != 0.0:
        inc = inc + shift * dt
    return inc


@numba.njit(cache=True, nogil=True)
def _linear_sde_kernel(code, prm, x, inc, dw, out):
    out[0] = 0.0
    u = 0.0
    for k in range(inc.shape[0]):
        _, df = coef_eval(code, prm, x[k])
        u = u + df * u * inc[k] - dw[k]
        out[k + 1] = u
        if not math.isfinite(u):
            return k + 1
    return -1


def _g_values(f, x):
    fv, dfv = coef_values(f.code, f.params, np.ascontiguousarray(x, dtype=float))
    return fv * dfv


def simulate_W(ls, reference, bundle, rng_v=None, rng_marks=None):
    """W on the fine grid of ``bundle``, driven by the reference X path.

    Returns the array of W at the M+1 fine nodes.
    """
    x = reference.values if hasattr(reference, "values") else np.asarray(reference)
    M = len(bundle.fine_increments)
    if len(x) != M + 1:
        raise ConfigError("reference and bundle grids are not aligned")
    dt = bundle.T / M
    g = _g_values(ls.f, x[:-1])
    if ls.case in (Case.CASE1, Case.CASE2B, Case.CASE3B):
        if rng_v is None:
            raise ConfigError("a V stream is required for this case")
        dv = sample_V_increments(v_params_from_case(ls), dt, M, rng_v)
        dw = g * dv
    elif ls.case is Case.CASE2A:
        dw = -(ls.theta_prime ** 2 / 4.0) * g * dt
    else:
        if not bundle.has_jumps:
            raise ConfigError("Case3a limit needs the jump record of the driver")
        if rng_marks is None:
            raise ConfigError("a mark stream is required for Case3a")
        times, sizes = bundle.all_jumps()
        idx = bundle.fine_index(times)
        pre = getattr(reference, "pre_jump", None)
        if pre is None or len(pre) != len(times):
            pre = x[idx]
        xi = rng_marks.random(len(times))
        f_pre, df_pre = coef_values(ls.f.code, ls.f.params, np.ascontiguousarray(pre))
        f_post, _ = coef_values(ls.f.code, ls.f.params, np.ascontiguousarray(pre + sizes * f_pre))
        jump_terms = ls.d * ((f_post - f_pre) * xi + f_pre * df_pre * sizes * (1.0 - xi))
        dw = (ls.d ** 2 / 2.0) * g * dt
        dw = dw + np.bincount(idx, weights=jump_terms, minlength=M)
    return np.concatenate([[0.0], np.cumsum(dw)])


def solve_limit_sde(ls, bundle, w, reference):
    """Fine-grid recursion U_{k+1} = U_k + f'(X_k) U_k dY_k - dW_k, U_0 = 0."""
    x = reference.values if hasattr(reference, "values") else np.asarray(reference)
    inc = np.ascontiguousarray(bundle.fine_increments)
    w = np.asarray(w, dtype=float)
    if not (len(x) == len(w) == len(inc) + 1):
        raise ConfigError("fine grids of Y, W and X are not aligned")
    out = np.empty(len(inc) + 1)
    step = _linear_sde_kernel(ls.f.code, ls.f.params, np.ascontiguousarray(x), inc,
                              np.ascontiguousarray(np.diff(w)), out)
    if step >= 0:
        raise NumericalFailure(f"limit SDE: non-finite state at step {step}", step=step)
    return out
