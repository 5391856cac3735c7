"""Euler and modified Euler schemes, reference solutions and error processes."""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .coefficients import LINEAR, coef_eval
from .errors import ConfigError, NumericalFailure
from .path_sampler import aggregate


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _euler_kernel(code, prm, x0, inc, gamma, out):
    """Fill out[0..m] with the (modified if gamma != 0) Euler recursion.

    Returns the first step index with a non-finite state, or -1.
    """
    x = x0
    out[0] = x
    if gamma == 0.0:
        for i in range(inc.shape[0]):
            f, _ = coef_eval(code, prm, x)
            x = x + f * inc[i]
            out[i + 1] = x
            if not math.isfinite(x):
                return i + 1
    else:
        for i in range(inc.shape[0]):
            f, df = coef_eval(code, prm, x)
            x = x + f * inc[i] - f * df * gamma
            out[i + 1] = x
            if not math.isfinite(x):
                return i + 1
    return -1


@numba.njit(cache=True, nogil=True)
def _flow(code, prm, x, drift, duration, max_step):
    """RK4 solution of dx/dt = drift * f(x) over the given duration."""
    if duration <= 0.0 or drift == 0.0:
        return x
    steps = int(math.ceil(duration / max_step))
    if steps < 1:
        steps = 1
    h = duration / steps
    for _ in range(steps):
        k1, _d = coef_eval(code, prm, x)
        k2, _d = coef_eval(code, prm, x + 0.5 * h * drift * k1)
        k3, _d = coef_eval(code, prm, x + 0.5 * h * drift * k2)
        k4, _d = coef_eval(code, prm, x + h * drift * k3)
        x = x + h * drift * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return x


@numba.njit(cache=True, nogil=True)
def _jump_reference_kernel(code, prm, x0, M, T, idx, times, sizes, drift, max_step,
                           out, pre):
    """Exact solution for a driver made of drift*t plus finitely many jumps.

    Between jumps the state follows the flow of drift*f; at a jump of size y
    it moves from x to x + f(x) y. ``pre`` receives the pre-jump states.
    """
    dt = T / M
    x = x0
    out[0] = x
    j = 0
    nj = idx.shape[0]
    for k in range(M):
        t = k * dt
        while j < nj and idx[j] == k:
            x = _flow(code, prm, x, drift, times[j] - t, max_step)
            t = times[j]
            pre[j] = x
            f, _ = coef_eval(code, prm, x)
            x = x + f * sizes[j]
            j += 1
        x = _flow(code, prm, x, drift, (k + 1) * dt - t, max_step)
        out[k + 1] = x
        if not math.isfinite(x):
            return k + 1
    return -1


@numba.njit(cache=True, nogil=True)
def _wn_kernel(code, prm, xf, inc, K, out):
    """Per coarse cell: sum of (f(X_k) - f(X_start)) * dY_k over its fine steps."""
    m = inc.shape[0] // K
    out[0] = 0.0
    acc = 0.0
    for i in range(m):
        base = i * K
        fs, _ = coef_eval(code, prm, xf[base])
        cell = 0.0
        for j in range(1, K):
            fk, _ = coef_eval(code, prm, xf[base + j])
            cell += (fk - fs) * inc[base + j]
        acc += cell
        out[i + 1] = acc


@numba.njit(cache=True, nogil=True)
def _driver_wn_kernel(inc, K, out):
    """Per coarse cell: sum of (Y_{k-} - Y_start) * dY_k."""
    m = inc.shape[0] // K
    out[0] = 0.0
    acc = 0.0
    for i in range(m):
        base = i * K
        partial = 0.0
        cell = 0.0
        for j in range(K):
            cell += partial * inc[base + j]
            partial += inc[base + j]
        acc += cell
        out[i + 1] = acc


@numba.njit(cache=True, nogil=True)
def _reconstruct_kernel(code, prm, xr, inc, w, out):
    out[0] = 0.0
    u = 0.0
    for i in range(inc.shape[0]):
        f1, _ = coef_eval(code, prm, xr[i] + u)
        f0, _ = coef_eval(code, prm, xr[i])
        u = u + (f1 - f0) * inc[i] - (w[i + 1] - w[i])
        out[i + 1] = u


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    f: object
    x0: float = 1.0
    plan: object = None
    modified: bool = False
    reference_K: int = 64

    def __post_init__(self):
        K = self.reference_K
        if K < 1 or K & (K - 1):
            raise ConfigError(f"reference_K must be a power of 2, got {K}")
        if not math.isfinite(self.x0):
            raise ConfigError("x0 must be finite")


@dataclass(frozen=True)
class ErrorSample:
    n: int
    terminal: float
    path_sup: float
    wn_terminal: float = math.nan
    grid: np.ndarray = None
    seed_lineage: tuple = (None, None)
    source: str = "scheme"

    def row(self):
        return (self.n, self.seed_lineage[1], self.terminal, self.path_sup, self.wn_terminal,
                self.source)


@dataclass(frozen=True)
class ReferencePath:
    values: np.ndarray
    method: str
    pre_jump: np.ndarray = None
    doleans: float = None
    additive: tuple = None

    def at_grid(self, m):
        """Values at the m+1 nodes of a coarse grid aligned with the fine grid.

        For a constant coefficient the solution is x0 + c*Y exactly; it is then
        accumulated over the coarse cells in the order the scheme uses, so that
        differencing against the scheme carries no summation-order rounding.
        """
        M = len(self.values) - 1
        if M % m:
            raise ConfigError(f"grid misalignment: {m} does not divide {M}")
        if self.additive is not None:
            f, x0, fine = self.additive
            out = np.empty(m + 1)
            _euler_kernel(f.code, f.params, x0, aggregate(fine, M // m), 0.0, out)
            return out
        return self.values[::M // m]


def _check(step, what):
    if step >= 0:
        raise NumericalFailure(f"{what}: non-finite state at step {step}", step=step)


def euler_path(config, coarse_increments, gamma=0.0):
    """X^n at the grid nodes, starting from x0."""
    inc = np.ascontiguousarray(coarse_increments, dtype=float)
    out = np.empty(len(inc) + 1)
    f = config.f
    _check(_euler_kernel(f.code, f.params, float(config.x0), inc, float(gamma), out), "Euler scheme")
    return out


def modified_euler_path(config, coarse_increments, gamma_n):
    """Euler step minus f f'(previous state) * gamma_n."""
    inc = np.ascontiguousarray(coarse_increments, dtype=float)
    out = np.empty(len(inc) + 1)
    f = config.f
    _check(_euler_kernel(f.code, f.params, float(config.x0), inc, float(gamma_n), out),
           "modified Euler scheme")
    return out


def reference_path(config, bundle, method="auto", gamma=0.0):
    """Proxy for the true solution on the bundle's fine grid.

    ``method="euler"`` runs the Euler recursion on the fine increments;
    ``method="jumps"`` solves exactly between the recorded jumps (available
    when the bundle is jump-exact). ``"auto"`` prefers the exact route.
    ``gamma`` applies the modified step on the fine grid (Euler route only).
    """
    f = config.f
    if method == "auto":
        method = "jumps" if (bundle.jump_exact and gamma == 0.0) else "euler"
    fine = bundle.fine_increments
    M = len(fine)
    out = np.empty(M + 1)
    pre = None
    if method == "euler":
        _check(_euler_kernel(f.code, f.params, float(config.x0), fine, float(gamma), out),
               "fine-grid reference")
    elif method == "jumps":
        if not bundle.jump_exact:
            raise ConfigError("exact jump reference needs a jump-exact bundle")
        times, sizes = bundle.all_jumps()
        idx = bundle.fine_index(times)
        pre = np.empty(len(times))
        step = _jump_reference_kernel(f.code, f.params, float(config.x0), M, float(bundle.T),
                                      idx, times, sizes, float(bundle.drift),
                                      float(bundle.T / M), out, pre)
        _check(step, "jump reference")
    else:
        raise ConfigError(f"unknown reference method {method!r}")
    doleans = None
    if (f.code == LINEAR and f.params[0] == 1.0 and f.params[1] == 0.0
            and bundle.jump_exact and bundle.drift == 0.0):
        _, sizes = bundle.all_jumps()
        doleans = float(config.x0 * np.prod(1.0 + sizes))
    additive = (f, float(config.x0), fine) if (f.is_constant and gamma == 0.0) else None
    return ReferencePath(out, method, pre, doleans, additive)


def error_process(coarse_x, reference, plan, n, keep_grid=False, wn=None, seed_lineage=(None, None)):
    """U^n = X^n - X at the grid nodes, normalised by u_n."""
    coarse_x = np.asarray(coarse_x, dtype=float)
    ref = reference.values if isinstance(reference, ReferencePath) else np.asarray(reference)
    m = len(coarse_x) - 1
    M = len(ref) - 1
    if m < 1 or M % m:
        raise ConfigError(f"grid misalignment: coarse grid {m} vs fine grid {M}")
    grid_ref = reference.at_grid(m) if isinstance(reference, ReferencePath) else ref[::M // m]
    u = np.subtract(coarse_x, grid_ref)
    scale = plan.u(n) if plan is not None else 1.0
    wn_term = math.nan if wn is None else float(wn[-1])
    return ErrorSample(n, float(scale * u[-1]), float(scale * np.max(np.abs(u))), wn_term,
                       u if keep_grid else None, tuple(seed_lineage))


def wn_process(reference, bundle, plan, f, n=None, normalise=True):
    """u_n W^n at the coarse nodes from the fine reference path."""
    ref = reference.values if isinstance(reference, ReferencePath) else np.asarray(reference)
    inc = bundle.fine_increments
    if len(ref) != len(inc) + 1:
        raise ConfigError("grid misalignment between reference and bundle")
    out = np.empty(bundle.m + 1)
    _wn_kernel(f.code, f.params, ref, inc, bundle.K, out)
    if normalise and plan is not None:
        out *= plan.u(bundle.n if n is None else n)
    return out


def driver_wn_process(bundle, plan=None):
    """u_n * sum over cells of the integral of (Y_{s-} - Y_{cell start}) dY (f = 1 case)."""
    out = np.empty(bundle.m + 1)
    _driver_wn_kernel(bundle.fine_increments, bundle.K, out)
    if plan is not None:
        out *= plan.u(bundle.n)
    return out


def reconstruct_error(reference_coarse, coarse_increments, wn_raw, f):
    """U^n from the recursion U_i = U_{i-1} + (f(X+U) - f(X)) dY_i - dW_i."""
    xr = np.ascontiguousarray(reference_coarse, dtype=float)
    inc = np.ascontiguousarray(coarse_increments, dtype=float)
    w = np.ascontiguousarray(wn_raw, dtype=float)
    out = np.empty(len(inc) + 1)
    _reconstruct_kernel(f.code, f.params, xr, inc, w, out)
    return out
