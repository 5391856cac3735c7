"""Coefficient functions f usable both from numpy and from numba kernels.

A coefficient is an integer code plus a parameter vector so that compiled
kernels can evaluate f and f' without Python callbacks.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicSpline, PPoly

from .errors import ConfigError

ZERO, CONSTANT, LINEAR, LORENTZIAN, BUMP, SPLINE = range(6)


@numba.njit(cache=True, nogil=True)
def coef_eval(code, prm, x):
    """(f(x), f'(x)) for a coded coefficient."""
    if code == ZERO:
        return 0.0, 0.0
    if code == CONSTANT:
        return prm[0], 0.0
    if code == LINEAR:
        return prm[0] * x + prm[1], prm[0]
    if code == LORENTZIAN:
        d = 1.0 + x * x
        return 1.0 / d, -2.0 * x / (d * d)
    if code == BUMP:
        w = prm[0]
        r = x / w
        if abs(r) >= 1.0:
            return 0.0, 0.0
        q = 1.0 - r * r
        val = prm[1] * math.exp(1.0 - 1.0 / q)
        return val, val * (-2.0 * x / (w * w)) / (q * q)
    # cubic spline: prm = [k, x_0..x_k, c0[0..k-1], c1[..], c2[..], c3[..]]
    k = int(prm[0])
    # rightmost node <= x among x_0..x_{k-1}
    i = 0
    a = 0
    b = k - 1
    while a <= b:
        mid = (a + b) // 2
        if prm[1 + mid] <= x:
            i = mid
            a = mid + 1
        else:
            b = mid - 1
    t = x - prm[1 + i]
    base = 2 + k
    c0 = prm[base + i]
    c1 = prm[base + k + i]
    c2 = prm[base + 2 * k + i]
    c3 = prm[base + 3 * k + i]
    return ((c0 * t + c1) * t + c2) * t + c3, (3.0 * c0 * t + 2.0 * c1) * t + c2


@numba.njit(cache=True, nogil=True)
def coef_values(code, prm, xs):
    f = np.empty(xs.shape[0])
    df = np.empty(xs.shape[0])
    for j in range(xs.shape[0]):
        f[j], df[j] = coef_eval(code, prm, xs[j])
    return f, df


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Named coefficient f with its first three derivatives."""

    name: str
    code: int
    params: np.ndarray
    source: dict = None

    def __post_init__(self):
        prm = np.ascontiguousarray(self.params, dtype=float)
        prm.setflags(write=False)
        object.__setattr__(self, "params", prm)

    def __eq__(self, other):
        return (isinstance(other, Coefficient) and self.code == other.code
                and np.array_equal(self.params, other.params))

    def __hash__(self):
        return hash((self.code, self.params.tobytes()))

    @property
    def is_constant(self):
        return self.code in (ZERO, CONSTANT)

    def __call__(self, x):
        return self.derivative(x, 0)

    def f(self, x):
        return self.derivative(x, 0)

    def df(self, x):
        return self.derivative(x, 1)

    def g(self, x):
        """f * f'."""
        return self.derivative(x, 0) * self.derivative(x, 1)

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        prm = self.params
        code = self.code
        if code == ZERO:
            return np.zeros_like(x)
        if code == CONSTANT:
            return np.full_like(x, prm[0]) if order == 0 else np.zeros_like(x)
        if code == LINEAR:
            return [prm[0] * x + prm[1], np.full_like(x, prm[0]),
                    np.zeros_like(x), np.zeros_like(x)][order]
        if code == LORENTZIAN:
            d = 1.0 + x * x
            return [1.0 / d, -2.0 * x / d ** 2, (6.0 * x * x - 2.0) / d ** 3,
                    24.0 * x * (1.0 - x * x) / d ** 4][order]
        if code == BUMP:
            w, h = prm[0], prm[1]
            inside = np.abs(x) < w
            xs = np.where(inside, x, 0.0)
            q = 1.0 - (xs / w) ** 2
            q1 = -2.0 * xs / w ** 2
            q2 = -2.0 / w ** 2
            p1 = q1 / q ** 2
            p2 = q2 / q ** 2 - 2.0 * q1 ** 2 / q ** 3
            p3 = -6.0 * q1 * q2 / q ** 3 + 6.0 * q1 ** 3 / q ** 4
            f = h * np.exp(1.0 - 1.0 / q)
            val = [f, f * p1, f * (p2 + p1 ** 2), f * (p3 + 3 * p1 * p2 + p1 ** 3)][order]
            return np.where(inside, val, 0.0)
        k = int(prm[0])
        knots = prm[1:k + 2]
        coefs = prm[k + 2:].reshape(4, k)
        poly = PPoly(coefs, knots)
        return poly.derivative(order)(x) if order else poly(x)

    def to_dict(self):
        if self.source is not None:
            return dict(self.source)
        if self.code in (ZERO, LORENTZIAN):
            return {"name": self.name}
        return {"name": self.name, "params": self.params.tolist()}


def zero():
    return Coefficient("zero", ZERO, np.zeros(1))


def constant(value=1.0):
    return Coefficient("one" if value == 1.0 else "constant", CONSTANT, np.array([value]))


def linear(slope=1.0, intercept=0.0):
    return Coefficient("linear", LINEAR, np.array([slope, intercept]))


def lorentzian():
    return Coefficient("lorentzian", LORENTZIAN, np.zeros(1))


def bump(width=2.0, height=1.0):
    if not width > 0:
        raise ConfigError("bump width must be positive")
    return Coefficient("bump", BUMP, np.array([width, height]))


def tabulated(x, y):
    """C2 cubic spline through (x, y), extrapolated by the end polynomials."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or len(x) < 4 or np.any(np.diff(x) <= 0):
        raise ConfigError("tabulated coefficient needs >= 4 increasing nodes")
    cs = CubicSpline(x, y)
    k = len(x) - 1
    prm = np.concatenate([[k], cs.x, cs.c.ravel()])
    return Coefficient("tabulated", SPLINE, prm,
                       source={"name": "tabulated", "x": x.tolist(), "y": y.tolist()})


BUILTIN = {"zero": zero, "one": constant, "constant": constant, "linear": linear,
           "lorentzian": lorentzian, "bump": bump}


def from_config(block):
    """Coefficient from a name or a mapping {name: ..., params/x/y: ...}."""
    if isinstance(block, str):
        block = {"name": block}
    block = dict(block)
    name = block.pop("name", None)
    if name == "tabulated":
        try:
            return tabulated(block.pop("x"), block.pop("y"))
        except KeyError as exc:
            raise ConfigError(f"tabulated coefficient needs key {exc}") from None
    if name not in BUILTIN:
        raise ConfigError(f"unknown coefficient {name!r}; built-ins are {sorted(BUILTIN)} or tabulated")
    args = block.pop("params", [])
    if block:
        raise ConfigError(f"unknown coefficient keys {sorted(block)}")
    try:
        if isinstance(args, dict):
            return BUILTIN[name](**args)
        return BUILTIN[name](*args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad params for coefficient {name!r}: {exc}") from None
