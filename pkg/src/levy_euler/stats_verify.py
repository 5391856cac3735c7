"""Turning Monte Carlo samples into verdicts: rates, tightness, KS, characteristic functions."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError
from .levy_model import levy_exponent
from .limit_law import exponent_V

# sd of the Kolmogorov distribution, used for the KS standard error
KOLMOGOROV_SD = 0.2603


@dataclass(frozen=True)
class RateFit:
    slope: object
    intercept: object
    quantiles: dict
    residuals: tuple
    n_grid: tuple
    regressor: str = "log n"
    level: float = 0.5
    flag: str = None

    def to_dict(self):
        d = asdict(self)
        d["quantiles"] = {str(k): v for k, v in self.quantiles.items()}
        return d


def rate_regression(samples, level=0.5, log_corrected=False):
    """Least-squares slope of log(quantile of |U^n_T|) against log n or log(n/log n).

    ``samples`` maps n to either a precomputed quantile or an array of
    unnormalised terminal errors.
    """
    ns = sorted(int(n) for n in samples)
    if len(ns) < 4 or ns[-1] / ns[0] < 16:
        raise ConfigError("rate fit needs >= 4 grid sizes spanning a factor >= 16")
    q = {}
    for n in ns:
        val = samples[n]
        if np.ndim(val) == 0:
            q[n] = float(val)
        else:
            q[n] = float(np.quantile(np.abs(np.asarray(val, dtype=float)), level))
    reg = "log(n/log n)" if log_corrected else "log n"
    if any(v == 0.0 for v in q.values()):
        return RateFit(None, None, q, (), tuple(ns), reg, level, flag="exact scheme")
    x = np.array([math.log(n / math.log(n)) if log_corrected else math.log(n) for n in ns])
    y = np.log([q[n] for n in ns])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), q, tuple(float(r) for r in resid), tuple(ns),
                   reg, level)


@dataclass(frozen=True)
class DistanceReport:
    kind: str
    statistic: float
    n_a: int = 0
    n_b: int = 0
    pvalue: float = math.nan
    critical: float = math.nan
    level: float = 0.01
    reject: bool = False
    standard_error: float = math.nan
    grid: tuple = field(default=(), repr=False)

    def to_dict(self):
        d = asdict(self)
        d["grid"] = [list(r) for r in self.grid]
        return d


def ks_critical(n_a, n_b, level=0.01):
    c = math.sqrt(-math.log(level / 2) / 2)
    return c * math.sqrt((n_a + n_b) / (n_a * n_b))


def ks_standard_error(n_a, n_b):
    """Approximate standard error of a two-sample KS statistic."""
    return KOLMOGOROV_SD * math.sqrt((n_a + n_b) / (n_a * n_b))


def ks_two_sample(a, b, level=0.01):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ConfigError("KS needs two nonempty samples")
    res = stats.ks_2samp(a, b, method="asymp")
    crit = ks_critical(a.size, b.size, level)
    stat = float(res.statistic)
    return DistanceReport("ks", stat, a.size, b.size, float(res.pvalue), crit, level,
                          stat > crit, ks_standard_error(a.size, b.size))


def empirical_chf(sample, u):
    """(1/N) sum exp(i u x_j) for each u."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ConfigError("empirical chf needs a nonempty sample")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.array([np.mean(np.exp(1j * uu * x)) if uu != 0 else 1.0 + 0j for uu in u])
    return out


def joint_empirical_chf(x, y, u, v):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or x.size != y.size:
        raise ConfigError("joint chf needs paired nonempty samples")
    if u == 0 and v == 0:
        return 1.0 + 0j
    return complex(np.mean(np.exp(1j * (u * x + v * y))))


def product_limit_check(y_terminal, w_terminal, driver_spec, vparams, u_grid, v_grid, T=1.0):
    """max |joint chf of (Y_T, u_n W^n_T) - Phi(u) Psi(v)| over the grid."""
    rows = []
    phi = {u: complex(np.exp(T * levy_exponent(driver_spec, u, method="quad"))) for u in u_grid}
    psi = {v: complex(np.exp(T * exponent_V(v, vparams))) for v in v_grid}
    for u in u_grid:
        for v in v_grid:
            emp = joint_empirical_chf(y_terminal, w_terminal, u, v)
            tgt = phi[u] * psi[v]
            rows.append((float(u), float(v), emp.real, emp.imag, tgt.real, tgt.imag, abs(emp - tgt)))
    worst = max(r[-1] for r in rows)
    return DistanceReport("chf", worst, len(np.ravel(y_terminal)), 0, grid=tuple(rows))


def chf_column_max(report, v=0.0):
    return max(r[-1] for r in report.grid if r[1] == v)


CHF_COLUMNS = ("u", "v", "re", "im", "target_re", "target_im", "abs_dev")


def write_chf_csv(path, report):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CHF_COLUMNS)
        for r in report.grid:
            wr.writerow([repr(float(v)) for v in r])


@dataclass(frozen=True)
class TightnessTable:
    levels: tuple
    quantiles: dict
    ratios: dict

    def to_dict(self):
        return {"levels": list(self.levels),
                "quantiles": {str(n): list(q) for n, q in self.quantiles.items()},
                "ratios": {str(k): v for k, v in self.ratios.items()}}

    def as_text(self):
        head = f"{'n':>8s}" + "".join(f"{'q' + format(l, 'g'):>14s}" for l in self.levels)
        rows = [f"{n:8d}" + "".join(f"{v:14.6g}" for v in q) for n, q in self.quantiles.items()]
        tail = "   max/min" + "".join(f"{self.ratios[l]:14.4g}" for l in self.levels)
        return "\n".join([head, *rows, tail])


def tightness_quantiles(samples, levels=(0.5, 0.9)):
    """Per-n quantiles of normalised path sups and their max/min ratio per level."""
    ns = sorted(samples)
    if len(ns) < 3:
        raise ConfigError("tightness table needs >= 3 grid sizes")
    quant = {n: tuple(float(np.quantile(np.asarray(samples[n]), l)) for l in levels) for n in ns}
    ratios = {}
    for j, l in enumerate(levels):
        col = np.array([quant[n][j] for n in ns])
        if np.all(col == 0):
            ratios[l] = 1.0
        elif np.any(col == 0):
            ratios[l] = math.inf
        else:
            ratios[l] = float(col.max() / col.min())
    return TightnessTable(tuple(levels), quant, ratios)


def to_json(obj, path=None):
    def default(o):
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    text = json.dumps(obj, default=default, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def report_text(rep):
    """Aligned human-readable rendering of a DistanceReport."""
    if rep.kind == "ks":
        return (f"KS = {rep.statistic:.4f} (N={rep.n_a}, M={rep.n_b}, p={rep.pvalue:.3g}, "
                f"critical {rep.critical:.4f} at {rep.level:g}, se {rep.standard_error:.4f}, "
                f"{'reject' if rep.reject else 'no reject'})")
    lines = [" ".join(f"{c:>10s}" for c in CHF_COLUMNS)]
    lines += [" ".join(f"{v:10.4f}" for v in r) for r in rep.grid]
    lines.append(f"max deviation {rep.statistic:.4f}")
    return "\n".join(lines)
