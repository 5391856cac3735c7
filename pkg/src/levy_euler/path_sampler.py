"""Coupled fine/coarse increments of the driving Lévy process.

Three generation modes are available:

* ``ExactStable``: Chambers-Mallows-Stuck increments of the untruncated
  stable process with the same density coefficients.
* ``TruncationCompound``: jumps above a tiny cutoff ``beta'`` drawn
  explicitly, the remaining small jumps replaced by their compensating drift.
  Jumps above ``beta`` are kept in ``jump_times``/``jump_sizes``.
* ``SeriesRepresentation``: the decreasing-size shot-noise series.
"""

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import rng as rngmod
from .errors import ConfigError, SamplerError
from .levy_model import EULER_GAMMA, FiniteActivity, MeasureSpec, TabulatedDensity, TruncatedStable


# ---------------------------------------------------------------------------
# stable increments
# ---------------------------------------------------------------------------

def stable_parameters(alpha, c_plus, c_minus):
    """Map density coefficients to (scale, skewness, location) of S_alpha(scale, skew, loc).

    The location is nonzero only for alpha = 1, where the draws are placed in
    the truncation convention. For alpha < 1 the draws are uncompensated and
    for alpha > 1 fully compensated.
    """
    if c_plus < 0 or c_minus < 0 or c_plus + c_minus <= 0:
        raise ConfigError("stable coefficients must be nonnegative and not both zero")
    total = c_plus + c_minus
    skew = (c_plus - c_minus) / total
    if alpha == 1.0:
        return total * math.pi / 2, skew, (c_plus - c_minus) * (1.0 - EULER_GAMMA)
    scale = (math.gamma(1 - alpha) * math.cos(math.pi * alpha / 2) * total) ** (1.0 / alpha)
    return scale, skew, 0.0


def sampler_drift(alpha, c_plus, c_minus):
    """Drift, relative to the truncation x 1{|x|<=1}, carried by the raw draws."""
    if alpha < 1:
        return (c_plus - c_minus) * alpha / (1 - alpha)
    if alpha > 1:
        return -(c_plus - c_minus) * alpha / (alpha - 1)
    return 0.0


def sample_stable_increments(alpha, c_plus, c_minus, dt, count, rng):
    """Independent stable increments over steps of length dt.

    The Lévy density is c_plus*alpha*x^(-1-alpha) on x > 0 and
    c_minus*alpha*|x|^(-1-alpha) on x < 0.
    """
    if not 0 < alpha < 2:
        raise ConfigError(f"alpha must lie in (0, 2), got {alpha}")
    if not dt > 0:
        raise ConfigError("dt must be positive")
    scale, skew, loc = stable_parameters(alpha, c_plus, c_minus)
    half_pi = math.pi / 2
    v = rng.uniform(-half_pi, half_pi, count)
    w = rng.standard_exponential(count)
    if alpha == 1.0:
        s = scale * dt
        a = half_pi + skew * v
        x = (a * np.tan(v) - skew * np.log(half_pi * w * np.cos(v) / a)) / half_pi
        return s * x + skew * s * math.log(s) / half_pi + loc * dt
    t = skew * math.tan(math.pi * alpha / 2)
    b = math.atan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    av = alpha * (v + b)
    x = s * np.sin(av) / np.cos(v) ** (1 / alpha) * (np.cos(v - av) / w) ** ((1 - alpha) / alpha)
    return scale * dt ** (1 / alpha) * x


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------

def aggregate(fine, K):
    """K-fold block sums with a fixed summation order.

    For K a power of two the sums are formed as a pairwise tree, so that
    aggregating by 2 twice equals aggregating by 4, bit for bit. Otherwise
    the blocks are summed left to right.
    """
    fine = np.asarray(fine, dtype=float)
    K = int(K)
    if K < 1:
        raise ConfigError("K must be >= 1")
    if fine.ndim != 1 or len(fine) % K:
        raise ConfigError(f"length {len(fine)} is not divisible by K={K}")
    if K == 1:
        return fine.copy()
    blocks = fine.reshape(-1, K)
    if K & (K - 1) == 0:
        while blocks.shape[1] > 1:
            blocks = blocks[:, 0::2] + blocks[:, 1::2]
        return blocks[:, 0].copy()
    out = blocks[:, 0].copy()
    for j in range(1, K):
        out += blocks[:, j]
    return out


def _readonly(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PathBundle:
    """One simulated driver path on a fine grid of m*K cells over [0, T].

    ``jump_times``/``jump_sizes`` hold the explicit jumps larger than ``beta``
    and ``small_times``/``small_sizes`` the remaining explicit jumps. When
    ``jump_exact`` is true the driver equals ``drift * t`` plus the explicit
    jumps, so exact functionals of the jump set are available.
    """

    fine_increments: np.ndarray
    K: int
    T: float
    n: int
    seed_lineage: tuple
    jump_times: np.ndarray = None
    jump_sizes: np.ndarray = None
    small_times: np.ndarray = None
    small_sizes: np.ndarray = None
    drift: float = 0.0
    beta: float = None
    jump_exact: bool = False
    mode: str = "exact_stable"
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fine_increments", _readonly(self.fine_increments))
        for name in ("jump_times", "jump_sizes", "small_times", "small_sizes"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _readonly(val))
        if len(self.fine_increments) % self.K:
            raise ConfigError("fine grid length must be a multiple of K")

    @property
    def m(self):
        return len(self.fine_increments) // self.K

    @property
    def fine_dt(self):
        return self.T / len(self.fine_increments)

    @property
    def coarse_increments(self):
        return aggregate(self.fine_increments, self.K)

    @property
    def has_jumps(self):
        return self.jump_times is not None

    def all_jumps(self):
        """Every explicit jump, sorted by time: (times, sizes)."""
        if self.jump_times is None:
            raise ConfigError("bundle carries no jump record")
        times = np.concatenate([self.jump_times, self.small_times])
        sizes = np.concatenate([self.jump_sizes, self.small_sizes])
        order = np.argsort(times, kind="stable")
        return times[order], sizes[order]

    def fine_index(self, times):
        M = len(self.fine_increments)
        return np.minimum((np.asarray(times) * (M / self.T)).astype(np.int64), M - 1)

    def cell_jump_counts(self, n=None):
        """Number of explicit jumps in each coarse cell of grid size n."""
        n = self.n if n is None else n
        times, _ = self.all_jumps()
        m = round(n * self.T)
        per = len(self.fine_increments) // m
        return np.bincount(self.fine_index(times) // per, minlength=m)

    def coarsen(self, n_new):
        """Same path viewed with a coarser grid n_new (fine grid unchanged)."""
        if self.n % n_new:
            raise ConfigError(f"grid {n_new} does not divide {self.n}")
        return self._replace(K=self.K * (self.n // n_new), n=n_new)

    def with_refinement(self, K_new):
        """Same path and coarse grid with the fine grid merged down to K_new."""
        if self.K % K_new:
            raise ConfigError(f"refinement {K_new} does not divide {self.K}")
        fine = aggregate(self.fine_increments, self.K // K_new)
        return self._replace(fine_increments=fine, K=K_new)

    def _replace(self, **kw):
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(kw)
        return PathBundle(**data)


# ---------------------------------------------------------------------------
# sampler configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactStable:
    name = "exact_stable"


@dataclass(frozen=True)
class TruncationCompound:
    beta: float
    tol: float = 1e-12
    jump_budget: int = 2_000_000
    name = "truncation"


@dataclass(frozen=True)
class SeriesRepresentation:
    truncation_level: int
    tol: float = 1e-8
    beta: float = None
    name = "series"


@dataclass(frozen=True)
class SamplerConfig:
    mode: object
    spec: MeasureSpec
    n: int
    K: int = 1
    T: float = 1.0

    def __post_init__(self):
        if self.K < 1 or self.n < 1:
            raise ConfigError("n and K must be >= 1")
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        m = self.n * self.T
        if abs(m - round(m)) > 1e-9 or round(m) < 1:
            raise ConfigError("n*T must be a positive integer")
        beta = getattr(self.mode, "beta", None)
        if beta is not None and not 0 < beta < self.spec.p:
            raise ConfigError(f"cutoff beta={beta} must lie in (0, p={self.spec.p})")
        if isinstance(self.mode, (ExactStable, SeriesRepresentation)):
            if not isinstance(self.spec.family, TruncatedStable):
                raise ConfigError(f"{self.mode.name} mode needs a truncated stable measure")

    @property
    def m(self):
        return round(self.n * self.T)

    @property
    def fine_count(self):
        return self.m * self.K


def effective_spec(config):
    """Measure actually simulated: ExactStable ignores the jump bound p."""
    spec = config.spec
    if isinstance(config.mode, ExactStable):
        fam = spec.family
        return MeasureSpec(TruncatedStable(fam.alpha, fam.c_plus, fam.c_minus, math.inf), spec.b)
    return spec


def sample_exact_path(config, rng, lineage=(None, None)):
    fam = config.spec.family
    M = config.fine_count
    dt = config.T / M
    inc = sample_stable_increments(fam.alpha, fam.c_plus, fam.c_minus, dt, M, rng)
    shift = config.spec.b - sampler_drift(fam.alpha, fam.c_plus, fam.c_minus)
    if shift != 0.0:
        inc = inc + shift * dt
    return PathBundle(inc, config.K, config.T, config.n, lineage, mode="exact_stable")


def sub_cutoff(spec, tol, T=1.0, beta_max=None):
    """Largest cutoff beta' with neglected small-jump variance c(beta')*T <= tol."""
    if spec.is_finite:
        return 0.0
    upper = beta_max if beta_max is not None else spec.p
    if spec.c_beta(upper) * T <= tol:
        return upper
    fn = lambda lg: math.log(spec.c_beta(math.exp(lg)) * T) - math.log(tol)  # noqa: E731
    lo = math.log(upper) - 1.0
    while fn(lo) > 0:
        lo -= 5.0
        if lo < -700:
            raise SamplerError("cannot find a sub-cutoff reaching the variance target")
    return math.exp(brentq(fn, lo, math.log(upper), xtol=1e-12)) * (1 - 1e-12)


def _sample_magnitudes(family, rng, side, lo, hi, size):
    """|x| from F restricted to one side and lo < |x| <= hi."""
    if size == 0:
        return np.empty(0)
    if isinstance(family, TruncatedStable):
        a = family.alpha
        top_edge = min(hi, family.p)
        top = 0.0 if math.isinf(top_edge) else top_edge ** (-a)
        u = rng.random(size)
        return (top + u * (lo ** (-a) - top)) ** (-1.0 / a)
    if isinstance(family, FiniteActivity):
        parts, masses = [], []
        for a, b, mass in family._side_pieces(side):
            if a == b:
                if lo < a <= hi:
                    parts.append((a, a))
                    masses.append(mass)
                continue
            l, h = max(a, lo), min(b, hi)
            if h > l:
                parts.append((l, h))
                masses.append(mass * (h - l) / (b - a))
        masses = np.asarray(masses)
        which = rng.choice(len(parts), size=size, p=masses / masses.sum())
        u = rng.random(size)
        lows = np.array([pt[0] for pt in parts])[which]
        highs = np.array([pt[1] for pt in parts])[which]
        return lows + u * (highs - lows)
    if isinstance(family, TabulatedDensity):
        xs, ds = family._nodes(side)
        fine = np.unique(np.concatenate([np.linspace(a, b, 65) for a, b in zip(xs[:-1], xs[1:])]
                                        + [[max(lo, xs[0]), min(hi, xs[-1])]]))
        fine = fine[(fine >= max(lo, xs[0])) & (fine <= min(hi, xs[-1]))]
        dens = np.interp(fine, xs, ds, left=0.0, right=0.0)
        cum = np.concatenate([[0.0], np.cumsum(np.diff(fine) * (dens[1:] + dens[:-1]) / 2)])
        return np.interp(rng.random(size) * cum[-1], cum, fine)
    raise ConfigError("unsupported family")


def _compound_jumps(spec, rng, lo, hi, T):
    """Poisson number of jumps with lo < |x| <= hi on [0, T]: (times, sizes) sorted by time."""
    fam = spec.family
    m_plus = spec.theta_side(1, lo) - spec.theta_side(1, hi)
    m_minus = spec.theta_side(-1, lo) - spec.theta_side(-1, hi)
    total = m_plus + m_minus
    if total <= 0:
        return np.empty(0), np.empty(0)
    count = rng.poisson(total * T)
    times = rng.uniform(0.0, T, count)
    positive = rng.random(count) < m_plus / total
    sizes = np.empty(count)
    k = int(positive.sum())
    sizes[positive] = _sample_magnitudes(fam, rng, 1, lo, hi, k)
    sizes[~positive] = -_sample_magnitudes(fam, rng, -1, lo, hi, count - k)
    order = np.argsort(times, kind="stable")
    return times[order], sizes[order]


def _jump_increments(M, T, times, sizes, drift):
    idx = np.minimum((times * (M / T)).astype(np.int64), M - 1)
    inc = np.bincount(idx, weights=sizes, minlength=M).astype(float)
    if drift != 0.0:
        inc = inc + drift * (T / M)
    return inc


def sample_truncation_path(config, rng, small_rng=None, lineage=(None, None)):
    """Jumps above beta (recorded) plus jumps in (beta', beta], drift d(beta')."""
    mode = config.mode
    spec = config.spec
    beta = mode.beta
    bprime = sub_cutoff(spec, mode.tol, config.T, beta_max=beta)
    expected = spec.theta(bprime) * config.T if bprime > 0 else spec.theta(0.0) * config.T
    if expected > mode.jump_budget:
        raise SamplerError(
            f"variance target {mode.tol:g} needs sub-cutoff beta'={bprime:.4g} with "
            f"{expected:.4g} expected jumps, above the budget {mode.jump_budget}",
            required_cutoff=bprime)
    small_rng = rng if small_rng is None else small_rng
    big_t, big_s = _compound_jumps(spec, rng, beta, math.inf, config.T)
    small_t, small_s = _compound_jumps(spec, small_rng, bprime, beta, config.T)
    drift = spec.drift_at(bprime)
    times = np.concatenate([big_t, small_t])
    sizes = np.concatenate([big_s, small_s])
    order = np.argsort(times, kind="stable")
    inc = _jump_increments(config.fine_count, config.T, times[order], sizes[order], drift)
    return PathBundle(inc, config.K, config.T, config.n, lineage, big_t, big_s, small_t, small_s,
                      drift=drift, beta=beta, jump_exact=True, mode="truncation",
                      flags={"sub_cutoff": bprime, "neglected_variance": spec.c_beta(bprime) * config.T})


def sample_series_path(config, rng_gamma, rng_signs, rng_times, lineage=(None, None)):
    """Shot-noise series: the truncation_level largest jumps, compensated drift for the rest."""
    spec = config.spec
    fam = spec.family
    N = int(config.mode.truncation_level)
    if N < 1:
        raise ConfigError("truncation_level must be >= 1")
    T = config.T
    total = fam.c_plus + fam.c_minus
    arrivals = np.cumsum(rng_gamma.standard_exponential(N))
    mags = fam.inverse_tail(total, arrivals / T)
    keep = mags < fam.p if math.isfinite(fam.p) else np.ones(N, bool)
    signs = np.where(rng_signs.random(N) < fam.c_plus / total, 1.0, -1.0)
    times = rng_times.uniform(0.0, T, N)
    smallest = float(mags[-1])
    sizes = (signs * mags)[keep]
    times = times[keep]
    drift = spec.drift_at(smallest)
    residual = spec.c_beta(smallest) * T
    beta = config.mode.beta if config.mode.beta is not None else smallest
    big = np.abs(sizes) > beta
    order = np.argsort(times, kind="stable")
    inc = _jump_increments(config.fine_count, T, times[order], sizes[order], drift)
    bt, bs = times[big], sizes[big]
    st, ss = times[~big], sizes[~big]
    ob, os_ = np.argsort(bt, kind="stable"), np.argsort(st, kind="stable")
    flags = {"smallest_jump": smallest, "residual_variance": residual,
             "residual_ok": residual <= config.mode.tol}
    return PathBundle(inc, config.K, T, config.n, lineage, bt[ob], bs[ob], st[os_], ss[os_],
                      drift=drift, beta=beta, jump_exact=True, mode="series", flags=flags)


def sample_path(config, seed, path_index, base=0):
    """Generate the bundle of one path from its own counter-based streams.

    ``base`` offsets the substream ids, giving independent path families
    (e.g. limit-law drivers) under the same seed.
    """
    lineage = (int(seed), int(path_index))
    mode = config.mode

    def st(sub):
        return rngmod.stream(seed, path_index, base + sub)

    if isinstance(mode, ExactStable):
        return sample_exact_path(config, st(rngmod.DRIVER), lineage)
    if isinstance(mode, TruncationCompound):
        return sample_truncation_path(config, st(rngmod.DRIVER), st(rngmod.SMALL_JUMPS), lineage)
    if isinstance(mode, SeriesRepresentation):
        return sample_series_path(config, st(rngmod.DRIVER), st(rngmod.DRIVER_SIGNS),
                                  st(rngmod.DRIVER_TIMES), lineage)
    raise ConfigError(f"unknown sampler mode {mode!r}")


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------

_MAGIC = b"LVYB"
_HEADER = struct.Struct("<4sI32sdQQQQQ")


def spec_hash(spec):
    text = repr(sorted(spec.to_dict().items()))
    return hashlib.sha256(text.encode()).digest()


def dump_bundle(fh, bundle, spec):
    """Write a bundle as little-endian 64-bit floats after a fixed header."""
    seed, path = bundle.seed_lineage
    fine = np.asarray(bundle.fine_increments, dtype="<f8")
    fh.write(_HEADER.pack(_MAGIC, 1, spec_hash(spec), bundle.T, bundle.n, bundle.K,
                          seed or 0, path or 0, len(fine)))
    fh.write(fine.tobytes())
    if bundle.has_jumps:
        times, sizes = bundle.all_jumps()
    else:
        times = sizes = np.empty(0)
    fh.write(struct.pack("<Q", len(times)))
    fh.write(np.asarray(times, dtype="<f8").tobytes())
    fh.write(np.asarray(sizes, dtype="<f8").tobytes())


def load_bundle(fh):
    """Read one dumped bundle: (header dict, fine increments, jump times, jump sizes)."""
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        return None
    magic, version, digest, T, n, K, seed, path, count = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ConfigError("not a path bundle dump")
    fine = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
    (nj,) = struct.unpack("<Q", fh.read(8))
    times = np.frombuffer(fh.read(8 * nj), dtype="<f8").copy()
    sizes = np.frombuffer(fh.read(8 * nj), dtype="<f8").copy()
    header = {"version": version, "spec_hash": digest.hex(), "T": T, "n": n, "K": K,
              "seed": seed, "path_index": path}
    return header, fine, times, sizes
