"""Versioned YAML experiment configuration.

Unknown keys are errors. Validation messages carry the YAML line of the
offending key when it can be located.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from . import coefficients
from .errors import ConfigError
from .levy_model import MeasureSpec
from .path_sampler import ExactStable, SeriesRepresentation, TruncationCompound

SCHEMA_VERSION = 1

DEFAULT_N_GRID = (128, 256, 512, 1024, 2048, 4096)

THRESHOLD_KEYS = {
    "slope_target", "slope_tol", "tightness_level", "tightness_max", "ks_max",
    "self_test_ks_max", "chf_max", "chf_v0_max", "modified_level", "modified_ratio_max",
    "pathwise_decrease",
}

_SECTIONS = {
    "sampler": {"mode", "beta", "tol", "jump_budget", "truncation_level"},
    "selfcheck": {"paths", "rel_tol"},
    "limit": {"paths"},
    "chf": {"n", "paths", "u_max", "step"},
    "functionals": {"betas"},
}

_TOP = {"schema_version", "measure", "coefficient", "x0", "T", "n_grid", "paths_per_n",
        "reference_K", "seed", "outputs", "thresholds", "alpha", "threads"} | set(_SECTIONS)


@dataclass(frozen=True)
class ExperimentConfig:
    measure: MeasureSpec
    coefficient: object
    seed: int
    x0: float = 1.0
    T: float = 1.0
    n_grid: tuple = DEFAULT_N_GRID
    paths_per_n: int = 2000
    reference_K: int = 64
    outputs: str = "results"
    alpha: float = None
    threads: int = 1
    sampler: dict = field(default_factory=lambda: {"mode": "auto"})
    selfcheck: dict = field(default_factory=lambda: {"paths": 200, "rel_tol": 0.10})
    limit: dict = field(default_factory=lambda: {"paths": 2000})
    chf: dict = field(default_factory=lambda: {"u_max": 2.0, "step": 0.5})
    functionals: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "measure": self.measure.to_dict(),
            "coefficient": self.coefficient.to_dict(),
            "seed": self.seed, "x0": self.x0, "T": self.T, "n_grid": list(self.n_grid),
            "paths_per_n": self.paths_per_n, "reference_K": self.reference_K,
            "outputs": self.outputs, "alpha": self.alpha, "threads": self.threads,
            "sampler": dict(self.sampler), "selfcheck": dict(self.selfcheck),
            "limit": dict(self.limit), "chf": dict(self.chf),
            "functionals": dict(self.functionals), "thresholds": dict(self.thresholds),
        }

    def config_hash(self):
        """sha256 of the canonical JSON form; independent of key order and of outputs/threads."""
        d = self.to_dict()
        d.pop("outputs")
        d.pop("threads")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"), default=_jsonable)
        return hashlib.sha256(text.encode()).hexdigest()

    def sampler_mode(self):
        sm = dict(self.sampler)
        mode = sm.pop("mode", "auto")
        if mode == "auto":
            return None
        if mode == "exact_stable":
            return ExactStable()
        if mode == "truncation":
            if "beta" not in sm:
                raise ConfigError("sampler.beta is required for mode 'truncation'")
            return TruncationCompound(float(sm["beta"]), float(sm.get("tol", 1e-12)),
                                      int(sm.get("jump_budget", 2_000_000)))
        if mode == "series":
            return SeriesRepresentation(int(sm.get("truncation_level", 100_000)),
                                        float(sm.get("tol", 1e-8)), sm.get("beta"))
        raise ConfigError(f"unknown sampler mode {mode!r}")

    def with_overrides(self, **kw):
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**data)


def _jsonable(o):
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(type(o))


def _line_of(root, path):
    """1-based YAML line of the key at ``path`` (tuple of keys), if found."""
    node = root
    line = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for k, v in node.value:
            if k.value == key:
                line = k.start_mark.line + 1
                node = v
                break
        else:
            break
    return line


class _Validator:
    def __init__(self, root):
        self.root = root

    def fail(self, path, msg):
        line = _line_of(self.root, path) if self.root is not None else None
        where = ".".join(str(p) for p in path)
        prefix = f"line {line}: " if line else ""
        raise ConfigError(f"{prefix}{where}: {msg}")


def _as_float(val):
    if isinstance(val, str) and val.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(val)


def parse_config(data, root=None):
    """Validate a mapping (already loaded from YAML) into an ExperimentConfig."""
    v = _Validator(root)
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - _TOP
    for key in sorted(unknown):
        v.fail((key,), "unknown key")
    if data.get("schema_version") != SCHEMA_VERSION:
        v.fail(("schema_version",), f"expected schema_version {SCHEMA_VERSION}, got "
                                    f"{data.get('schema_version')!r}")
    if "seed" not in data or data["seed"] is None:
        v.fail(("seed",), "an explicit seed is required")
    if "measure" not in data:
        v.fail(("measure",), "missing measure block")
    meas = dict(data["measure"] or {})
    if "p" in meas:
        meas["p"] = _as_float(meas["p"])
    try:
        measure = MeasureSpec.from_dict(meas)
    except ConfigError as exc:
        v.fail(("measure",), str(exc))
    try:
        coef = coefficients.from_config(data.get("coefficient", "lorentzian"))
    except (ConfigError, TypeError) as exc:
        v.fail(("coefficient",), str(exc))
    kw = {}
    for key, conv in (("x0", float), ("T", float), ("paths_per_n", int), ("reference_K", int),
                      ("outputs", str), ("threads", int)):
        if key in data and data[key] is not None:
            try:
                kw[key] = conv(data[key])
            except (TypeError, ValueError):
                v.fail((key,), f"cannot interpret {data[key]!r}")
    seed = data["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        v.fail(("seed",), "seed must be an integer in [0, 2^64)")
    if "n_grid" in data:
        grid = data["n_grid"]
        if not isinstance(grid, list) or not all(isinstance(n, int) and n >= 3 for n in grid):
            v.fail(("n_grid",), "n_grid must be a list of integers >= 3")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            v.fail(("n_grid",), "n_grid must be strictly increasing")
        kw["n_grid"] = tuple(grid)
    if kw.get("paths_per_n", 1) < 1:
        v.fail(("paths_per_n",), "must be >= 1")
    K = kw.get("reference_K", 64)
    if K < 1 or K & (K - 1):
        v.fail(("reference_K",), "must be a power of 2")
    if kw.get("T", 1.0) <= 0:
        v.fail(("T",), "horizon must be positive")
    if data.get("alpha") is not None:
        a = float(data["alpha"])
        if not 0 < a < 2:
            v.fail(("alpha",), "index must lie in (0, 2)")
        kw["alpha"] = a
    for sec, allowed in _SECTIONS.items():
        if sec in data:
            block = data[sec] or {}
            if not isinstance(block, dict):
                v.fail((sec,), "must be a mapping")
            for key in sorted(set(block) - allowed):
                v.fail((sec, key), "unknown key")
            defaults = getattr(ExperimentConfig, "__dataclass_fields__")[sec].default_factory()
            defaults.update(block)
            kw[sec] = defaults
    if "thresholds" in data:
        th = data["thresholds"] or {}
        for key in sorted(set(th) - THRESHOLD_KEYS):
            v.fail(("thresholds", key), "unknown threshold")
        kw["thresholds"] = dict(th)
    cfg = ExperimentConfig(measure=measure, coefficient=coef, seed=seed, **kw)
    try:
        cfg.sampler_mode()
    except ConfigError as exc:
        v.fail(("sampler",), str(exc))
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads_config(text)


def loads_config(text):
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from None
    return parse_config(data, root)


def dump_config(cfg):
    d = cfg.to_dict()
    if math.isinf(d["measure"].get("p", 0.0)):
        d["measure"]["p"] = "inf"
    return yaml.safe_dump(d, sort_keys=False)
