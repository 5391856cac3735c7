"""Command line runner: classify, functionals, convergence, limit-compare, modified, replay.

Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 threshold failure (--assert).
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .config import load_config, parse_config
from .errors import ConfigError, NumericalFailure, SamplerError, ThresholdFailure
from .experiments import (Setup, modified_summary, run_chf_product, run_convergence,
                          run_limit_compare)
from .levy_model import (TAIL_COLUMNS, Case, _decades, asymptotic_diagnostics, check_hypotheses,
                         classify_case, gamma_n, tail_functionals)
from .stats_verify import report_text, to_json, write_chf_csv

CSV_SCHEMA = "levy_euler/samples v1"
SAMPLE_COLUMNS = ("n", "path_index", "terminal", "path_sup", "wn_terminal", "source")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3


def case_label(case):
    return case.value.replace("Case", "Case ")


def build_setup(cfg):
    return Setup(cfg.measure, cfg.coefficient, cfg.x0, cfg.T, cfg.n_grid, cfg.paths_per_n,
                 cfg.reference_K, cfg.seed, cfg.sampler_mode(), cfg.alpha, cfg.threads,
                 int(cfg.selfcheck.get("paths", 200)), float(cfg.selfcheck.get("rel_tol", 0.10)),
                 int(cfg.limit.get("paths", 2000)))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects outputs of one command and writes the manifest."""

    def __init__(self, command, cfg, out_dir):
        self.command = command
        self.cfg = cfg
        self.out = out_dir
        self.outputs = {}
        self.checks = {}
        self.t0 = time.perf_counter()
        self.case = None
        self.plan = None
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def register(self, name, summary=None):
        p = self.path(name)
        self.outputs[name] = {"path": name, "sha256": _sha256(p), "summary": summary or {}}

    def write_json(self, name, obj, summary=None):
        to_json(obj, self.path(name))
        self.register(name, summary)

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text.rstrip("\n") + "\n")
        self.register(name)

    def check(self, name, value, limit, ok):
        self.checks[name] = {"value": value, "threshold": limit, "passed": bool(ok)}

    def manifest(self, dry_run=False, planned=()):
        data = {
            "artifact_version": __version__,
            "command": self.command,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg.to_dict(),
            "seed": self.cfg.seed,
            "case": self.case,
            "rate_plan": self.plan,
            "outputs": self.outputs,
            "checks": self.checks,
            "wall_clock_s": time.perf_counter() - self.t0,
            "dry_run": dry_run,
        }
        if dry_run:
            data["planned_outputs"] = list(planned)
        to_json(data, self.path("manifest.json"))
        return data


def write_samples_csv(path, conv, source="scheme"):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {CSV_SCHEMA}\n")
        wr = csv.writer(fh)
        wr.writerow(SAMPLE_COLUMNS)
        for n in conv.setup.n_grid:
            s = conv.samples[n]
            for i in range(len(s["terminal"])):
                wr.writerow([n, i, repr(float(s["terminal"][i])), repr(float(s["path_sup"][i])),
                             repr(float(s["wn_terminal"][i])), source])


def write_samples_jsonl(path, conv):
    with open(path, "w") as fh:
        for n in conv.setup.n_grid:
            s = conv.samples[n]
            for i in range(len(s["terminal"])):
                fh.write(json.dumps({"n": n, "path_index": i, "terminal": float(s["terminal"][i]),
                                     "path_sup": float(s["path_sup"][i]),
                                     "wn_terminal": float(s["wn_terminal"][i]),
                                     "source": "scheme"}) + "\n")


def _limit_csv(path, n, lim):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {CSV_SCHEMA}\n")
        wr = csv.writer(fh)
        wr.writerow(SAMPLE_COLUMNS)
        for i, (t, s) in enumerate(zip(lim["terminal"], lim["path_sup"])):
            wr.writerow([n, i, repr(float(t)), repr(float(s)), "nan", "limit"])


def _threshold(cfg, key, default=None):
    return cfg.thresholds.get(key, default)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

PLANNED = {
    "classify": ["classify.json", "classify.txt"],
    "functionals": ["functionals.csv", "asymptotics.txt"],
    "convergence": ["samples.csv", "samples.jsonl", "rate_fit.json", "tightness.json",
                    "tightness.txt", "selfcheck.json"],
    "limit-compare": ["samples.csv", "limit_samples.csv", "limit_report.json", "limit_report.txt",
                      "chf.csv"],
    "modified": ["samples.csv", "modified.json"],
}


def classify_text(report, plan):
    lines = [report.summary(), f"{case_label(plan.case)}, {plan.rate_text}"]
    if report.finite_measure:
        lines.append("(H1-0) regime: finite Lévy measure, the rate is infinite on paths with "
                     "at most one jump per grid cell")
    return "\n".join(lines)


def cmd_classify(run, cfg, args):
    report = check_hypotheses(cfg.measure)
    plan = classify_case(report, alpha=cfg.alpha, spec=cfg.measure)
    run.case, run.plan = plan.case.value, plan.to_dict()
    text = classify_text(report, plan)
    print(text)
    run.write_json("classify.json", {"report": report.to_dict(), "plan": plan.to_dict()},
                   {"case": plan.case.value})
    run.write_text("classify.txt", text)


def cmd_functionals(run, cfg, args):
    report = check_hypotheses(cfg.measure)
    alpha = cfg.alpha if cfg.alpha is not None else report.h2_alpha or report.h1_alpha
    betas = cfg.functionals.get("betas") or list(_decades())
    with open(run.path("functionals.csv"), "w", newline="") as fh:
        fh.write("# schema: levy_euler/functionals v1\n")
        wr = csv.writer(fh)
        wr.writerow(TAIL_COLUMNS)
        for b in betas:
            row = tail_functionals(cfg.measure, float(b), alpha=alpha).as_row()
            wr.writerow([repr(float(v)) for v in row])
    run.register("functionals.csv", {"betas": len(betas)})
    if report.h2_alpha is not None:
        diag = asymptotic_diagnostics(cfg.measure, report)
        run.write_text("asymptotics.txt", diag.as_text())
        print(diag.as_text())
    else:
        print(f"wrote {len(betas)} rows to {run.path('functionals.csv')}")


def _setup_for(run, cfg):
    setup = build_setup(cfg)
    run.case, run.plan = setup.plan.case.value, setup.plan.to_dict()
    return setup


def cmd_convergence(run, cfg, args):
    setup = _setup_for(run, cfg)
    conv = run_convergence(setup, strict=True)
    write_samples_csv(run.path("samples.csv"), conv)
    run.register("samples.csv", {"rows": len(setup.n_grid) * setup.paths})
    write_samples_jsonl(run.path("samples.jsonl"), conv)
    run.register("samples.jsonl")
    fit = conv.rate_fit
    if fit is not None:
        run.write_json("rate_fit.json", fit, {"slope": fit.slope, "flag": fit.flag})
        print(f"{case_label(setup.plan.case)}: slope {fit.slope} vs {fit.regressor}"
              + (f" ({fit.flag})" if fit.flag else ""))
        target = _threshold(cfg, "slope_target")
        if target is not None and fit.slope is not None:
            tol = _threshold(cfg, "slope_tol", 0.12)
            run.check("slope", fit.slope, [target - tol, target + tol],
                      abs(fit.slope - target) <= tol)
    if conv.tightness is not None:
        run.write_json("tightness.json", conv.tightness)
        run.write_text("tightness.txt", conv.tightness.as_text())
        print(conv.tightness.as_text())
        lim = _threshold(cfg, "tightness_max")
        if lim is not None:
            level = _threshold(cfg, "tightness_level", 0.9)
            r = conv.tightness.ratios[level]
            run.check("tightness", r, lim, r < lim)
    run.write_json("selfcheck.json", conv.selfcheck, {"passed": conv.selfcheck.get("passed")})


def cmd_limit_compare(run, cfg, args):
    setup = _setup_for(run, cfg)
    conv = run_convergence(setup, selfcheck=False)
    write_samples_csv(run.path("samples.csv"), conv)
    run.register("samples.csv")
    lc = run_limit_compare(setup, conv=conv)
    out = {"case": setup.plan.case.value, "ks": {n: r for n, r in lc.ks.items()},
           "monotone": lc.monotone, "self_test": lc.self_test, "pathwise": lc.pathwise}
    lines = [f"{case_label(setup.plan.case)}: u_n U^n_T vs U_T"]
    lines += [f"n={n:6d}  {report_text(r)}" for n, r in lc.ks.items()]
    lines.append(f"nonincreasing within one standard error: {lc.monotone}")
    if lc.self_test is not None:
        lines.append(f"self-test  {report_text(lc.self_test)}")
    final = lc.final_ks()
    lim = _threshold(cfg, "ks_max")
    if setup.plan.case is Case.CASE2A:
        pw = lc.pathwise
        degenerate = abs(setup.report.theta_prime_lim or 0.0) < 1e-12
        lines.append(f"median |u_n U^n_T - U_T|: {pw['median_abs_diff']}")
        lines.append(f"strict decrease first to last n: {pw['decreasing']}")
        if degenerate:
            med = float(np.median(np.abs(conv.samples[setup.n_max]["terminal"])))
            out["degenerate_limit"] = {"median_abs_scheme": med}
            lines.append(f"theta+ = theta-: limit is 0, median |u_n U^n_T| = {med:.4g}")
        if _threshold(cfg, "pathwise_decrease"):
            run.check("pathwise_decrease", pw["median_abs_diff"], "decreasing", pw["decreasing"])
    else:
        if lim is not None:
            run.check("ks_final", final, lim, final < lim)
            run.check("ks_monotone", lc.monotone, True, lc.monotone)
        st_lim = _threshold(cfg, "self_test_ks_max")
        if st_lim is not None and lc.self_test is not None:
            run.check("self_test", lc.self_test.statistic, st_lim, lc.self_test.statistic < st_lim)
    if setup.plan.case in (Case.CASE1, Case.CASE2B, Case.CASE3B):
        ch = cfg.chf
        n = int(ch.get("n") or setup.n_max)
        rep, extra = run_chf_product(setup, n=n, paths=int(ch.get("paths") or setup.paths),
                                     u_max=float(ch.get("u_max", 2.0)),
                                     step=float(ch.get("step", 0.5)))
        write_chf_csv(run.path("chf.csv"), rep)
        run.register("chf.csv", {"max_dev": rep.statistic, "v0_column_max": extra["v0_column_max"]})
        out["chf"] = {"n": n, "max_dev": rep.statistic, "v0_column_max": extra["v0_column_max"]}
        lines.append(f"joint chf at n={n}: max deviation {rep.statistic:.4f}, "
                     f"v=0 column {extra['v0_column_max']:.4f}")
        if _threshold(cfg, "chf_max") is not None:
            run.check("chf", rep.statistic, cfg.thresholds["chf_max"],
                      rep.statistic < cfg.thresholds["chf_max"])
        if _threshold(cfg, "chf_v0_max") is not None:
            v0 = extra["v0_column_max"]
            run.check("chf_v0", v0, cfg.thresholds["chf_v0_max"], v0 < cfg.thresholds["chf_v0_max"])
    _limit_csv(run.path("limit_samples.csv"), setup.n_max, lc.limit)
    run.register("limit_samples.csv")
    run.write_json("limit_report.json", out, {"final_ks": final})
    text = "\n".join(lines)
    run.write_text("limit_report.txt", text)
    print(text)


def cmd_modified(run, cfg, args):
    setup = _setup_for(run, cfg)
    if setup.plan.alpha != 1.0:
        raise ConfigError("the modified scheme applies to the alpha = 1 regime only")
    conv = run_convergence(setup, modified=True, selfcheck=False)
    write_samples_csv(run.path("samples.csv"), conv)
    run.register("samples.csv")
    level = float(_threshold(cfg, "modified_level", 0.9))
    summ = modified_summary(conv, level)
    summ["gamma"] = {n: gamma_n(setup.driver_spec, n) for n in setup.n_grid}
    summ["fine_gamma"] = setup.fine_gamma()
    summ["identical_schemes"] = all(r["identical"] for r in summ["per_n"].values())
    run.write_json("modified.json", summ, {"modified_ratio": summ["modified_ratio"],
                                           "identical": summ["identical_schemes"]})
    print(f"{'n':>6s} {'gamma_n':>14s} {'plain q':>12s} {'modified q':>12s}")
    for n, r in summ["per_n"].items():
        print(f"{n:6d} {summ['gamma'][n]:14.6g} {r['plain_q']:12.5g} {r['modified_q']:12.5g}")
    print(f"modified max/min {summ['modified_ratio']:.4g}; identical schemes: "
          f"{summ['identical_schemes']}")
    lim = _threshold(cfg, "modified_ratio_max")
    if lim is not None:
        run.check("modified_ratio", summ["modified_ratio"], lim, summ["modified_ratio"] < lim)


COMMANDS = {"classify": cmd_classify, "functionals": cmd_functionals,
            "convergence": cmd_convergence, "limit-compare": cmd_limit_compare,
            "modified": cmd_modified}


def execute(command, cfg, out_dir, dry_run=False, do_assert=False):
    run = Run(command, cfg, out_dir)
    if dry_run:
        if command != "classify":
            # the plan is cheap and useful in the skeleton
            setup = build_setup(cfg)
            run.case, run.plan = setup.plan.case.value, setup.plan.to_dict()
        return run.manifest(dry_run=True, planned=PLANNED[command])
    COMMANDS[command](run, cfg, None)
    manifest = run.manifest()
    failed = [k for k, v in run.checks.items() if not v["passed"]]
    for k, v in run.checks.items():
        print(f"check {k}: {'PASS' if v['passed'] else 'FAIL'} ({v['value']} vs {v['threshold']})")
    if do_assert and failed:
        raise ThresholdFailure(f"thresholds not met: {', '.join(failed)}")
    return manifest


def replay(manifest_path, out_dir=None):
    """Rerun a manifest's command and compare every CSV byte for byte."""
    try:
        with open(manifest_path) as fh:
            man = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from None
    cfg = parse_config(man["config"])
    if cfg.config_hash() != man["config_hash"]:
        raise ConfigError("manifest config does not match its recorded hash")
    out_dir = out_dir or tempfile.mkdtemp(prefix="replay_")
    execute(man["command"], cfg, out_dir)
    base = os.path.dirname(os.path.abspath(manifest_path))
    result = {}
    for name, entry in man["outputs"].items():
        if not name.endswith(".csv"):
            continue
        new = os.path.join(out_dir, name)
        same = os.path.exists(new) and _sha256(new) == entry["sha256"]
        old = os.path.join(base, entry["path"])
        if os.path.exists(old) and _sha256(old) != entry["sha256"]:
            result[name] = "original file modified since the run"
        else:
            result[name] = "identical" if same else "differs"
    return result, out_dir


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config outputs)")
    common.add_argument("--threads", type=int, help="worker threads across paths")
    common.add_argument("--dry-run", action="store_true", help="write the manifest skeleton only")
    common.add_argument("--assert", dest="do_assert", action="store_true",
                        help="exit 3 when a configured threshold fails")
    p = argparse.ArgumentParser(prog="levy-euler", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    rp = sub.add_parser("replay", parents=[common])
    rp.add_argument("manifest", help="manifest.json of an earlier run")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "replay":
            result, out_dir = replay(args.manifest, args.out)
            for name, status in result.items():
                print(f"{name}: {status}")
            print(f"replay outputs in {out_dir}")
            return EXIT_OK if all(s == "identical" for s in result.values()) else EXIT_NUMERICAL
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must lie in [0, 2^64)")
        cfg = cfg.with_overrides(seed=args.seed, threads=args.threads, outputs=args.out)
        execute(args.command, cfg, cfg.outputs, args.dry_run, args.do_assert)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SamplerError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ThresholdFailure as exc:
        print(f"threshold failure: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD


if __name__ == "__main__":
    sys.exit(main())
