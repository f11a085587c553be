"""Command-line interface.

Subcommands::

    bound           lower confidence bound for the number of false nulls
    calibrate       choose a critical vector for a family and gamma* target
    simulate        Monte Carlo scenario, tidy CSV summary
    estimate-theta  effect size from t-statistics
    dist-r          exact distribution of the step-up rejection count

Exit status is 0 on success, 1 when a computation fails and 2 for invalid
input.  JSON output uses sorted keys so identical runs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bound import compute_bound, gamma_star
from .calibration import (
    CalibrationSpec,
    LambdaSearch,
    TargetUnattainable,
    select_critical_vector,
)
from .effect_size import FallbackPolicy, ThresholdRule, estimate_with_policy, split_subjects
from .errors import ParameterError, TdpError
from .pvalue_model import AltPValueCdf
from .simulation import CSV_FIELDS, MethodSpec, ScenarioConfig, parse_config, run_scenario, ttest_maps
from .stepup import RejectionEngine, make_critical_vector

EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2


class InputError(TdpError):
    """Malformed input file or option."""


# ---------------------------------------------------------------- input files


def read_pvalue_csv(path: str) -> dict:
    """Read a comma-separated file with header ``id,p`` and an optional ``t`` column."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        cols = [h.strip().lower() for h in header]
        if "p" not in cols:
            raise InputError(f"{path}:1: header must contain a 'p' column, got {header}")
        ip = cols.index("p")
        iid = cols.index("id") if "id" in cols else None
        it = cols.index("t") if "t" in cols else None
        ids, ps, ts = [], [], []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise InputError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(row)}")
            try:
                p = float(row[ip])
            except ValueError:
                raise InputError(f"{path}:{lineno}: p is not a number: {row[ip]!r}") from None
            if not 0.0 <= p <= 1.0:
                raise InputError(f"{path}:{lineno}: p = {row[ip]} is outside [0, 1]")
            ps.append(p)
            ids.append(row[iid] if iid is not None else str(lineno - 1))
            if it is not None:
                try:
                    ts.append(float(row[it]))
                except ValueError:
                    raise InputError(f"{path}:{lineno}: t is not a number: {row[it]!r}") from None
    if not ps:
        raise InputError(f"{path}: no p-values")
    return {"id": ids, "p": np.array(ps), "t": np.array(ts) if it is not None else None}


def read_data_csv(path: str) -> np.ndarray:
    """Subject-level data: header row of hypothesis names, one row per subject."""
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: need a header and at least one subject row")
    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            out.append([float(x) for x in row])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric entry") from None
    return np.array(out)


def read_config(path: str) -> dict:
    """``key = value`` lines; keys use the long option names (``-`` or ``_``)."""
    out = {}
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# ------------------------------------------------------------------- helpers


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _split(text: str) -> tuple:
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"--split expects Ne,Nb, got {text!r}") from None
    return a, b


def _calibrate(family, m, alpha, f_alt, target, beta_grid=None, tolerance=1e-5):
    spec = CalibrationSpec(family, m, alpha, f_alt, target, beta_grid=beta_grid,
                           lambda_search=LambdaSearch(tolerance=tolerance))
    return select_critical_vector(spec)


def _theta_from_args(args, tvalues, pvalues, n_subjects):
    """Fixed ``--theta`` or an estimate by ``--threshold``; returns (theta, info)."""
    if args.theta is not None:
        return float(args.theta), {"source": "given"}
    if args.threshold is None:
        raise InputError("give --theta or --threshold")
    if tvalues is None:
        raise InputError("estimating theta needs t-values (a 't' column or subject data)")
    rule = ThresholdRule.parse(args.threshold)
    policy = FallbackPolicy(escalation=(ThresholdRule("fixed", 0.05),)) if args.fallback else None
    est, theta = estimate_with_policy(tvalues, pvalues, n_subjects, rule, policy)
    info = est.to_dict()
    info["source"] = "estimated"
    return theta, info


# --------------------------------------------------------------- subcommands


def cmd_bound(args) -> int:
    if args.data:
        data = read_data_csv(args.data)
        if args.split is None:
            raise InputError("--data needs --split Ne,Nb")
        ne, nb = _split(args.split)
        est_idx, bound_idx = split_subjects(data.shape[0], (ne, nb), args.seed)
        t_est, p_est = ttest_maps(data[est_idx])
        _, p = ttest_maps(data[bound_idx])
        n_bound = nb
        theta, theta_info = _theta_from_args(args, t_est, p_est, ne)
        ids = [str(i + 1) for i in range(data.shape[1])]
    else:
        if not args.pvalues:
            raise InputError("give --pvalues FILE or --data FILE")
        table = read_pvalue_csv(args.pvalues)
        p, ids = table["p"], table["id"]
        if args.n is None:
            raise InputError("--n (subjects per test) is required with --pvalues")
        n_bound = args.n
        theta, theta_info = _theta_from_args(args, table["t"], p, n_bound)
    m = p.size
    params = {"alpha": args.alpha, "family": args.family, "gamma_target": args.gamma_target,
              "theta": theta, "n": n_bound, "m": m, "seed": args.seed}
    if theta == 0.0:
        # no effect assumed: every hypothesis is treated as null
        report = {"r": None, "gamma_star": 0.0, "m1_hat": 0, "tdp_hat": 0.0, "m0_hat": m, "m": m,
                  "note": "theta is zero; the bound is zero"}
    else:
        f_alt = AltPValueCdf.from_effect_size(theta, n_bound)
        cal = _calibrate(args.family, m, args.alpha, f_alt, args.gamma_target)
        res = compute_bound(p, cal.cv, f_alt, args.alpha)
        report = res.to_dict()
        report["rejected_ids"] = [ids[i] for i in res.rejected]
        params["critical_vector"] = cal.cv.describe()
    report["parameters"] = params
    report["theta_estimation"] = theta_info
    _emit(_json(report), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.theta is None:
        raise InputError("--theta is required")
    if args.n is None:
        raise InputError("--n is required")
    f_alt = AltPValueCdf.from_effect_size(args.theta, args.n)
    grid = tuple(float(b) for b in args.beta_grid.split(",")) if args.beta_grid else None
    cal = _calibrate(args.family, args.m, args.alpha, f_alt, args.gamma_target, grid, args.tolerance)
    report = cal.to_dict()
    report["thresholds"] = list(cal.cv.values)
    report["parameters"] = {"alpha": args.alpha, "family": args.family, "gamma_target": args.gamma_target,
                            "theta": args.theta, "n": args.n, "m": args.m}
    _emit(_json(report), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = ScenarioConfig()
    if args.scenario:
        try:
            with open(args.scenario, encoding="utf-8") as handle:
                config = parse_config(handle.read(), config)
        except OSError as exc:
            raise InputError(f"{args.scenario}: {exc.strerror}") from exc
    overrides = {}
    for key in ("m1", "theta", "rho", "theta_assumed", "B", "N", "m"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if "theta" in overrides and "theta_assumed" not in overrides:
        overrides["theta_assumed"] = overrides["theta"]
    if args.methods:
        overrides["methods"] = tuple(MethodSpec.parse(x) for x in args.methods.split(","))
    overrides["alpha"] = args.alpha
    overrides["seed"] = args.seed
    overrides["gs"] = not args.no_gs
    fields_ = {**config.__dict__, **overrides}
    summary = run_scenario(ScenarioConfig(**fields_), n_jobs=args.jobs)
    _emit(summary.to_csv(), args.out)
    return EXIT_OK


def cmd_estimate_theta(args) -> int:
    if args.threshold is None:
        raise InputError("--threshold is required")
    if args.data:
        data = read_data_csv(args.data)
        if args.split:
            ne, _ = _split(args.split)
            idx = split_subjects(data.shape[0], (ne,), args.seed)[0]
            data = data[idx]
        t, p = ttest_maps(data)
        n = data.shape[0]
    else:
        if not args.pvalues:
            raise InputError("give --pvalues FILE (with a t column) or --data FILE")
        table = read_pvalue_csv(args.pvalues)
        t, p = table["t"], table["p"]
        if args.n is None:
            raise InputError("--n is required with --pvalues")
        n = args.n
        if t is None:
            # without t-values only an empty selection can be handled
            rule = ThresholdRule.parse(args.threshold)
            if rule.kind != "quantile" and not np.any(p <= rule.p_threshold(p.size)):
                t = np.zeros_like(p)
            else:
                raise InputError("the p-value file needs a 't' column")
    args.theta = None
    theta, info = _theta_from_args(args, t, p, n)
    info["theta_used"] = theta
    info["seed"] = args.seed
    _emit(_json(info), args.out)
    return EXIT_OK


def cmd_dist_r(args) -> int:
    if args.thresholds:
        try:
            vals = [float(x) for x in args.thresholds.split(",")]
        except ValueError:
            raise InputError("--thresholds must be comma-separated numbers") from None
        cv = make_critical_vector("custom", {"values": vals}, len(vals))
    else:
        if args.m is None or args.lam is None:
            raise InputError("give --thresholds or --m with --lambda")
        params = {"lambda": args.lam}
        if args.beta is not None:
            params["beta"] = args.beta
        cv = make_critical_vector(args.family, params, args.m)
    m = cv.m
    if args.m1 is None or not 0 <= args.m1 <= m:
        raise InputError("--m1 must lie in [0, m]")
    if args.theta is None or args.theta == 0.0:
        f_alt = AltPValueCdf.uniform()
    else:
        if args.n is None:
            raise InputError("--n is required with a non-zero --theta")
        f_alt = AltPValueCdf.from_effect_size(args.theta, args.n)
    pmf = RejectionEngine(cv, f_alt).pmf(args.m1)
    report = {
        "m": m,
        "m1": args.m1,
        "pmf": list(pmf.probs),
        "total": pmf.total(),
        "critical_vector": cv.describe(),
        "thresholds": list(cv.values),
        "f_alt": f_alt.describe(),
    }
    if args.format == "csv":
        lines = ["l,prob"] + [f"{ell},{p!r}" for ell, p in enumerate(pmf.probs)]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(_json(report), args.out)
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; explicit options take precedence")
    common.add_argument("--alpha", type=_probability, default=0.2, help="significance level (default 0.2)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", help="output file (default: standard output)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--family", choices=("bh", "by", "aorc", "exp"), default="bh",
                       help="critical-vector family (default bh)")
    model.add_argument("--gamma-target", type=float, default=1.0, help="gamma* target (default 1)")
    model.add_argument("--theta", type=float, help="assumed effect size")
    model.add_argument("--n", type=int, help="subjects per one-sample t-test")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--threshold", help="theta estimation rule: quantile:w, fixed:c, bonferroni:a or sidak:a")
    est.add_argument("--split", help="Ne,Nb: subjects for estimation and for the bound")
    est.add_argument("--fallback", action="store_true",
                     help="escalate to fixed:0.05 if nothing is selected and use 0.5 if |theta| < 0.4")

    parser = argparse.ArgumentParser(prog="tdpbound", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", parents=[common, model, est], help="confidence bound for a set of p-values")
    p.add_argument("--pvalues", help="CSV with header id,p and optional t")
    p.add_argument("--data", help="CSV of subject-level data (rows subjects, columns hypotheses)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", parents=[common, model], help="calibrate a critical vector")
    p.add_argument("--m", type=int, required=False, default=100, help="number of hypotheses (default 100)")
    p.add_argument("--beta-grid", help="comma-separated beta values for aorc/exp")
    p.add_argument("--tolerance", type=float, default=1e-5, help="lambda resolution (default 1e-5)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo scenario summary as CSV")
    p.add_argument("--scenario", help="key = value scenario file (ScenarioConfig fields)")
    p.add_argument("--m1", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--theta-assumed", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--B", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--methods", help="comma-separated, e.g. bh-opt,exp-0.95")
    p.add_argument("--no-gs", action="store_true", help="skip the closed-testing baseline")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-theta", parents=[common, est], help="estimate the effect size")
    p.add_argument("--pvalues", help="CSV with header id,p,t")
    p.add_argument("--data", help="CSV of subject-level data")
    p.add_argument("--n", type=int, help="subjects per t-test (with --pvalues)")
    p.set_defaults(func=cmd_estimate_theta)

    p = sub.add_parser("dist-r", parents=[common, model], help="exact pmf of the rejection count")
    p.add_argument("--m", type=int)
    p.add_argument("--m1", type=int, default=0, help="number of false nulls (default 0)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--thresholds", help="explicit comma-separated critical values")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_dist_r)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None:
            raise InputError(f"{args.config}: unknown key {key!r} for {args.command}")
        if action.const is True and action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InputError(f"{args.config}: bad value for {key}: {exc}") from None
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise InputError(f"{args.config}: {key} must be one of {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except TargetUnattainable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except TdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"error: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
