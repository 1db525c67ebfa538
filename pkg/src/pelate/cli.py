"""Command-line front end: estimation on CSV data, simulation, power curves.

Exit codes: 0 success, 1 numerical failure (an estimation error with the
underlying message), 2 usage error (bad flags, bad config, unreadable
input).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict

from . import __version__
from .bootstrap import BootstrapPlan, bootstrap_pel_ci, bootstrap_variance
from .data import load_csv, positivity_violations
from .errors import PelateError, UsageError
from .glm import ModelFits, fit_all, fit_logistic, fit_outcome
from .pel import (
    PelConfig,
    asymptotics_mc,
    basic_ratio_fn,
    ci_pel,
    global_max,
    mc_ratio_fn,
    mcp_estimate,
    scaling_c,
)
from .simulation import (
    KNOWN_METHODS,
    ScenarioConfig,
    calibrate_dgp,
    metrics_to_csv,
    power_to_csv,
    run_power,
    run_scenario,
)
from .weighting import EstimateReport, estimate_aipw, estimate_ipw, hajek_weights, sandwich_variance
from .data import split_groups

METHODS = ("ipw1", "ipw2", "aipw1", "aipw2", "pel", "mcp")
CI_KINDS = ("none", "wald", "pelr", "mcp-chi2", "mcp-boot", "boot-wald")

# which interval constructions make sense for which point estimator
ALLOWED_CI = {
    "ipw1": ("none", "wald"),
    "ipw2": ("none", "wald", "pelr"),
    "pel": ("none", "pelr"),
    "aipw1": ("none", "wald", "boot-wald"),
    "aipw2": ("none", "wald", "boot-wald"),
    "mcp": ("none", "mcp-chi2", "mcp-boot"),
}


def _parse_cols(text):
    if text is None:
        return None
    try:
        cols = tuple(int(v) - 1 for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise UsageError(f"covariate list {text!r} must be comma-separated integers") from None
    if any(c < 0 for c in cols) or not cols:
        raise UsageError("covariate numbers are 1-based")
    return cols


def _estimate(args) -> dict:
    if not os.path.exists(args.data):
        raise UsageError(f"cannot open {args.data!r}")
    if args.ci not in ALLOWED_CI[args.method]:
        raise UsageError(f"ci kind {args.ci!r} is not available for method {args.method!r}")
    d = load_csv(args.data)
    ps_cols = _parse_cols(args.ps_cols)
    or_cols = _parse_cols(args.or_cols)
    cfg = PelConfig()
    ps = fit_logistic(d, ps_cols)
    needs_or = args.method in ("aipw1", "aipw2", "mcp") or args.ci == "boot-wald"
    fits = None
    if needs_or:
        fits = ModelFits(ps=ps, or1=fit_outcome(d, 1, or_cols), or0=fit_outcome(d, 0, or_cols))

    if args.method in ("ipw1", "ipw2"):
        report = estimate_ipw(d, ps, args.method.upper())
    elif args.method in ("aipw1", "aipw2"):
        report = estimate_aipw(d, fits.ps, fits.or1, fits.or0, args.method.upper())
    elif args.method == "pel":
        treated, control = split_groups(d)
        sol = global_max(hajek_weights(ps.tau_hat, treated, control), cfg)
        mu1 = float(sol.p1 @ d.y[treated.indices])
        mu0 = float(sol.p0 @ d.y[control.indices])
        report = EstimateReport(method="PEL", mu1=mu1, mu0=mu0, theta=mu1 - mu0)
    else:
        report, mcp_sol = mcp_estimate(d, fits, cfg)

    k = positivity_violations(ps.tau_hat)
    if k > 0:
        report.diagnostics.append(
            f"{k} unit(s) with fitted propensity outside [0.01, 0.99]")

    if args.ci == "wald":
        family = "AIPW" if args.method.startswith("aipw") else "IPW"
        var = sandwich_variance(d, report, fits if family == "AIPW" else ps, family)
        report.variance = var
        from scipy.stats import norm
        half = float(norm.ppf(1.0 - args.alpha / 2.0)) * math.sqrt(max(var, 0.0))
        report.ci = (report.theta - half, report.theta + half, 1.0 - args.alpha)
    elif args.ci == "boot-wald":
        plan = BootstrapPlan(B=args.bootstrap_b, master_seed=args.seed,
                             target="variance_DR", alpha=args.alpha)
        kind = args.method.upper()

        def refit(db):
            return estimate_aipw(db, fit_logistic(db, ps_cols),
                                 fit_outcome(db, 1, or_cols),
                                 fit_outcome(db, 0, or_cols), kind).theta

        res = bootstrap_variance(d, refit, plan)
        report.variance = res.variance
        from scipy.stats import norm
        half = float(norm.ppf(1.0 - args.alpha / 2.0)) * math.sqrt(max(res.variance, 0.0))
        report.ci = (report.theta - half, report.theta + half, 1.0 - args.alpha)
        if res.failures:
            report.diagnostics.append(f"{res.failures} bootstrap replicate(s) failed")
    elif args.ci == "pelr":
        c_hat = scaling_c(d, ps)
        ratio = basic_ratio_fn(d, ps, cfg, on_failure="-inf")
        lo, hi, warn = ci_pel(ratio, c_hat, args.alpha, report.theta)
        report.ci = (lo, hi, 1.0 - args.alpha)
        report.diagnostics.extend(warn)
    elif args.ci == "mcp-chi2":
        asym = asymptotics_mc(d, fits, report)
        ratio = mc_ratio_fn(d, fits, mcp_sol, cfg, on_failure="-inf")
        lo, hi, warn = ci_pel(ratio, asym.delta_hat, args.alpha, report.theta)
        report.variance = asym.sigma_hat * asym.delta_hat / d.n
        report.ci = (lo, hi, 1.0 - args.alpha)
        report.diagnostics.extend(warn)
    elif args.ci == "mcp-boot":
        plan = BootstrapPlan(B=args.bootstrap_b, master_seed=args.seed,
                             target="pel_ratio_calibration", alpha=args.alpha)
        lo, hi, warn, res = bootstrap_pel_ci(d, fits, report.theta, plan,
                                             sol_at_mcp=mcp_sol, cfg=cfg)
        report.ci = (lo, hi, 1.0 - args.alpha)
        report.diagnostics.extend(warn)
        if res.failures:
            report.diagnostics.append(f"{res.failures} bootstrap replicate(s) failed")

    doc = {
        "config": {
            "data": args.data, "method": args.method, "ci": args.ci,
            "alpha": args.alpha, "bootstrap_b": args.bootstrap_b, "seed": args.seed,
            "ps_cols": args.ps_cols, "or_cols": args.or_cols,
            "n": d.n, "d": d.d, "version": __version__,
        },
        "estimate": {
            "method": report.method,
            "mu1": report.mu1, "mu0": report.mu0, "theta": report.theta,
            "variance": report.variance,
            "ci": None if report.ci is None else
                {"lo": report.ci[0], "hi": report.ci[1], "level": report.ci[2]},
            "diagnostics": report.diagnostics,
        },
    }
    if args.dump_fits:
        fits_doc = {"ps": ps.to_jsonable()}
        if fits is not None:
            fits_doc["or1"] = fits.or1.to_jsonable()
            fits_doc["or0"] = fits.or0.to_jsonable()
        with open(args.dump_fits, "w", encoding="utf-8") as fh:
            json.dump(fits_doc, fh, indent=2, sort_keys=True)
    return doc


def _g10(v) -> str:
    return "" if v is None else f"{v:.10g}"


def _print_estimate(doc: dict, json_path) -> None:
    est = doc["estimate"]
    print(f"method    {est['method']}")
    for key in ("mu1", "mu0", "theta", "variance"):
        if est[key] is not None:
            print(f"{key:<9} {_g10(est[key])}")
    if est["ci"] is not None:
        ci = est["ci"]
        print(f"ci        [{_g10(ci['lo'])}, {_g10(ci['hi'])}]  level {_g10(ci['level'])}")
    for note in est["diagnostics"]:
        print(f"note      {note}")
    text = json.dumps(doc, indent=2, sort_keys=True)
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_config(path) -> ScenarioConfig:
    if not os.path.exists(path):
        raise UsageError(f"cannot open {path!r}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON in {path!r}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    if "methods" in doc and isinstance(doc["methods"], list):
        doc["methods"] = tuple(doc["methods"])
    if "theta_grid" in doc and isinstance(doc["theta_grid"], list):
        doc["theta_grid"] = tuple(doc["theta_grid"])
    return ScenarioConfig.from_dict(doc)


def _write_outputs(out_path, csv_text, meta) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _simulate(args) -> None:
    cfg = _load_config(args.config)
    if args.threads is not None:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "threads": args.threads})
    rows = run_scenario(cfg)
    params = calibrate_dgp(cfg.t, cfg.rho)
    meta = {
        "config": cfg.to_dict(),
        "dgp": asdict(params),
        "true_theta": params.true_theta,
        "failures": {r.method: r.failures for r in rows},
        "version": __version__,
    }
    _write_outputs(args.out, metrics_to_csv(rows), meta)
    print(f"wrote {args.out} ({len(rows)} method rows)")


def _power(args) -> None:
    cfg = _load_config(args.config)
    if args.threads is not None:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "threads": args.threads})
    if cfg.theta_grid is None:
        raise UsageError("power config needs a theta_grid field")
    rows = run_power(cfg)
    params = calibrate_dgp(cfg.t, cfg.rho)
    meta = {
        "config": cfg.to_dict(),
        "dgp": asdict(params),
        "failures": {f"{r.method}@{r.theta0}": r.failures for r in rows},
        "version": __version__,
    }
    _write_outputs(args.out, power_to_csv(rows), meta)
    print(f"wrote {args.out} ({len(rows)} rows)")


FULL_METHODS = ("ipw2", "pel", "aipw2", "aipw2b", "mcp", "mcpb")
DESK_METHODS = ("ipw2", "pel", "aipw2", "mcp")


def _presets(args) -> None:
    os.makedirs(args.out_dir, exist_ok=True)
    count = 0
    if args.desk:
        cells = [(0.5, 0.5, 400, s) for s in ("TT", "TF", "FT")]
        n_sim, b = 200, 200
        methods = DESK_METHODS
    else:
        cells = [(t, rho, n, s)
                 for t in (0.3, 0.5, 0.7)
                 for rho in (0.3, 0.5, 0.7)
                 for n in (100, 200, 400)
                 for s in ("TT", "TF", "FT")]
        n_sim, b = 1000, 1000
        methods = FULL_METHODS
    for t, rho, n, scen in cells:
        cfg = ScenarioConfig(n=n, n_sim=n_sim, t=t, rho=rho, scenario=scen,
                             methods=methods, B=b)
        name = f"t{int(t * 10):02d}_rho{int(rho * 10):02d}_n{n}_{scen}.json"
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        count += 1
    print(f"wrote {count} preset config(s) to {args.out_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pelate",
        description="Weighted empirical-likelihood inference for the average treatment effect",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_est = sub.add_parser("estimate", help="estimate the ATE from a CSV file")
    p_est.add_argument("--data", required=True, help="CSV with header t,y,x1,...,xd")
    p_est.add_argument("--method", required=True, choices=METHODS)
    p_est.add_argument("--ci", default="none", choices=CI_KINDS)
    p_est.add_argument("--alpha", type=float, default=0.05)
    p_est.add_argument("--bootstrap-b", type=int, default=1000)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--ps-cols", default=None,
                       help="1-based covariates for the propensity model, e.g. 1,2")
    p_est.add_argument("--or-cols", default=None,
                       help="1-based covariates for the outcome regressions")
    p_est.add_argument("--dump-fits", default=None, help="write fitted models to this JSON file")
    p_est.add_argument("--json", default=None, help="write the JSON report here instead of stdout")

    p_sim = sub.add_parser("simulate", help="run one simulation cell from a JSON config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--threads", type=int, default=None)

    p_pow = sub.add_parser("power", help="rejection-rate curve over a theta grid")
    p_pow.add_argument("--config", required=True)
    p_pow.add_argument("--out", required=True)
    p_pow.add_argument("--threads", type=int, default=None)

    p_pre = sub.add_parser("presets", help="write the scenario preset configs")
    p_pre.add_argument("--out-dir", required=True)
    p_pre.add_argument("--desk", action="store_true",
                       help="small desk-scale subset instead of the full 81 cells")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "estimate":
            doc = _estimate(args)
            _print_estimate(doc, args.json)
        elif args.verb == "simulate":
            _simulate(args)
        elif args.verb == "power":
            _power(args)
        elif args.verb == "presets":
            _presets(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PelateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
