"""Monte Carlo harness: data-generating process, scenario runs, power curves.

The generating process draws three dependent covariates,

    x1 = v1,  x2 = v2 + 0.2 x1,  x3 = v3 + 0.3 (x1 + x2),

with v1 ~ N(0,1), v2 ~ Bernoulli(0.6), v3 ~ Exponential(1); assigns
treatment with probability expit(alpha0 + 0.2 x1 + 0.2 x2 - 0.5 x3); and
generates potential outcomes from two linear models sharing one noise
draw. ``alpha0`` is calibrated so the expected treated share hits a
target, and the noise scales so the correlation between each linear
predictor and its potential outcome hits a target; with the base
intercepts (4.5 and 1.0) the true ATE is 2.88.

Model misspecification is expressed by dropping x3 from the relevant
fits: scenario TF drops it from both outcome regressions, FT from the
propensity model, TT from neither.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .bootstrap import BootstrapPlan, bootstrap_pel_ci, bootstrap_variance
from .data import Dataset, derive_seed
from .errors import ConvergenceError, DomainError, ExcessFailureError, PelateError, UsageError
from .glm import ModelFits, fit_logistic, fit_outcome
from .pel import PelConfig, asymptotics_mc, basic_ratio_fn, ci_pel, mc_ratio_fn, mcp_estimate, scaling_c
from .weighting import estimate_aipw, estimate_ipw, sandwich_variance

__all__ = [
    "DgpParams",
    "ScenarioConfig",
    "MetricsRow",
    "BASE_THETA",
    "KNOWN_METHODS",
    "calibrate_dgp",
    "gen_sample",
    "outcome_means",
    "scenario_columns",
    "aggregate_point_metrics",
    "aggregate_interval_metrics",
    "run_scenario",
    "run_power",
    "metrics_to_csv",
    "power_to_csv",
]

BASE_THETA = 2.88
CALIBRATION_SEED = 715_517
CALIBRATION_DRAWS = 1_000_000
ALPHA0_ATOL = 5e-4
FAILURE_LIMIT = 0.05

KNOWN_METHODS = ("ipw1", "ipw2", "pel", "aipw1", "aipw2", "aipw2b", "mcp", "mcpb")
KNOWN_SCENARIOS = ("TT", "TF", "FT")


@dataclass(frozen=True)
class DgpParams:
    """Calibrated generating-process parameters for one (t, rho) cell.

    ``theta_shift`` switches to the hypothesis-testing variant of the
    outcome models: None keeps the base intercepts (4.5, 1.0) with true
    ATE 2.88, while a value v uses intercepts (v + 4.5, 3.88) so the true
    ATE equals v exactly, letting power studies sweep the effect size.
    """

    alpha0: float
    a1: float
    a0: float
    t: float
    rho: float
    theta_shift: float | None = None

    @property
    def true_theta(self) -> float:
        return BASE_THETA if self.theta_shift is None else float(self.theta_shift)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell: size, targets, misspecification and methods."""

    n: int
    n_sim: int
    t: float
    rho: float
    scenario: str
    methods: tuple = ("ipw2", "pel", "aipw2", "mcp")
    alpha: float = 0.05
    B: int = 1000
    master_seed: int = 20_260_809
    theta_grid: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in KNOWN_SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}; expected TT, TF or FT")
        bad = [m for m in self.methods if m not in KNOWN_METHODS]
        if bad:
            raise UsageError(f"unknown method name {bad[0]!r}")
        if not (0.0 < self.t < 1.0 and 0.0 < self.rho < 1.0):
            raise UsageError("t and rho must lie in (0, 1)")
        if self.n < 4 or self.n_sim < 1 or self.B < 1 or self.threads < 1:
            raise UsageError("n, n_sim, B and threads must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("alpha must lie in (0, 1)")
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.theta_grid is not None:
            object.__setattr__(self, "theta_grid", tuple(float(v) for v in self.theta_grid))

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        for key in doc:
            if key not in names:
                raise UsageError(f"unknown config field {key!r}")
        missing = [k for k in ("n", "n_sim", "t", "rho", "scenario") if k not in doc]
        if missing:
            raise UsageError(f"missing config field {missing[0]!r}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "n_sim": self.n_sim, "t": self.t, "rho": self.rho,
            "scenario": self.scenario, "methods": list(self.methods),
            "alpha": self.alpha, "B": self.B, "master_seed": self.master_seed,
            "theta_grid": None if self.theta_grid is None else list(self.theta_grid),
            "threads": self.threads,
        }


@dataclass(frozen=True)
class MetricsRow:
    """Aggregated metrics for one (cell, method) pair."""

    scenario: str
    n: int
    t: float
    rho: float
    method: str
    rb_pct: float | None = None
    mse_x100: float | None = None
    cp_pct: float | None = None
    al_x100: float | None = None
    rejection_rate: float | None = None
    failures: int = 0
    theta0: float | None = None


_CAL_CACHE: dict = {}


def _draw_covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    v1 = rng.standard_normal(n)
    v2 = (rng.random(n) < 0.6).astype(float)
    v3 = rng.exponential(1.0, n)
    x1 = v1
    x2 = v2 + 0.2 * x1
    x3 = v3 + 0.3 * (x1 + x2)
    return np.column_stack([x1, x2, x3])


def _propensity_lp(x: np.ndarray) -> np.ndarray:
    return 0.2 * x[:, 0] + 0.2 * x[:, 1] - 0.5 * x[:, 2]


def _outcome_lps(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lp1 = x[:, 0] - 2.0 * x[:, 1] + 3.0 * x[:, 2]
    lp0 = x[:, 0] + x[:, 1] + 2.0 * x[:, 2]
    return lp1, lp0


def _intercepts(params: DgpParams) -> tuple[float, float]:
    if params.theta_shift is None:
        return 4.5, 1.0
    return float(params.theta_shift) + 4.5, BASE_THETA + 1.0


def outcome_means(x: np.ndarray, params: DgpParams) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free potential-outcome means at given covariate rows."""
    i1, i0 = _intercepts(params)
    lp1, lp0 = _outcome_lps(np.atleast_2d(x))
    return i1 + lp1, i0 + lp0


def calibrate_dgp(t: float, rho: float, seed: int = CALIBRATION_SEED,
                  n_draws: int = CALIBRATION_DRAWS) -> DgpParams:
    """Calibrate the intercept and noise scales for one (t, rho) target.

    ``alpha0`` is found by bisection so the Monte Carlo mean of the
    assignment probabilities hits the treated share ``t`` within 5e-4;
    the noise scales are ``sd(lp_i) * sqrt(1 - rho^2) / rho``, which makes
    the correlation between each linear predictor and its potential
    outcome equal ``rho``. One covariate draw (fixed seed) is shared by
    all cells, so equal targets always yield identical parameters.
    """
    if not (0.0 < t < 1.0 and 0.0 < rho < 1.0):
        raise DomainError("t and rho must lie in (0, 1)")
    key = (round(t, 12), round(rho, 12), seed, n_draws)
    if key in _CAL_CACHE:
        return _CAL_CACHE[key]
    rng = np.random.default_rng(seed)
    x = _draw_covariates(rng, n_draws)
    lp_tau = _propensity_lp(x)
    lo, hi = -20.0, 20.0

    def excess(a0: float) -> float:
        return float(np.mean(expit(a0 + lp_tau))) - t

    if not (excess(lo) < 0.0 < excess(hi)):
        raise ConvergenceError("alpha0 root not bracketed in [-20, 20]")
    alpha0 = 0.0
    for _ in range(200):
        alpha0 = 0.5 * (lo + hi)
        val = excess(alpha0)
        if abs(val) < ALPHA0_ATOL:
            break
        if val < 0.0:
            lo = alpha0
        else:
            hi = alpha0
    else:
        raise ConvergenceError("alpha0 bisection did not reach tolerance")
    lp1, lp0 = _outcome_lps(x)
    factor = math.sqrt(1.0 - rho**2) / rho
    params = DgpParams(
        alpha0=alpha0,
        a1=float(np.std(lp1)) * factor,
        a0=float(np.std(lp0)) * factor,
        t=t,
        rho=rho,
    )
    _CAL_CACHE[key] = params
    return params


def gen_sample(n: int, params: DgpParams, seed: int, return_potential: bool = False):
    """Generate one sample; optionally also return both potential outcomes."""
    rng = np.random.default_rng(seed)
    x = _draw_covariates(rng, n)
    tau0 = expit(params.alpha0 + _propensity_lp(x))
    t = (rng.random(n) < tau0).astype(np.int64)
    eps = rng.standard_normal(n)
    m1, m0 = outcome_means(x, params)
    y1 = m1 + params.a1 * eps
    y0 = m0 + params.a0 * eps
    y = np.where(t == 1, y1, y0)
    d = Dataset(x=x, t=t, y=y)
    if return_potential:
        return d, y1, y0
    return d


def scenario_columns(scenario: str):
    """(propensity columns, outcome columns): None keeps all covariates."""
    if scenario == "TF":
        return None, (0, 1)
    if scenario == "FT":
        return (0, 1), None
    return None, None


def aggregate_point_metrics(thetas, theta0: float) -> tuple[float, float]:
    """Percentage relative bias and MSE*100 of point estimates."""
    th = np.asarray(thetas, dtype=float)
    if th.size == 0:
        raise DomainError("no successful replicates to aggregate")
    rb_pct = float(np.mean((th - theta0) / theta0) * 100.0)
    mse_x100 = float(np.mean((th - theta0) ** 2) * 100.0)
    return rb_pct, mse_x100


def aggregate_interval_metrics(intervals, theta0: float) -> tuple[float, float]:
    """Coverage percentage and average length*100 of intervals."""
    arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if arr.size == 0:
        raise DomainError("no successful replicates to aggregate")
    cover = (arr[:, 0] <= theta0) & (theta0 <= arr[:, 1])
    cp_pct = float(np.mean(cover) * 100.0)
    al_x100 = float(np.mean(arr[:, 1] - arr[:, 0]) * 100.0)
    return cp_pct, al_x100


def _wald(theta: float, variance: float, alpha: float) -> tuple[float, float]:
    half = float(norm.ppf(1.0 - alpha / 2.0)) * math.sqrt(max(variance, 0.0))
    return theta - half, theta + half


def _replicate(cfg: ScenarioConfig, params: DgpParams, rep: int) -> dict:
    """All requested method results for one replicate.

    Returns ``{method: ("ok", theta, lo, hi) | ("fail", message)}`` where
    lo/hi are NaN for point-only methods. Failures never propagate; each
    method fails independently so one fragile interval cannot poison the
    others.
    """
    rep_master = derive_seed(cfg.master_seed, rep)
    data_seed = derive_seed(rep_master, 0)
    out: dict = {}
    try:
        d = gen_sample(cfg.n, params, data_seed)
        ps_cols, or_cols = scenario_columns(cfg.scenario)
        ps = fit_logistic(d, ps_cols)
    except PelateError as exc:
        return {m: ("fail", str(exc)) for m in cfg.methods}
    pel_cfg = PelConfig()
    needs_or = any(m in cfg.methods for m in ("aipw1", "aipw2", "aipw2b", "mcp", "mcpb"))
    fits = None
    if needs_or:
        try:
            fits = ModelFits(ps=ps, or1=fit_outcome(d, 1, or_cols),
                             or0=fit_outcome(d, 0, or_cols))
        except PelateError as exc:
            for m in ("aipw1", "aipw2", "aipw2b", "mcp", "mcpb"):
                if m in cfg.methods:
                    out[m] = ("fail", str(exc))
            fits = None
    mcp_cache = None

    def mcp_parts():
        nonlocal mcp_cache
        if mcp_cache is None:
            mcp_cache = mcp_estimate(d, fits, pel_cfg)
        return mcp_cache

    for m in cfg.methods:
        if m in out:
            continue
        try:
            if m in ("ipw1", "ipw2"):
                rep_ = estimate_ipw(d, ps, m.upper())
                var = sandwich_variance(d, rep_, ps, "IPW")
                lo, hi = _wald(rep_.theta, var, cfg.alpha)
            elif m == "pel":
                rep_ = estimate_ipw(d, ps, "IPW2")
                c_hat = scaling_c(d, ps)
                ratio = basic_ratio_fn(d, ps, pel_cfg, on_failure="-inf")
                lo, hi, _ = ci_pel(ratio, c_hat, cfg.alpha, rep_.theta)
            elif m in ("aipw1", "aipw2"):
                rep_ = estimate_aipw(d, fits.ps, fits.or1, fits.or0, m.upper())
                var = sandwich_variance(d, rep_, fits, "AIPW")
                lo, hi = _wald(rep_.theta, var, cfg.alpha)
            elif m == "aipw2b":
                rep_ = estimate_aipw(d, fits.ps, fits.or1, fits.or0, "AIPW2")
                plan = BootstrapPlan(B=cfg.B, master_seed=derive_seed(rep_master, 1),
                                     target="variance_DR", alpha=cfg.alpha)

                def refit_theta(db, _pc=ps_cols, _oc=or_cols):
                    return estimate_aipw(db, fit_logistic(db, _pc),
                                         fit_outcome(db, 1, _oc),
                                         fit_outcome(db, 0, _oc), "AIPW2").theta

                res = bootstrap_variance(d, refit_theta, plan)
                lo, hi = _wald(rep_.theta, res.variance, cfg.alpha)
            elif m == "mcp":
                rep_, sol = mcp_parts()
                asym = asymptotics_mc(d, fits, rep_)
                ratio = mc_ratio_fn(d, fits, sol, pel_cfg, on_failure="-inf")
                lo, hi, _ = ci_pel(ratio, asym.delta_hat, cfg.alpha, rep_.theta)
            elif m == "mcpb":
                rep_, sol = mcp_parts()
                plan = BootstrapPlan(B=cfg.B, master_seed=derive_seed(rep_master, 2),
                                     target="pel_ratio_calibration", alpha=cfg.alpha)
                lo, hi, _, _ = bootstrap_pel_ci(d, fits, rep_.theta, plan,
                                                sol_at_mcp=sol, cfg=pel_cfg)
            else:  # pragma: no cover - guarded by config validation
                raise UsageError(f"unknown method {m!r}")
            out[m] = ("ok", rep_.theta, lo, hi)
        except PelateError as exc:
            out[m] = ("fail", str(exc))
    return out


def _map_replicates(cfg: ScenarioConfig, params: DgpParams):
    if cfg.threads <= 1:
        return [_replicate(cfg, params, s) for s in range(cfg.n_sim)]
    with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(_replicate, cfg, params, s) for s in range(cfg.n_sim)]
        return [f.result() for f in futures]


def _collect(cfg: ScenarioConfig, params: DgpParams, results, theta0: float,
             power: bool) -> list[MetricsRow]:
    rows = []
    for m in cfg.methods:
        thetas, intervals = [], []
        failures = 0
        for res in results:
            rec = res[m]
            if rec[0] != "ok":
                failures += 1
                continue
            thetas.append(rec[1])
            intervals.append((rec[2], rec[3]))
        if failures > FAILURE_LIMIT * cfg.n_sim:
            raise ExcessFailureError(
                f"method {m!r}: {failures}/{cfg.n_sim} replicates failed")
        if power:
            arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
            reject = float(np.mean(~((arr[:, 0] <= 0.0) & (0.0 <= arr[:, 1]))))
            rows.append(MetricsRow(scenario=cfg.scenario, n=cfg.n, t=cfg.t,
                                   rho=cfg.rho, method=m, rejection_rate=reject,
                                   failures=failures, theta0=theta0))
        else:
            rb, mse = aggregate_point_metrics(thetas, theta0)
            cp, al = aggregate_interval_metrics(intervals, theta0)
            rows.append(MetricsRow(scenario=cfg.scenario, n=cfg.n, t=cfg.t,
                                   rho=cfg.rho, method=m, rb_pct=rb, mse_x100=mse,
                                   cp_pct=cp, al_x100=al, failures=failures))
    return rows


def run_scenario(cfg: ScenarioConfig) -> list[MetricsRow]:
    """Run one simulation cell and aggregate point and interval metrics.

    Replicate s draws its data seed from (master_seed, s), so results are
    deterministic, permutation-invariant over replicates, and independent
    of the worker count.
    """
    params = calibrate_dgp(cfg.t, cfg.rho)
    results = _map_replicates(cfg, params)
    return _collect(cfg, params, results, params.true_theta, power=False)


def run_power(cfg: ScenarioConfig) -> list[MetricsRow]:
    """Rejection rate of the no-effect null along a grid of true ATEs."""
    if not cfg.theta_grid:
        raise UsageError("power runs need a theta_grid in the configuration")
    base = calibrate_dgp(cfg.t, cfg.rho)
    rows = []
    for theta0 in cfg.theta_grid:
        params = replace(base, theta_shift=float(theta0))
        results = _map_replicates(cfg, params)
        rows.extend(_collect(cfg, params, results, float(theta0), power=True))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.10g}"


def metrics_to_csv(rows) -> str:
    """Render scenario metrics with the fixed header and 10 significant digits."""
    lines = ["scenario,n,t,rho,method,rb_pct,mse_x100,cp_pct,al_x100,rejection_rate,failures"]
    for r in rows:
        lines.append(",".join([
            r.scenario, str(r.n), _fmt(r.t), _fmt(r.rho), r.method,
            _fmt(r.rb_pct), _fmt(r.mse_x100), _fmt(r.cp_pct), _fmt(r.al_x100),
            _fmt(r.rejection_rate), str(r.failures),
        ]))
    return "\n".join(lines) + "\n"


def power_to_csv(rows) -> str:
    """Render power-curve rows as (theta0, method, rejection_rate)."""
    lines = ["theta0,method,rejection_rate"]
    for r in rows:
        lines.append(f"{_fmt(r.theta0)},{r.method},{_fmt(r.rejection_rate)}")
    return "\n".join(lines) + "\n"
