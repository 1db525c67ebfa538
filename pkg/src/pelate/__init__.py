"""Weighted empirical-likelihood inference for the average treatment effect."""

__version__ = "0.1.0"

from .data import Dataset, GroupView, SeedSpec, derive_seed, load_csv, split_groups, write_csv
from .errors import PelateError
from .glm import LinearFit, LogisticFit, ModelFits, fit_all, fit_logistic, fit_outcome
from .weighting import (
    EstimateReport,
    NormalizedWeights,
    estimate_aipw,
    estimate_ipw,
    hajek_weights,
    sandwich_variance,
)
from .pel import (
    PelAsymptotics,
    PelConfig,
    PelSolution,
    asymptotics_mc,
    ci_pel,
    global_max,
    mcp_estimate,
    pel_loglik,
    profile_ratio_basic,
    profile_ratio_mc,
    scaling_c,
    solve_lagrange,
)
from .bootstrap import BootstrapPlan, BootstrapResult, bootstrap_pel_ci, bootstrap_variance, resample
from .simulation import DgpParams, MetricsRow, ScenarioConfig, calibrate_dgp, gen_sample, run_power, run_scenario

__all__ = [
    "__version__",
    "Dataset", "GroupView", "SeedSpec", "derive_seed", "load_csv", "split_groups", "write_csv",
    "PelateError",
    "LinearFit", "LogisticFit", "ModelFits", "fit_all", "fit_logistic", "fit_outcome",
    "EstimateReport", "NormalizedWeights", "estimate_aipw", "estimate_ipw",
    "hajek_weights", "sandwich_variance",
    "PelAsymptotics", "PelConfig", "PelSolution", "asymptotics_mc", "ci_pel",
    "global_max", "mcp_estimate", "pel_loglik", "profile_ratio_basic",
    "profile_ratio_mc", "scaling_c", "solve_lagrange",
    "BootstrapPlan", "BootstrapResult", "bootstrap_pel_ci", "bootstrap_variance", "resample",
    "DgpParams", "MetricsRow", "ScenarioConfig", "calibrate_dgp", "gen_sample",
    "run_power", "run_scenario",
]
