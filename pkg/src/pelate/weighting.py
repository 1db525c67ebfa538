"""Inverse-probability-weighted and augmented IPW estimation of the ATE.

Point estimators come in plain (divide by n) and normalized (Hajek)
variants. Variances are estimated by stacking every fitted quantity's
estimating equation into one M-estimation system and taking the sandwich
``H^-1 meat H^-T``; the parameter vector ordering is fixed as

* IPW family:   (mu1, theta, alpha)
* AIPW family:  (mu1, theta, mbar1, mbar0, alpha, beta1, beta0)

so the ATE variance is always element (2, 2) of the sandwich, counting
from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, GroupView, split_groups
from .errors import DomainError, SingularMatrixError, UsageError
from .glm import LinearFit, LogisticFit, ModelFits, design_matrix

__all__ = [
    "NormalizedWeights",
    "EstimateReport",
    "SandwichSystem",
    "hajek_weights",
    "normalized_from_inverse",
    "estimate_ipw",
    "estimate_aipw",
    "build_sandwich",
    "sandwich_variance",
]

COND_LIMIT = 1e12

IPW_METHODS = ("IPW1", "IPW2", "PEL")
AIPW_METHODS = ("AIPW1", "AIPW2")


@dataclass(frozen=True)
class NormalizedWeights:
    """Per-arm inverse-propensity weights normalized to sum to one."""

    a1: np.ndarray
    a0: np.ndarray

    def __post_init__(self):
        for arr in (self.a1, self.a0):
            arr.setflags(write=False)


@dataclass
class EstimateReport:
    """Point estimate of (mu1, mu0, theta) with optional variance and CI."""

    method: str
    mu1: float
    mu0: float
    theta: float
    variance: float | None = None
    ci: tuple[float, float, float] | None = None  # (lo, hi, level)
    diagnostics: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class SandwichSystem:
    """Stacked estimating-equation system evaluated at the solution.

    ``u_eval`` maps a full parameter vector to the (n, psi_dim) matrix of
    per-unit estimating functions; it recomputes fitted propensities and
    regression values from the parameter vector, so finite differences of
    its column means reproduce ``H``.
    """

    psi_dim: int
    psi_hat: np.ndarray
    u_eval: object
    H: np.ndarray
    meat: np.ndarray

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.H))


def normalized_from_inverse(inv1: np.ndarray, inv0: np.ndarray) -> NormalizedWeights:
    """Normalize arbitrary positive inverse-propensity values within each arm."""
    inv1 = np.asarray(inv1, dtype=float)
    inv0 = np.asarray(inv0, dtype=float)
    if np.any(inv1 <= 0) or np.any(inv0 <= 0) or not (
        np.all(np.isfinite(inv1)) and np.all(np.isfinite(inv0))
    ):
        raise DomainError("inverse-propensity values must be finite and positive")
    return NormalizedWeights(a1=inv1 / inv1.sum(), a0=inv0 / inv0.sum())


def hajek_weights(tau_hat, treated: GroupView, control: GroupView) -> NormalizedWeights:
    """Normalized weights 1/tau on the treated arm, 1/(1-tau) on control.

    Raises
    ------
    DomainError
        If any fitted propensity equals 0 or 1 exactly.
    """
    tau = np.asarray(tau_hat, dtype=float)
    t1 = tau[treated.indices]
    t0 = tau[control.indices]
    if np.any(t1 <= 0.0) or np.any(t1 >= 1.0) or np.any(t0 <= 0.0) or np.any(t0 >= 1.0):
        raise DomainError("fitted propensity of 0 or 1 leaves weights undefined")
    return normalized_from_inverse(1.0 / t1, 1.0 / (1.0 - t0))


def estimate_ipw(d: Dataset, fit: LogisticFit, kind: str = "IPW2") -> EstimateReport:
    """Inverse-probability-weighted ATE estimate.

    ``IPW1`` divides the weighted outcome sums by n; ``IPW2`` is the Hajek
    variant with weights normalized to one within each arm.
    """
    if kind not in ("IPW1", "IPW2"):
        raise UsageError(f"unknown IPW kind {kind!r}")
    treated, control = split_groups(d)
    tau = fit.tau_hat
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    if kind == "IPW1":
        t1 = tau[treated.indices]
        t0 = tau[control.indices]
        if np.any(t1 <= 0.0) or np.any(t0 >= 1.0):
            raise DomainError("fitted propensity of 0 or 1 leaves weights undefined")
        mu1 = float(np.sum(y1 / t1) / d.n)
        mu0 = float(np.sum(y0 / (1.0 - t0)) / d.n)
    else:
        w = hajek_weights(tau, treated, control)
        mu1 = float(w.a1 @ y1)
        mu0 = float(w.a0 @ y0)
    return EstimateReport(method=kind, mu1=mu1, mu0=mu0, theta=mu1 - mu0)


def estimate_aipw(d: Dataset, ps: LogisticFit, or1: LinearFit, or0: LinearFit,
                  kind: str = "AIPW2") -> EstimateReport:
    """Augmented IPW estimate: inverse-weighted residuals plus the mean fit.

    Consistent when either the propensity model or the pair of outcome
    regressions is correctly specified.
    """
    if kind not in ("AIPW1", "AIPW2"):
        raise UsageError(f"unknown AIPW kind {kind!r}")
    treated, control = split_groups(d)
    tau = ps.tau_hat
    r1 = d.y[treated.indices] - or1.fitted_all[treated.indices]
    r0 = d.y[control.indices] - or0.fitted_all[control.indices]
    if kind == "AIPW1":
        t1 = tau[treated.indices]
        t0 = tau[control.indices]
        if np.any(t1 <= 0.0) or np.any(t0 >= 1.0):
            raise DomainError("fitted propensity of 0 or 1 leaves weights undefined")
        mu1 = float(np.sum(r1 / t1) / d.n + or1.mbar)
        mu0 = float(np.sum(r0 / (1.0 - t0)) / d.n + or0.mbar)
    else:
        w = hajek_weights(tau, treated, control)
        mu1 = float(w.a1 @ r1 + or1.mbar)
        mu0 = float(w.a0 @ r0 + or0.mbar)
    return EstimateReport(method=kind, mu1=mu1, mu0=mu0, theta=mu1 - mu0)


def _ipw_system(d: Dataset, fit: LogisticFit, report: EstimateReport) -> SandwichSystem:
    X = design_matrix(d.x, fit.columns)
    t = d.t.astype(float)
    y = d.y
    n, q = X.shape
    kind = report.method
    plain = kind == "IPW1"

    def u_eval(psi):
        mu1, theta = psi[0], psi[1]
        tau = expit(X @ psi[2:])
        if plain:
            u1 = t * y / tau - mu1
            u2 = (1.0 - t) * y / (1.0 - tau) - (mu1 - theta)
        else:
            u1 = t * (y - mu1) / tau
            u2 = (1.0 - t) * (y - (mu1 - theta)) / (1.0 - tau)
        return np.column_stack([u1, u2, X * (t - tau)[:, None]])

    psi_hat = np.concatenate([[report.mu1, report.theta], fit.alpha])
    tau = fit.tau_hat
    mu0 = report.mu1 - report.theta
    H = np.zeros((2 + q, 2 + q))
    if plain:
        H[0, 0] = -1.0
        H[1, 0] = -1.0
        H[1, 1] = 1.0
        H[0, 2:] = -(t * y * (1.0 - tau) / tau) @ X / n
        H[1, 2:] = ((1.0 - t) * y * tau / (1.0 - tau)) @ X / n
    else:
        H[0, 0] = -np.mean(t / tau)
        H[1, 0] = -np.mean((1.0 - t) / (1.0 - tau))
        H[1, 1] = np.mean((1.0 - t) / (1.0 - tau))
        H[0, 2:] = -(t * (y - report.mu1) * (1.0 - tau) / tau) @ X / n
        H[1, 2:] = ((1.0 - t) * (y - mu0) * tau / (1.0 - tau)) @ X / n
    H[2:, 2:] = -(X * (tau * (1.0 - tau))[:, None]).T @ X / n
    U = u_eval(psi_hat)
    meat = U.T @ U / n**2
    return SandwichSystem(psi_dim=2 + q, psi_hat=psi_hat, u_eval=u_eval, H=H, meat=meat)


def _aipw_system(d: Dataset, fits: ModelFits, report: EstimateReport) -> SandwichSystem:
    X = design_matrix(d.x, fits.ps.columns)
    Z1 = design_matrix(d.x, fits.or1.columns)
    Z0 = design_matrix(d.x, fits.or0.columns)
    t = d.t.astype(float)
    y = d.y
    n = d.n
    q, q1, q0 = X.shape[1], Z1.shape[1], Z0.shape[1]
    p = 4 + q + q1 + q0
    kind = report.method
    plain = kind == "AIPW1"
    sl_a = slice(4, 4 + q)
    sl_b1 = slice(4 + q, 4 + q + q1)
    sl_b0 = slice(4 + q + q1, p)

    def u_eval(psi):
        mu1, theta, mb1, mb0 = psi[0], psi[1], psi[2], psi[3]
        tau = expit(X @ psi[sl_a])
        m1 = Z1 @ psi[sl_b1]
        m0 = Z0 @ psi[sl_b0]
        if plain:
            u1 = t * (y - m1) / tau + mb1 - mu1
            u2 = (1.0 - t) * (y - m0) / (1.0 - tau) + mb0 - (mu1 - theta)
        else:
            u1 = t * (y - m1 + mb1 - mu1) / tau
            u2 = (1.0 - t) * (y - m0 + mb0 - (mu1 - theta)) / (1.0 - tau)
        return np.column_stack([
            u1, u2, m1 - mb1, m0 - mb0,
            X * (t - tau)[:, None],
            Z1 * (t * (y - m1))[:, None],
            Z0 * ((1.0 - t) * (y - m0))[:, None],
        ])

    psi_hat = np.concatenate([
        [report.mu1, report.theta, fits.or1.mbar, fits.or0.mbar],
        fits.ps.alpha, fits.or1.beta, fits.or0.beta,
    ])
    tau = fits.ps.tau_hat
    m1 = fits.or1.fitted_all
    m0 = fits.or0.fitted_all
    mu0 = report.mu1 - report.theta
    H = np.zeros((p, p))
    if plain:
        H[0, 0] = -1.0
        H[0, 2] = 1.0
        H[0, sl_a] = -(t * (y - m1) * (1.0 - tau) / tau) @ X / n
        H[1, 0] = -1.0
        H[1, 1] = 1.0
        H[1, 3] = 1.0
        H[1, sl_a] = ((1.0 - t) * (y - m0) * tau / (1.0 - tau)) @ X / n
    else:
        H[0, 0] = -np.mean(t / tau)
        H[0, 2] = np.mean(t / tau)
        H[0, sl_a] = -(t * (y - m1 + fits.or1.mbar - report.mu1) * (1.0 - tau) / tau) @ X / n
        H[1, 0] = -np.mean((1.0 - t) / (1.0 - tau))
        H[1, 1] = np.mean((1.0 - t) / (1.0 - tau))
        H[1, 3] = np.mean((1.0 - t) / (1.0 - tau))
        H[1, sl_a] = ((1.0 - t) * (y - m0 + fits.or0.mbar - mu0) * tau / (1.0 - tau)) @ X / n
    H[0, sl_b1] = -(t / tau) @ Z1 / n
    H[1, sl_b0] = -((1.0 - t) / (1.0 - tau)) @ Z0 / n
    H[2, 2] = -1.0
    H[2, sl_b1] = Z1.mean(axis=0)
    H[3, 3] = -1.0
    H[3, sl_b0] = Z0.mean(axis=0)
    H[sl_a, sl_a] = -(X * (tau * (1.0 - tau))[:, None]).T @ X / n
    H[sl_b1, sl_b1] = -(Z1 * t[:, None]).T @ Z1 / n
    H[sl_b0, sl_b0] = -(Z0 * (1.0 - t)[:, None]).T @ Z0 / n
    U = u_eval(psi_hat)
    meat = U.T @ U / n**2
    return SandwichSystem(psi_dim=p, psi_hat=psi_hat, u_eval=u_eval, H=H, meat=meat)


def build_sandwich(d: Dataset, report: EstimateReport, fits, family: str) -> SandwichSystem:
    """Assemble the estimating-equation system matching an estimate."""
    if family == "IPW":
        if report.method not in IPW_METHODS:
            raise UsageError(f"method {report.method!r} does not belong to the IPW family")
        ps = fits.ps if isinstance(fits, ModelFits) else fits
        rep = report
        if report.method == "PEL":
            # the maximum of the unconstrained weighted likelihood is the
            # Hajek estimator, so the IPW2 system applies verbatim
            rep = EstimateReport(method="IPW2", mu1=report.mu1, mu0=report.mu0,
                                 theta=report.theta)
        return _ipw_system(d, ps, rep)
    if family == "AIPW":
        if report.method not in AIPW_METHODS:
            raise UsageError(f"method {report.method!r} does not belong to the AIPW family")
        if not isinstance(fits, ModelFits):
            raise UsageError("AIPW sandwich needs the full ModelFits bundle")
        return _aipw_system(d, fits, report)
    raise UsageError(f"unknown sandwich family {family!r}")


def sandwich_variance(d: Dataset, report: EstimateReport, fits, family: str) -> float:
    """Sandwich variance of the ATE estimate (element (2,2) of the sandwich).

    Raises
    ------
    SingularMatrixError
        If the Jacobian H is numerically singular (condition number above
        1e12).
    """
    system = build_sandwich(d, report, fits, family)
    cond = system.condition_number
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"sandwich Jacobian H is numerically singular (cond={cond:.3g})",
            matrix_name="H",
        )
    Hinv = np.linalg.inv(system.H)
    V = Hinv @ system.meat @ Hinv.T
    report.diagnostics.append(f"sandwich H condition number {cond:.6g}")
    return float(V[1, 1])
