"""Two-sample weighted empirical likelihood for the average treatment effect.

The objective is the weighted log-likelihood

    L(p1, p0) = n * { w1 * sum_j a1_j log p1_j + w0 * sum_j a0_j log p0_j }

over per-arm probability vectors, with w1 = w0 = 1/2 and a_ij the
normalized inverse-propensity weights. Constrained maximizers always take
the form ``p_ij = a_ij / (1 + lambda' g_ij)`` where the multiplier solves

    sum_i w_i sum_j a_ij g_ij / (1 + lambda' g_ij) = 0 .

Constraint sets supported here:

* per-arm normalization only (closed form, p = a);
* normalization + the ATE contrast pinned at theta (2-dim multiplier);
* normalization + per-arm calibration of fitted outcome values (two
  independent 1-dim multipliers; the doubly robust point estimator);
* all of the above jointly (4-dim multiplier; the profile used for the
  model-calibrated ratio intervals).

Profile ratios, their chi-square scale factors, and bisection-search
confidence intervals live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.stats import chi2

from .data import Dataset, split_groups
from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    DomainError,
    InfeasibleError,
    SingularMatrixError,
)
from .glm import LogisticFit, ModelFits, design_matrix
from .weighting import (
    EstimateReport,
    NormalizedWeights,
    estimate_ipw,
    hajek_weights,
    sandwich_variance,
)

__all__ = [
    "PelConfig",
    "PelSolution",
    "GVectors",
    "PelAsymptotics",
    "pel_loglik",
    "global_max",
    "solve_lagrange",
    "mcp_estimate",
    "profile_ratio_basic",
    "profile_ratio_mc",
    "basic_ratio_fn",
    "mc_ratio_fn",
    "scaling_c",
    "asymptotics_mc",
    "ci_pel",
]

GAMMA = np.array([0.0, 0.0, 0.0, -1.0])

# calibration is treated as vacuous when the weighted spread of fitted
# values is negligible relative to the outcome scale
VACUITY_RTOL = 1e-12


@dataclass(frozen=True)
class PelConfig:
    """Solver settings for the constrained maximization."""

    w1: float = 0.5
    w0: float = 0.5
    lambda_tol: float = 1e-10
    max_iter: int = 100
    feasibility_margin: float = 1e-8

    def __post_init__(self):
        if self.w1 != 0.5 or self.w0 != 0.5:
            raise DomainError("group weights are fixed at 1/2 each")
        if self.lambda_tol <= 0 or self.feasibility_margin <= 0 or self.max_iter < 1:
            raise DomainError("solver tolerances must be positive")


@dataclass(frozen=True)
class PelSolution:
    """A constrained maximizer: probabilities, multipliers, attained value.

    ``constraint_set`` tags which constraints were active: "C1"
    (normalization only), "C1+C3" (calibrated), "C1+C2" (contrast pinned),
    or "C1+C2+C3".
    """

    p1: np.ndarray
    p0: np.ndarray
    lam: np.ndarray
    loglik: float
    constraint_set: str


@dataclass(frozen=True)
class GVectors:
    """Stacked constraint rows for the joint 4-dim profile at a given theta.

    Row layout: (group-balance, calibration-sum, calibration-difference,
    centered-contrast). The treated rows carry ``(1-w1, u1, u1, 2*(y1 -
    theta/2))`` and the control rows ``(-w1, u0, -u0, -2*(y0 + theta/2))``.
    """

    g1: np.ndarray
    g0: np.ndarray
    theta: float


@dataclass(frozen=True)
class PelAsymptotics:
    """Plug-in limiting quantities for the model-calibrated ratio.

    ``delta_hat`` scales -2r(theta0) to a chi-square(1) limit; it equals
    the unique non-zero eigenvalue of sigma * Omega^1/2 W^-1 Gamma Gamma'
    W^-1 Omega^1/2 and is computed here through the trace identity
    sigma * Gamma' W^-1 Omega W^-1 Gamma.
    """

    W_hat: np.ndarray
    Omega_hat: np.ndarray
    sigma_hat: float
    delta_hat: float
    Gamma: np.ndarray
    h_hat: np.ndarray
    A_hat: np.ndarray
    E_hat: np.ndarray
    J_hat: np.ndarray
    G_hat: np.ndarray
    C_hat: np.ndarray


def pel_loglik(p1, p0, weights: NormalizedWeights, cfg: PelConfig | None = None) -> float:
    """Evaluate the weighted log-likelihood at candidate probabilities."""
    cfg = cfg or PelConfig()
    p1 = np.asarray(p1, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if p1.shape != weights.a1.shape or p0.shape != weights.a0.shape:
        raise DomainError("probability vectors must match the weight vectors in length")
    if np.any(p1 <= 0.0) or np.any(p0 <= 0.0):
        raise DomainError("probabilities must be strictly positive")
    n = p1.size + p0.size
    return n * float(cfg.w1 * (weights.a1 @ np.log(p1)) + cfg.w0 * (weights.a0 @ np.log(p0)))


def global_max(weights: NormalizedWeights, cfg: PelConfig | None = None) -> PelSolution:
    """Maximizer under the normalization constraints alone: p equals a.

    The implied ATE estimate is the difference of the weighted outcome
    means, identical to the Hajek-type inverse-probability estimator.
    """
    cfg = cfg or PelConfig()
    return PelSolution(
        p1=weights.a1,
        p0=weights.a0,
        lam=np.zeros(0),
        loglik=pel_loglik(weights.a1, weights.a0, weights, cfg),
        constraint_set="C1",
    )


def _strictly_feasible(c: np.ndarray, G: np.ndarray) -> bool:
    """LP check: does a strictly positive p satisfy the stacked constraints?

    Maximizes the minimum mass subject to ``sum c-weighted rows = 1`` and
    ``G' v = 0`` over v >= 0 (v are the weighted probabilities); a positive
    optimum means the zero vector lies inside the convex hull of the rows.
    """
    nrows, m = G.shape
    # variables: (v_1..v_n, s); maximize s with v_i >= s
    c_obj = np.zeros(nrows + 1)
    c_obj[-1] = -1.0
    A_eq = np.zeros((m + 1, nrows + 1))
    A_eq[:m, :nrows] = G.T
    A_eq[m, :nrows] = 1.0
    b_eq = np.zeros(m + 1)
    b_eq[m] = 1.0
    A_ub = np.hstack([-np.eye(nrows), np.ones((nrows, 1))])
    b_ub = np.zeros(nrows)
    res = linprog(c_obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * nrows + [(0, None)], method="highs")
    return bool(res.status == 0 and res.x is not None and res.x[-1] > 1e-12)


def solve_lagrange(a_stack, g_stack, cfg: PelConfig | None = None, lam0=None) -> np.ndarray:
    """Solve the multiplier equation by damped Newton on the convex dual.

    Parameters
    ----------
    a_stack : array, shape (n,)
        Row coefficients ``w_i * a_ij`` stacked over both arms; they must
        sum to one.
    g_stack : array, shape (n, m)
        Matching constraint rows.
    lam0 : array, optional
        Warm start; reset to zero if it violates the feasibility margin.

    Returns
    -------
    lam : array, shape (m,)
        Multiplier with residual max-norm below ``cfg.lambda_tol`` and
        ``1 + g_ij' lam`` at least ``cfg.feasibility_margin`` on every row.

    Raises
    ------
    InfeasibleError
        If no strictly positive probabilities satisfy the constraints
        (the zero vector is outside the convex hull of the rows).
    ConvergenceError
        If the constraints are strictly feasible but the iteration cap is
        reached; carries the residual-norm trace.
    """
    cfg = cfg or PelConfig()
    c = np.asarray(a_stack, dtype=float)
    G = np.asarray(g_stack, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape[0] != c.shape[0]:
        raise DomainError("a_stack and g_stack must agree on the number of rows")
    m = G.shape[1]
    lam = np.zeros(m)
    denom = np.ones(c.shape[0])
    if lam0 is not None and np.asarray(lam0).shape == (m,):
        cand = np.asarray(lam0, dtype=float)
        dn = 1.0 + G @ cand
        if np.min(dn) >= cfg.feasibility_margin:
            lam, denom = cand.copy(), dn
    obj = -float(c @ np.log(denom))
    trace: list[float] = []
    converged = False
    for _ in range(cfg.max_iter):
        w = c / denom
        resid = G.T @ w
        rnorm = float(np.max(np.abs(resid)))
        trace.append(rnorm)
        if rnorm <= cfg.lambda_tol:
            # the residual also vanishes along rays to infinity when the
            # zero vector is outside the hull; a genuine root keeps the
            # implied normalization sum(c / denom) at one
            if abs(float(w.sum()) - 1.0) <= 1e-6:
                converged = True
            break
        hess = G.T @ (G * (w / denom)[:, None])
        step = np.linalg.lstsq(hess, resid, rcond=None)[0]
        descent = float(resid @ step)
        scale = 1.0
        moved = False
        for _ in range(60):
            cand = lam + scale * step
            dn = 1.0 + G @ cand
            if np.min(dn) >= cfg.feasibility_margin:
                cobj = -float(c @ np.log(dn))
                if cobj <= obj - 1e-4 * scale * descent + 1e-14 * (1.0 + abs(obj)):
                    lam, denom, obj = cand, dn, cobj
                    moved = True
                    break
            scale *= 0.5
        if not moved:
            break
    if not converged:
        if _strictly_feasible(c, G):
            raise ConvergenceError(
                f"multiplier solve stalled after {len(trace)} iterations "
                f"(last residual {trace[-1]:.3g})",
                trace=trace,
            )
        raise InfeasibleError(
            "constraints admit no strictly positive solution: the zero vector "
            "lies outside the convex hull of the constraint rows"
        )
    # one polishing step tightens the residual to near machine precision
    w = c / denom
    resid = G.T @ w
    if np.max(np.abs(resid)) > 1e-14:
        hess = G.T @ (G * (w / denom)[:, None])
        step = np.linalg.lstsq(hess, resid, rcond=None)[0]
        cand = lam + step
        dn = 1.0 + G @ cand
        if np.min(dn) >= cfg.feasibility_margin:
            if np.max(np.abs(G.T @ (c / dn))) < np.max(np.abs(resid)):
                lam = cand
    return lam


def _calibration_vacuous(a: np.ndarray, u: np.ndarray, y_arm: np.ndarray) -> bool:
    """True when the fitted values carry no usable spread on this arm."""
    var_y = float(np.var(y_arm)) if y_arm.size > 1 else 0.0
    return bool(np.max(np.abs(u)) == 0.0 or float(a @ u**2) < VACUITY_RTOL * var_y)


def _calibration_multiplier(a: np.ndarray, u: np.ndarray, y_arm: np.ndarray,
                            cfg: PelConfig) -> tuple[float, bool]:
    """Solve the one-dimensional calibration equation on a single arm.

    ``f(lam) = sum a u / (1 + lam u)`` is strictly decreasing between the
    poles at -1/max(u) and -1/min(u), so a safeguarded Newton iteration
    inside that bracket always converges. Returns (lambda, vacuous_flag).
    """
    u = np.asarray(u, dtype=float)
    umax = float(u.max())
    umin = float(u.min())
    if _calibration_vacuous(a, u, y_arm):
        return 0.0, True
    if umin >= 0.0 or umax <= 0.0:
        raise InfeasibleError(
            "calibration infeasible: the full-sample mean of fitted values "
            "lies outside the open hull of this arm's fitted values"
        )
    lo = -1.0 / umax
    hi = -1.0 / umin
    lam = 0.0
    for _ in range(cfg.max_iter):
        denom = 1.0 + lam * u
        f = float(a @ (u / denom))
        if abs(f) <= min(cfg.lambda_tol, 1e-13):
            return lam, False
        if f > 0.0:
            lo = lam
        else:
            hi = lam
        fprime = -float(a @ (u / denom) ** 2)
        cand = lam - f / fprime
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if cand == lam:
            return lam, False
        lam = cand
    raise ConvergenceError("calibration multiplier did not converge")


def mcp_estimate(d: Dataset, fits: ModelFits,
                 cfg: PelConfig | None = None) -> tuple[EstimateReport, PelSolution]:
    """Model-calibrated maximum weighted-likelihood estimate of the ATE.

    Each arm's probabilities are tilted so the probability-weighted mean
    of that arm's fitted outcome values matches the full-sample mean of
    the fitted values; the two tilts are independent one-dimensional
    solves. Constant fitted values make a constraint vacuous, in which
    case the arm falls back to its normalized weights.
    """
    cfg = cfg or PelConfig()
    treated, control = split_groups(d)
    w = hajek_weights(fits.ps.tau_hat, treated, control)
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    u1 = fits.or1.fitted_all[treated.indices] - fits.or1.mbar
    u0 = fits.or0.fitted_all[control.indices] - fits.or0.mbar
    lam1, vac1 = _calibration_multiplier(w.a1, u1, y1, cfg)
    lam0, vac0 = _calibration_multiplier(w.a0, u0, y0, cfg)
    p1 = w.a1 / (1.0 + lam1 * u1)
    p0 = w.a0 / (1.0 + lam0 * u0)
    mu1 = float(p1 @ y1)
    mu0 = float(p0 @ y0)
    sol = PelSolution(p1=p1, p0=p0, lam=np.array([lam1, lam0]),
                      loglik=pel_loglik(p1, p0, w, cfg), constraint_set="C1+C3")
    report = EstimateReport(method="MCP", mu1=mu1, mu0=mu0, theta=mu1 - mu0)
    for arm, vac in ((1, vac1), (0, vac0)):
        if vac:
            report.diagnostics.append(
                f"arm {arm}: calibration vacuous (constant fitted values)")
    return report, sol


def _basic_rows(y1, y0, theta, cfg):
    n1, n0 = y1.size, y0.size
    u1 = np.column_stack([np.full(n1, 1.0 - cfg.w1), y1 / cfg.w1 - theta])
    u0 = np.column_stack([np.full(n0, -cfg.w1), -y0 / cfg.w0 - theta])
    return u1, u0


def g_vectors(y1, y0, u1, u0, theta, cfg: PelConfig | None = None) -> GVectors:
    """Constraint rows combining balance, calibration and the contrast."""
    cfg = cfg or PelConfig()
    r1 = y1 - theta / 2.0
    r0 = y0 + theta / 2.0
    g1 = np.column_stack([np.full(y1.size, 1.0 - cfg.w1), u1, u1, r1 / cfg.w1])
    g0 = np.column_stack([np.full(y0.size, -cfg.w1), u0, -u0, -r0 / cfg.w0])
    return GVectors(g1=g1, g0=g0, theta=theta)


def _arm_contrast_range(y, u, vacuous):
    """Feasible range of sum(p * y) under normalization and calibration."""
    if vacuous:
        return float(y.min()), float(y.max())
    A_eq = np.vstack([np.ones(y.size), u])
    b_eq = np.array([1.0, 0.0])
    out = []
    for sign in (1.0, -1.0):
        res = linprog(sign * y, A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * y.size, method="highs")
        if res.status != 0:
            raise InfeasibleError("calibration constraints admit no distribution")
        out.append(sign * res.fun)
    return out[0], out[1]


def _searchable(lo_hull, hi_hull):
    margin = 1e-6 * (1.0 + abs(hi_hull - lo_hull))
    return lo_hull + margin, hi_hull - margin


def basic_ratio_fn(d: Dataset, fit: LogisticFit, cfg: PelConfig | None = None,
                   on_failure: str = "raise"):
    """Profile-ratio closure theta -> r(theta) under the contrast constraint.

    The returned callable carries ``feasible_range``: the searchable open
    interval of attainable contrasts. Outside it the closure returns -inf.
    With ``on_failure="-inf"`` a (rare) multiplier non-convergence inside
    the range is also mapped to -inf instead of raising, which keeps
    interval searches robust.
    """
    cfg = cfg or PelConfig()
    treated, control = split_groups(d)
    w = hajek_weights(fit.tau_hat, treated, control)
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    n = d.n
    c = np.concatenate([cfg.w1 * w.a1, cfg.w0 * w.a0])
    lo, hi = _searchable(y1.min() - y0.max(), y1.max() - y0.min())
    state = {"lam": None}

    def ratio(theta: float) -> float:
        if not (lo <= theta <= hi):
            return float("-inf")
        u1, u0 = _basic_rows(y1, y0, theta, cfg)
        G = np.vstack([u1, u0])
        try:
            lam = solve_lagrange(c, G, cfg, lam0=state["lam"])
        except InfeasibleError:
            return float("-inf")
        except ConvergenceError:
            if on_failure == "-inf":
                return float("-inf")
            raise
        state["lam"] = lam
        return -n * float(c @ np.log1p(G @ lam))

    ratio.feasible_range = (lo, hi)
    return ratio


def mc_ratio_fn(d: Dataset, fits: ModelFits, sol_at_mcp: PelSolution,
                cfg: PelConfig | None = None, on_failure: str = "raise",
                precompute_range: bool = True):
    """Profile-ratio closure under calibration plus the contrast constraint.

    ``sol_at_mcp`` supplies the reference maximum (the calibrated solution
    without the contrast constraint); the ratio is zero at its implied
    estimate and negative elsewhere. ``precompute_range=False`` skips the
    linear programs that bound the attainable contrast (worth it when the
    closure will be evaluated at a single point, e.g. inside bootstrap
    replicates); infeasible arguments are then detected by the solver.
    """
    cfg = cfg or PelConfig()
    treated, control = split_groups(d)
    w = hajek_weights(fits.ps.tau_hat, treated, control)
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    n = d.n
    c = np.concatenate([cfg.w1 * w.a1, cfg.w0 * w.a0])
    u1 = fits.or1.fitted_all[treated.indices] - fits.or1.mbar
    u0 = fits.or0.fitted_all[control.indices] - fits.or0.mbar
    if sol_at_mcp.constraint_set != "C1+C3" or sol_at_mcp.lam.shape != (2,):
        raise DomainError("reference solution must come from mcp_estimate")
    lam1, lam0 = sol_at_mcp.lam
    # vacuous arms were solved with a zero multiplier; drop their rows from
    # the constraint set too, otherwise the reference maximum would not match
    vac1 = _calibration_vacuous(w.a1, u1, y1)
    vac0 = _calibration_vacuous(w.a0, u0, y0)
    if vac1:
        u1 = np.zeros_like(u1)
    if vac0:
        u0 = np.zeros_like(u0)
    baseline = n * float(c @ np.log1p(np.concatenate([lam1 * u1, lam0 * u0])))
    if precompute_range:
        lo1, hi1 = _arm_contrast_range(y1, u1, vac1)
        lo0, hi0 = _arm_contrast_range(y0, u0, vac0)
        lo, hi = _searchable(lo1 - hi0, hi1 - lo0)
    else:
        lo, hi = float("-inf"), float("inf")
    state = {"lam": None}

    def ratio(theta: float) -> float:
        if not (lo <= theta <= hi):
            return float("-inf")
        gv = g_vectors(y1, y0, u1, u0, theta, cfg)
        G = np.vstack([gv.g1, gv.g0])
        try:
            lam = solve_lagrange(c, G, cfg, lam0=state["lam"])
        except InfeasibleError:
            return float("-inf")
        except ConvergenceError:
            if on_failure == "-inf":
                return float("-inf")
            raise
        state["lam"] = lam
        return -n * float(c @ np.log1p(G @ lam)) + baseline

    ratio.feasible_range = (lo, hi) if precompute_range else None
    return ratio


def profile_ratio_basic(d: Dataset, fit: LogisticFit, theta: float,
                        cfg: PelConfig | None = None) -> float:
    """Ratio of the contrast-constrained maximum to the global maximum.

    Always <= 0, with equality exactly at the weighted-mean contrast.
    Returns -inf when theta is outside the attainable contrast range.
    """
    return basic_ratio_fn(d, fit, cfg)(theta)


def profile_ratio_mc(d: Dataset, fits: ModelFits, theta: float,
                     sol_at_mcp: PelSolution, cfg: PelConfig | None = None) -> float:
    """Calibrated profile ratio relative to the calibrated maximum."""
    return mc_ratio_fn(d, fits, sol_at_mcp, cfg, precompute_range=False)(theta)


def scaling_c(d: Dataset, fit: LogisticFit) -> float:
    """Chi-square scale factor for the basic profile ratio.

    ``c = n * var(theta_hat) / (2 * [weighted second moments minus squared
    means])``; the bracket is the sum of the weighted outcome variances of
    the two arms, so constant outcomes make the scale degenerate.
    """
    treated, control = split_groups(d)
    w = hajek_weights(fit.tau_hat, treated, control)
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    report = estimate_ipw(d, fit, "IPW2")
    var_theta = sandwich_variance(d, report, fit, "IPW")
    bracket = float(w.a1 @ y1**2 + w.a0 @ y0**2 - report.mu1**2 - report.mu0**2)
    if bracket <= 0.0:
        raise DegenerateScaleError(
            "degenerate ratio scale: weighted outcome variance is zero")
    return d.n * var_theta / (2.0 * bracket)


def asymptotics_mc(d: Dataset, fits: ModelFits, at: EstimateReport) -> PelAsymptotics:
    """Plug-in scale quantities for the model-calibrated ratio at the MCP fit.

    Every population expectation in the limiting matrices is replaced by a
    full-sample mean, and the unknown propensities, regression surfaces
    and means by their fitted counterparts.
    """
    cfg = PelConfig()
    treated, control = split_groups(d)
    w = hajek_weights(fits.ps.tau_hat, treated, control)
    y1 = d.y[treated.indices]
    y0 = d.y[control.indices]
    u1_all = fits.or1.fitted_all - fits.or1.mbar
    u0_all = fits.or0.fitted_all - fits.or0.mbar
    gv = g_vectors(y1, y0, u1_all[treated.indices], u0_all[control.indices],
                   at.theta, cfg)
    W_hat = (gv.g1 * (cfg.w1 * w.a1)[:, None]).T @ gv.g1 \
        + (gv.g0 * (cfg.w0 * w.a0)[:, None]).T @ gv.g0

    X = design_matrix(d.x, fits.ps.columns)
    t = d.t.astype(float)
    y = d.y
    tau = fits.ps.tau_hat
    n = d.n
    A_hat = -((u1_all * (1.0 - tau)) @ X) / n
    E_hat = ((u0_all * tau) @ X) / n
    J_hat = -((t * (y - at.mu1) * (1.0 - tau) / tau) @ X) / n
    G_hat = (((1.0 - t) * (y - at.mu0) * tau / (1.0 - tau)) @ X) / n
    C_hat = -(X * (tau * (1.0 - tau))[:, None]).T @ X / n
    try:
        K = np.linalg.solve(C_hat, X.T).T * (t - tau)[:, None]
    except np.linalg.LinAlgError:
        raise SingularMatrixError("propensity information matrix C is singular",
                                  matrix_name="C") from None
    w1_dev = (t / tau - 1.0) * u1_all
    w0_dev = ((1.0 - t) / (1.0 - tau) - 1.0) * u0_all
    h2 = 0.5 * (w1_dev + w0_dev - K @ (A_hat + E_hat))
    h3 = 0.5 * (w1_dev - w0_dev - K @ (A_hat - E_hat))
    h4 = t * (y - at.mu1) / tau - (1.0 - t) * (y - at.mu0) / (1.0 - tau) \
        - K @ (J_hat - G_hat)
    h_hat = np.column_stack([np.zeros(n), h2, h3, h4])
    hc = h_hat - h_hat.mean(axis=0)
    Omega_hat = hc.T @ hc / n
    cond_w = np.linalg.cond(W_hat)
    if not np.isfinite(cond_w) or cond_w > 1e12:
        raise SingularMatrixError(
            f"constraint second-moment matrix W is singular (cond={cond_w:.3g})",
            matrix_name="W",
        )
    winv_gamma = np.linalg.solve(W_hat, GAMMA)
    sigma_hat = 1.0 / float(GAMMA @ winv_gamma)
    delta_hat = sigma_hat * float(winv_gamma @ Omega_hat @ winv_gamma)
    return PelAsymptotics(
        W_hat=W_hat, Omega_hat=Omega_hat, sigma_hat=sigma_hat, delta_hat=delta_hat,
        Gamma=GAMMA.copy(), h_hat=h_hat, A_hat=A_hat, E_hat=E_hat, J_hat=J_hat,
        G_hat=G_hat, C_hat=C_hat,
    )


def _search_side(ratio_fn, center, r_th, step, bound, warnings, side,
                 theta_tol=1e-11, max_expand=200):
    direction = 1.0 if step > 0 else -1.0
    inside = center
    outside = None
    probe = center + step
    for _ in range(max_expand):
        capped = False
        if bound is not None and (probe - bound) * direction >= 0.0:
            probe, capped = bound, True
        r = ratio_fn(probe)
        if math.isfinite(r) and r >= r_th:
            inside = probe
            if capped:
                warnings.append(f"{side} endpoint clamped at feasibility boundary")
                return probe
            probe = center + (probe - center) * 2.0
        else:
            outside = probe
            break
    if outside is None:
        warnings.append(f"{side} endpoint clamped at feasibility boundary")
        return inside
    for _ in range(200):
        if abs(outside - inside) <= theta_tol:
            break
        mid = 0.5 * (inside + outside)
        r = ratio_fn(mid)
        if math.isfinite(r) and r >= r_th:
            inside = mid
        else:
            outside = mid
    r_in = ratio_fn(inside)
    if not math.isfinite(r_in) or abs(r_in - r_th) > 1e-6 * (1.0 + abs(r_th)):
        warnings.append(f"{side} endpoint clamped at feasibility boundary")
    return inside


def _ratio_interval(ratio_fn, center, r_threshold, initial_step, bounds=None,
                    theta_tol=1e-11):
    """Endpoints of {theta : r(theta) >= threshold} around the maximizer."""
    warnings: list[str] = []
    if r_threshold >= 0.0:
        warnings.append("degenerate threshold: interval collapsed to the point estimate")
        return center, center, warnings
    lo_bound = hi_bound = None
    if bounds is not None:
        lo_bound, hi_bound = bounds
    lo = _search_side(ratio_fn, center, r_threshold, -abs(initial_step),
                      lo_bound, warnings, "lower", theta_tol)
    hi = _search_side(ratio_fn, center, r_threshold, abs(initial_step),
                      hi_bound, warnings, "upper", theta_tol)
    return lo, hi, warnings


def ci_pel(ratio_fn, scale: float, alpha: float, center: float,
           initial_step: float | None = None, bounds=None):
    """Ratio confidence interval {theta : -2 r(theta)/scale <= chi2_1(alpha)}.

    Expands a bracket outward from the maximizer until the scaled ratio
    crosses the chi-square quantile (or feasibility ends), then bisects.
    Returns ``(lo, hi, warnings)``; an endpoint stopped by the feasibility
    boundary is flagged in the warnings rather than raising.
    """
    if scale <= 0.0 or not math.isfinite(scale):
        raise DomainError("ratio scale must be positive and finite")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    r_center = ratio_fn(center)
    if not math.isfinite(r_center) or abs(r_center) > 1e-6:
        raise DomainError("ratio at the centering estimate must be zero")
    quantile = float(chi2.ppf(1.0 - alpha, 1))
    r_th = -0.5 * scale * quantile
    step = initial_step if initial_step is not None else 2.0 * math.sqrt(scale)
    if bounds is None:
        bounds = getattr(ratio_fn, "feasible_range", None)
    return _ratio_interval(ratio_fn, center, r_th, step, bounds)
