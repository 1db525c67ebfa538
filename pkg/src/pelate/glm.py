"""Working models: logistic propensity regression and linear outcome fits.

Both fits operate on a design matrix ``[1 | x[:, columns]]``; passing a
covariate subset is how model misspecification (dropping a covariate) is
expressed throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import ConvergenceError, SingularDesignError

__all__ = ["LogisticFit", "LinearFit", "ModelFits", "design_matrix", "fit_logistic", "fit_outcome", "fit_all"]

SCORE_TOL = 1e-10
MAX_ITER = 100
COEF_CAP = 30.0
RANK_RTOL = 1e-12


def design_matrix(x: np.ndarray, columns=None) -> np.ndarray:
    """Intercept-augmented design ``[1 | x[:, columns]]`` (all columns if None)."""
    if columns is not None:
        x = x[:, list(columns)]
    return np.column_stack([np.ones(x.shape[0]), x])


def _check_rank(X: np.ndarray, context: str) -> None:
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0] * max(X.shape):
        raise SingularDesignError(f"rank-deficient design matrix in {context}")


@dataclass(frozen=True)
class LogisticFit:
    """Maximum-likelihood logistic propensity fit.

    ``alpha`` holds the coefficients (intercept first); ``tau_hat`` the
    fitted treatment probabilities for every unit; ``columns`` records
    which covariates entered the model (None = all).
    """

    alpha: np.ndarray
    tau_hat: np.ndarray
    converged: bool
    iterations: int
    columns: tuple | None = None

    def to_jsonable(self) -> dict:
        return {
            "model": "logistic",
            "alpha": [float(a) for a in self.alpha],
            "tau_hat": [float(v) for v in self.tau_hat],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "columns": None if self.columns is None else list(self.columns),
        }


@dataclass(frozen=True)
class LinearFit:
    """Ordinary least squares fit of one potential-outcome regression.

    The model is fit on the ``arm`` sub-sample only, but ``fitted_all``
    evaluates the fitted line on every unit in the sample because the
    calibration constraints need full-sample fitted values. ``mbar`` is
    their full-sample mean.
    """

    beta: np.ndarray
    fitted_all: np.ndarray
    arm: int
    mbar: float
    columns: tuple | None = None

    def to_jsonable(self) -> dict:
        return {
            "model": "linear",
            "arm": int(self.arm),
            "beta": [float(b) for b in self.beta],
            "fitted_all": [float(v) for v in self.fitted_all],
            "mbar": float(self.mbar),
            "columns": None if self.columns is None else list(self.columns),
        }


@dataclass(frozen=True)
class ModelFits:
    """Bundle of the propensity fit and the two outcome fits."""

    ps: LogisticFit
    or1: LinearFit
    or0: LinearFit


def _bernoulli_loglik(t: np.ndarray, lp: np.ndarray) -> float:
    # log L = sum t*lp - log(1 + exp(lp)), computed stably
    return float(np.sum(t * lp - np.logaddexp(0.0, lp)))


def fit_logistic(d: Dataset, columns=None) -> LogisticFit:
    """Fit the logistic treatment model by Newton-Raphson with step halving.

    Parameters
    ----------
    d : Dataset
    columns : sequence of int, optional
        Covariate subset (0-based); omitting a covariate misspecifies the
        model on purpose.

    Raises
    ------
    SingularDesignError
        If the design matrix is rank deficient.
    ConvergenceError
        On separation (coefficient cap exceeded) or iteration-cap overrun.
    """
    X = design_matrix(d.x, columns)
    _check_rank(X, "logistic fit")
    t = d.t.astype(float)
    q = X.shape[1]
    alpha = np.zeros(q)
    lp = X @ alpha
    ll = _bernoulli_loglik(t, lp)
    iterations = 0
    for iterations in range(1, MAX_ITER + 1):
        tau = expit(lp)
        score = X.T @ (t - tau)
        if np.max(np.abs(score)) < SCORE_TOL:
            iterations -= 1
            break
        w = tau * (1.0 - tau)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise SingularDesignError("singular information matrix in logistic fit") from None
        ascent = float(score @ step)  # >= 0 since the information matrix is PD
        slack = 1e-11 * (1.0 + abs(ll))  # tolerate pure rounding near the optimum
        scale = 1.0
        for _ in range(40):
            cand = alpha + scale * step
            cand_ll = _bernoulli_loglik(t, X @ cand)
            if cand_ll >= ll + 1e-4 * scale * ascent - slack:
                break
            scale *= 0.5
        alpha = alpha + scale * step
        lp = X @ alpha
        ll = _bernoulli_loglik(t, lp)
        if np.max(np.abs(alpha)) > COEF_CAP:
            raise ConvergenceError(
                f"logistic fit did not converge: |coefficient| exceeded cap {COEF_CAP:g} "
                "(separated or near-separated data)"
            )
    else:
        raise ConvergenceError(f"logistic fit did not converge in {MAX_ITER} iterations")
    tau_hat = expit(lp)
    return LogisticFit(alpha=alpha, tau_hat=tau_hat, converged=True,
                       iterations=iterations, columns=None if columns is None else tuple(columns))


def fit_outcome(d: Dataset, arm: int, columns=None) -> LinearFit:
    """Least-squares outcome regression on one arm, evaluated on all units.

    Raises
    ------
    SingularDesignError
        If the arm sub-sample is smaller than the coefficient count or the
        design is rank deficient on it.
    """
    if arm not in (0, 1):
        raise ValueError("arm must be 0 or 1")
    mask = d.t == arm
    X_all = design_matrix(d.x, columns)
    X = X_all[mask]
    y = d.y[mask]
    # n_arm == q is allowed: the fit interpolates exactly
    if X.shape[0] < X.shape[1]:
        raise SingularDesignError(
            f"arm {arm} has {X.shape[0]} rows for {X.shape[1]} coefficients"
        )
    _check_rank(X, f"arm-{arm} outcome fit")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=RANK_RTOL)
    if rank < X.shape[1]:
        raise SingularDesignError(f"rank-deficient design matrix in arm-{arm} outcome fit")
    fitted_all = X_all @ beta
    return LinearFit(beta=beta, fitted_all=fitted_all, arm=arm,
                     mbar=float(fitted_all.mean()),
                     columns=None if columns is None else tuple(columns))


def fit_all(d: Dataset, ps_columns=None, or_columns=None) -> ModelFits:
    """Fit the propensity model and both outcome regressions."""
    return ModelFits(
        ps=fit_logistic(d, ps_columns),
        or1=fit_outcome(d, 1, or_columns),
        or0=fit_outcome(d, 0, or_columns),
    )
