import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fd_jacobian, random_dataset
from pelate.data import Dataset, split_groups
from pelate.errors import DomainError, UsageError
from pelate.glm import LogisticFit, fit_all, fit_logistic
from pelate.weighting import (
    build_sandwich,
    estimate_aipw,
    estimate_ipw,
    hajek_weights,
    normalized_from_inverse,
    sandwich_variance,
)


def _fit_with_tau(d, tau):
    return LogisticFit(alpha=np.zeros(d.d + 1), tau_hat=np.asarray(tau, float),
                       converged=True, iterations=0)


def _dataset(t, y, d_cov=1):
    t = np.asarray(t)
    x = np.zeros((t.size, d_cov))
    return Dataset(x=x, t=t, y=np.asarray(y, float))


class TestWeights:
    def test_uniform_tau_gives_uniform_weights(self):
        d = _dataset([1, 1, 0, 0], [0.0] * 4)
        tr, co = split_groups(d)
        w = hajek_weights(np.full(4, 0.5), tr, co)
        assert np.allclose(w.a1, 0.5, atol=1e-15)
        assert np.allclose(w.a0, 0.5, atol=1e-15)

    def test_forced_arithmetic(self):
        d = _dataset([1, 1, 0], [0.0] * 3)
        tr, co = split_groups(d)
        w = hajek_weights(np.array([0.5, 0.25, 0.5]), tr, co)
        assert np.allclose(w.a1, [1.0 / 3.0, 2.0 / 3.0], atol=1e-15)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        d = random_dataset(rng, n=40)
        tau = rng.uniform(0.1, 0.9, size=40)
        tr, co = split_groups(d)
        w = hajek_weights(tau, tr, co)
        inv1 = 1.0 / tau[tr.indices]
        inv0 = 1.0 / (1.0 - tau[co.indices])
        assert np.max(np.abs(w.a1 - inv1 / inv1.sum())) < 1e-14
        assert np.max(np.abs(w.a0 - inv0 / inv0.sum())) < 1e-14
        assert abs(w.a1.sum() - 1.0) < 1e-12 and abs(w.a0.sum() - 1.0) < 1e-12

    def test_degenerate_tau_rejected(self):
        d = _dataset([1, 0], [0.0, 0.0])
        tr, co = split_groups(d)
        with pytest.raises(DomainError):
            hajek_weights(np.array([1.0, 0.5]), tr, co)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=0.01, max_value=100.0))
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(5)
        inv1 = rng.uniform(1.0, 5.0, size=7)
        inv0 = rng.uniform(1.0, 5.0, size=9)
        base = normalized_from_inverse(inv1, inv0)
        scaled = normalized_from_inverse(c * inv1, c * inv0)
        assert np.max(np.abs(base.a1 - scaled.a1)) < 1e-12
        assert np.max(np.abs(base.a0 - scaled.a0)) < 1e-12


class TestIpw:
    def test_coincide_when_weights_sum_to_n(self):
        d = _dataset([1, 1, 0, 0], [2.0, 4.0, 0.0, 0.0])
        fit = _fit_with_tau(d, np.full(4, 0.5))
        r1 = estimate_ipw(d, fit, "IPW1")
        r2 = estimate_ipw(d, fit, "IPW2")
        assert abs(r2.mu1 - 3.0) < 1e-14
        assert abs(r1.mu1 - 3.0) < 1e-14

    def test_hajek_forced_arithmetic(self):
        d = _dataset([1, 1, 0], [1.0, 2.0, 0.0])
        fit = _fit_with_tau(d, np.array([0.5, 0.25, 0.5]))
        r2 = estimate_ipw(d, fit, "IPW2")
        assert abs(r2.mu1 - 5.0 / 3.0) < 1e-14

    def test_theta_is_mu_difference(self):
        rng = np.random.default_rng(1)
        d = random_dataset(rng)
        fit = fit_logistic(d)
        for kind in ("IPW1", "IPW2"):
            r = estimate_ipw(d, fit, kind)
            assert r.theta == r.mu1 - r.mu0

    def test_unknown_kind(self):
        d = _dataset([1, 0], [0.0, 0.0])
        with pytest.raises(UsageError):
            estimate_ipw(d, _fit_with_tau(d, [0.5, 0.5]), "IPW3")


class TestAipw:
    def test_zero_fit_reduces_to_ipw(self):
        rng = np.random.default_rng(2)
        d = random_dataset(rng, n=30)
        fits = fit_all(d)
        zero1 = fits.or1.__class__(beta=np.zeros_like(fits.or1.beta),
                                   fitted_all=np.zeros(d.n), arm=1, mbar=0.0)
        zero0 = fits.or0.__class__(beta=np.zeros_like(fits.or0.beta),
                                   fitted_all=np.zeros(d.n), arm=0, mbar=0.0)
        for a_kind, i_kind in (("AIPW1", "IPW1"), ("AIPW2", "IPW2")):
            ra = estimate_aipw(d, fits.ps, zero1, zero0, a_kind)
            ri = estimate_ipw(d, fits.ps, i_kind)
            assert abs(ra.theta - ri.theta) < 1e-12

    def test_perfect_fit_gives_mbar_difference(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((20, 1))
        t = np.r_[np.ones(10), np.zeros(10)].astype(int)
        y = np.where(t == 1, 2.0 + 3.0 * x[:, 0], -1.0 + x[:, 0])
        d = Dataset(x=x, t=t, y=y)
        fits = fit_all(d)
        r = estimate_aipw(d, fits.ps, fits.or1, fits.or0, "AIPW2")
        assert abs(r.theta - (fits.or1.mbar - fits.or0.mbar)) < 1e-10

    def test_matches_spreadsheet_evaluation(self):
        rng = np.random.default_rng(4)
        d = random_dataset(rng, n=50, d=2)
        fits = fit_all(d)
        r = estimate_aipw(d, fits.ps, fits.or1, fits.or0, "AIPW2")
        tau = fits.ps.tau_hat
        t = d.t
        inv1 = 1.0 / tau[t == 1]
        inv0 = 1.0 / (1.0 - tau[t == 0])
        a1 = inv1 / inv1.sum()
        a0 = inv0 / inv0.sum()
        mu1 = np.sum(a1 * (d.y[t == 1] - fits.or1.fitted_all[t == 1])) + fits.or1.fitted_all.mean()
        mu0 = np.sum(a0 * (d.y[t == 0] - fits.or0.fitted_all[t == 0])) + fits.or0.fitted_all.mean()
        assert abs(r.mu1 - mu1) < 1e-12
        assert abs(r.mu0 - mu0) < 1e-12
        assert abs(r.theta - (mu1 - mu0)) < 1e-12

    def test_aipw1_matches_displayed_formula(self):
        rng = np.random.default_rng(5)
        d = random_dataset(rng, n=50, d=2)
        fits = fit_all(d)
        r = estimate_aipw(d, fits.ps, fits.or1, fits.or0, "AIPW1")
        tau = fits.ps.tau_hat
        t = d.t
        mu1 = np.sum((d.y[t == 1] - fits.or1.fitted_all[t == 1]) / tau[t == 1]) / d.n \
            + fits.or1.fitted_all.mean()
        assert abs(r.mu1 - mu1) < 1e-12


class TestSandwich:
    @pytest.mark.parametrize("family,kind", [("IPW", "IPW1"), ("IPW", "IPW2"),
                                             ("AIPW", "AIPW1"), ("AIPW", "AIPW2")])
    def test_blocks_mean_zero_at_solution(self, family, kind):
        rng = np.random.default_rng(6)
        d = random_dataset(rng, n=120, d=2)
        fits = fit_all(d)
        if family == "IPW":
            rep = estimate_ipw(d, fits.ps, kind)
        else:
            rep = estimate_aipw(d, fits.ps, fits.or1, fits.or0, kind)
        system = build_sandwich(d, rep, fits, family)
        means = system.u_eval(system.psi_hat).mean(axis=0)
        assert np.max(np.abs(means)) < 1e-8

    @pytest.mark.parametrize("family,kind", [("IPW", "IPW1"), ("IPW", "IPW2"),
                                             ("AIPW", "AIPW1"), ("AIPW", "AIPW2")])
    def test_analytic_jacobian_matches_finite_differences(self, family, kind):
        rng = np.random.default_rng(7)
        d = random_dataset(rng, n=80, d=2)
        fits = fit_all(d)
        if family == "IPW":
            rep = estimate_ipw(d, fits.ps, kind)
        else:
            rep = estimate_aipw(d, fits.ps, fits.or1, fits.or0, kind)
        system = build_sandwich(d, rep, fits, family)
        numeric = fd_jacobian(lambda psi: system.u_eval(psi).mean(axis=0), system.psi_hat)
        scale = 1.0 + np.max(np.abs(numeric))
        assert np.max(np.abs(system.H - numeric)) < 1e-5 * scale

    def test_variance_nonnegative_on_random_data(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            d = random_dataset(rng, n=50, d=1)
            fit = fit_logistic(d)
            rep = estimate_ipw(d, fit, "IPW2")
            assert sandwich_variance(d, rep, fit, "IPW") >= 0.0

    def test_family_method_mismatch(self):
        rng = np.random.default_rng(9)
        d = random_dataset(rng, n=40)
        fits = fit_all(d)
        rep = estimate_ipw(d, fits.ps, "IPW2")
        with pytest.raises(UsageError):
            sandwich_variance(d, rep, fits, "AIPW")
        with pytest.raises(UsageError):
            sandwich_variance(d, rep, fits, "IPW3")

    def test_condition_number_diagnostic_attached(self):
        rng = np.random.default_rng(10)
        d = random_dataset(rng, n=60)
        fits = fit_all(d)
        rep = estimate_aipw(d, fits.ps, fits.or1, fits.or0, "AIPW2")
        sandwich_variance(d, rep, fits, "AIPW")
        assert any("condition number" in note for note in rep.diagnostics)
