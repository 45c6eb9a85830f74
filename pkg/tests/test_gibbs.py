"""Gibbs sampler checks: each update is tested against its target density.

The conditional-distribution tests work from first principles: for a scalar
coordinate with a Gaussian full conditional, d(log p)/dx = -prec * (x - mean),
so two numerical gradients of the joint log density pin down the mean and
precision that the update must target.  The variance updates are checked on a
zero-residual dataset where the exact posterior is known in closed form.
"""

import dataclasses
import math

import numpy as np
import pytest

from bayesmr.errors import ConfigurationError, NumericalError
from bayesmr.gibbs import (
    ChainWorkspace,
    McmcConfig,
    _slice_sample,
    draw_normal_block,
    impute_exposures,
    initial_state,
    run_chain,
    update_confounder,
    update_variances,
)
from bayesmr.model import CombinedDataset, PriorSpec, SimConfig, log_joint, param_names
from bayesmr.simulate import simulate


def perturbed_truth_state(data, priors, seed=0):
    """Start from the generating values and jitter them a little."""
    rng = np.random.default_rng(seed)
    state = initial_state(data, priors, McmcConfig(init="truth"), rng)
    state.beta = state.beta + 0.05 * rng.standard_normal(2)
    state.delta = state.delta + 0.05 * rng.standard_normal(4)
    state.u = state.u + 0.1 * rng.standard_normal(state.u.size)
    state.sigma2 = state.sigma2 * rng.uniform(0.8, 1.2, size=(4, 2))
    return state


def numeric_conditional(data, priors, state, setter, x0, h=0.02, eps=1e-5):
    """Recover (mean, prec) of a scalar Gaussian conditional from log_joint."""

    def logp(x):
        s = state.copy()
        setter(s, x)
        return log_joint(s, data, priors)

    def grad(x):
        return (logp(x + eps) - logp(x - eps)) / (2.0 * eps)

    g0 = grad(x0)
    g1 = grad(x0 + h)
    prec = -(g1 - g0) / h
    mean = x0 + g0 / prec
    return mean, prec


class TestDrawNormalBlock:
    def test_matches_conjugate_posterior(self):
        rng = np.random.default_rng(0)
        n, p = 60, 3
        X = rng.normal(size=(n, p))
        y = X @ np.array([1.0, -0.5, 0.25]) + 0.3 * rng.normal(size=n)
        # Heteroscedastic rows exercise the per-row weights.
        lam = np.concatenate([np.full(40, 1.0 / 0.09), np.full(20, 1.0 / 0.25)])
        prior_prec = np.full(p, 1.0 / 4.0)
        prec = (X * lam[:, None]).T @ X + np.diag(prior_prec)
        mean = np.linalg.solve(prec, (X * lam[:, None]).T @ y)
        cov = np.linalg.inv(prec)

        draws = np.array(
            [draw_normal_block(rng, X, lam, y, prior_prec) for _ in range(20000)]
        )
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.02 * np.abs(mean).max() + 1e-3)
        np.testing.assert_allclose(draws.std(axis=0, ddof=1), np.sqrt(np.diag(cov)), rtol=0.05)
        # Off-diagonal structure too: sample covariance close to prec^-1.
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05 * np.abs(cov).max())

    def test_shape_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            draw_normal_block(rng, np.zeros((5, 2)), np.ones(5), np.zeros(4), np.ones(2))
        with pytest.raises(ConfigurationError):
            draw_normal_block(rng, np.zeros((5, 2)), np.ones(5), np.zeros(5), np.ones(3))
        with pytest.raises(ConfigurationError):
            draw_normal_block(rng, np.ones((5, 2)), np.zeros(5), np.zeros(5), np.ones(2))


class TestSliceSampler:
    def test_standard_normal_target(self):
        rng = np.random.default_rng(1)
        x = 0.0
        chain = np.empty(30000)
        for i in range(chain.size):
            x = _slice_sample(rng, lambda t: -0.5 * t * t, x)
            chain[i] = x
        assert abs(chain.mean()) < 0.05
        assert chain.std(ddof=1) == pytest.approx(1.0, rel=0.05)

    def test_shifted_narrow_normal(self):
        rng = np.random.default_rng(2)
        x = 0.0  # start far from the mass; stepping out must find it
        chain = np.empty(20000)
        for i in range(chain.size):
            x = _slice_sample(rng, lambda t: -0.5 * ((t - 3.0) / 0.5) ** 2, x)
            chain[i] = x
        assert chain[5000:].mean() == pytest.approx(3.0, abs=0.05)
        assert chain[5000:].std(ddof=1) == pytest.approx(0.5, rel=0.07)

    def test_degenerate_target_raises(self):
        # A target that admits the starting point but rejects every candidate
        # must hit the shrink cap instead of spinning forever.
        rng = np.random.default_rng(3)
        calls = {"n": 0}

        def logf(t):
            calls["n"] += 1
            return 0.0 if calls["n"] == 1 else -math.inf

        with pytest.raises(NumericalError, match="slice"):
            _slice_sample(rng, logf, 0.5)


@pytest.fixture(scope="module")
def setup():
    data = simulate(SimConfig(n_total=30, missing_rate=0.5, seed=9))
    priors = PriorSpec()
    state = perturbed_truth_state(data, priors, seed=4)
    ws = ChainWorkspace(data)
    ws.refresh_exposures(state)
    return data, priors, state, ws


@pytest.fixture(scope="module")
def noiseless():
    # sigma = 0 makes every residual at the generating values exactly zero,
    # so the variance posterior reduces to a known closed form.
    data = simulate(SimConfig(n_total=20, missing_rate=0.5, sigma=0.0, seed=2))
    priors = PriorSpec()
    rng = np.random.default_rng(0)
    state = initial_state(data, priors, McmcConfig(init="truth"), rng)
    ws = ChainWorkspace(data)
    ws.refresh_exposures(state)
    return data, priors, state, ws


@pytest.fixture(scope="module")
def medium_dataset():
    return simulate(SimConfig(n_total=60, seed=7))


class TestScalarConditionals:
    """Monte Carlo moments of each update vs. numeric conditionals."""

    def test_confounder_update(self, setup):
        data, priors, state, ws = setup

        def set_u5(s, x):
            s.u = s.u.copy()
            s.u[5] = x

        mean, prec = numeric_conditional(data, priors, state, set_u5, state.u[5])
        rng = np.random.default_rng(10)
        samples = np.empty(20000)
        u0 = state.u.copy()
        for i in range(samples.size):
            state.u = u0.copy()
            update_confounder(rng, state, ws)
            samples[i] = state.u[5]
        state.u = u0
        assert samples.mean() == pytest.approx(mean, abs=4.5 * math.sqrt(1 / prec / samples.size) + 1e-4)
        assert samples.std(ddof=1) == pytest.approx(math.sqrt(1.0 / prec), rel=0.05)

    def test_full_conditional_imputation(self, setup):
        data, priors, state, ws = setup

        def set_x(s, x):
            s.x_imputed = s.x_imputed.copy()
            s.x_imputed[0, 0] = x

        mean, prec = numeric_conditional(
            data, priors, state, set_x, state.x_imputed[0, 0]
        )
        rng = np.random.default_rng(11)
        samples = np.empty(20000)
        x0 = state.x_imputed.copy()
        for i in range(samples.size):
            state.x_imputed = x0.copy()
            impute_exposures(rng, state, ws, "full_conditional")
            samples[i] = state.x_imputed[0, 0]
        state.x_imputed = x0.copy()
        ws.refresh_exposures(state)
        assert samples.mean() == pytest.approx(mean, abs=4.5 * math.sqrt(1 / prec / samples.size) + 1e-4)
        assert samples.std(ddof=1) == pytest.approx(math.sqrt(1.0 / prec), rel=0.05)

    def test_exposure_only_imputation_ignores_outcome(self, setup):
        data, priors, state, ws = setup
        coefs = np.concatenate((state.alpha1, state.alpha31))
        ib = ws.ib
        target_mean = float(
            ws.Z1b[0] @ coefs + state.delta[0] * state.u[ib][0] + state.v[0]
        )
        target_sd = math.sqrt(state.sigma2[0, 1])
        rng = np.random.default_rng(12)
        samples = np.empty(20000)
        x0 = state.x_imputed.copy()
        for i in range(samples.size):
            state.x_imputed = x0.copy()
            impute_exposures(rng, state, ws, "exposure_only")
            samples[i] = state.x_imputed[0, 0]
        state.x_imputed = x0.copy()
        ws.refresh_exposures(state)
        assert samples.mean() == pytest.approx(target_mean, abs=4.5 * target_sd / math.sqrt(samples.size))
        assert samples.std(ddof=1) == pytest.approx(target_sd, rel=0.05)

    def test_imputation_draw_differs_between_modes(self, setup):
        data, priors, state, ws = setup
        x0 = state.x_imputed.copy()
        impute_exposures(np.random.default_rng(5), state, ws, "full_conditional")
        full = state.x_imputed.copy()
        state.x_imputed = x0.copy()
        impute_exposures(np.random.default_rng(5), state, ws, "exposure_only")
        marginal = state.x_imputed.copy()
        state.x_imputed = x0.copy()
        ws.refresh_exposures(state)
        assert not np.allclose(full, marginal)


class TestVarianceUpdates:
    def test_conjugate_zero_residual_posterior(self, noiseless):
        # With 10 rows per study and zero residuals the posterior for each
        # variance is InvGamma(3 + 5, 2): mean 2/7, variance 4/294.
        data, priors, state, ws = noiseless
        rng = np.random.default_rng(20)
        samples = np.empty((12000, 2))
        for i in range(samples.shape[0]):
            update_variances(rng, state, ws, priors)
            samples[i, 0] = state.sigma2[0, 0]
            samples[i, 1] = state.sigma2[2, 1]
        assert samples[:, 0].mean() == pytest.approx(2.0 / 7.0, abs=0.006)
        assert samples[:, 1].mean() == pytest.approx(2.0 / 7.0, abs=0.006)
        assert samples[:, 0].var(ddof=1) == pytest.approx(4.0 / 294.0, rel=0.15)

    def test_sd_target_zero_residual_posterior(self, noiseless):
        # Targeting the prior at the scale (not the variance) with zero
        # residuals makes 1/sd ~ Gamma(n + 3, rate 2), so
        # E[sigma2] = 4 / ((n + 2)(n + 1)) = 1/33 for n = 10.
        data, _, state, ws = noiseless
        priors = PriorSpec(ig_target="sd")
        rng = np.random.default_rng(21)
        state.sigma2 = np.full((4, 2), 0.1)
        n_keep, burn = 8000, 500
        samples = np.empty(n_keep)
        for i in range(burn + n_keep):
            update_variances(rng, state, ws, priors)
            if i >= burn:
                samples[i - burn] = state.sigma2[0, 0]
        assert samples.mean() == pytest.approx(1.0 / 33.0, abs=0.0025)
        expected_sd = math.sqrt(16.0 / (12 * 11 * 10 * 9) - (1.0 / 33.0) ** 2)
        assert samples.std(ddof=1) == pytest.approx(expected_sd, rel=0.15)


class TestMcmcConfig:
    def test_kept_draw_count(self):
        cfg = McmcConfig(n_iter=10, burn_in=4, thin=2)
        assert cfg.n_kept == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_iter=0),
            dict(n_iter=10, burn_in=10),
            dict(burn_in=-1),
            dict(thin=0),
            dict(init="warm"),
            dict(imputation="none"),
        ],
    )
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ConfigurationError):
            McmcConfig(**kwargs)


class TestInitialState:
    def test_least_squares_layout(self, medium_dataset):
        data = medium_dataset
        priors = PriorSpec()
        state = initial_state(data, priors, McmcConfig(), np.random.default_rng(0))
        assert state.beta.shape == (2,)
        assert state.alpha1.shape == (15,)
        assert state.x_imputed.shape == (30, 2)
        assert np.all(state.delta == 0.0)
        assert np.all(state.v == 0.0)
        assert np.all(state.sigma2 >= 1e-8)
        assert np.all(np.isfinite(state.flatten()))

    def test_prior_init_varies_with_rng(self, medium_dataset):
        data = medium_dataset
        priors = PriorSpec()
        cfg = McmcConfig(init="prior")
        s1 = initial_state(data, priors, cfg, np.random.default_rng(1))
        s2 = initial_state(data, priors, cfg, np.random.default_rng(2))
        assert not np.allclose(s1.flatten(), s2.flatten())
        assert np.all(s1.sigma2 > 0)

    def test_truth_init_matches_generator(self, medium_dataset):
        data = medium_dataset
        state = initial_state(
            data, PriorSpec(), McmcConfig(init="truth"), np.random.default_rng(0)
        )
        assert np.allclose(state.beta, [0.3, 0.3])
        assert np.allclose(state.alpha1, 0.3)
        np.testing.assert_array_equal(state.u, data.truth.u)
        np.testing.assert_array_equal(state.x_imputed[:, 0], data.truth.x1_hidden)

    def test_truth_init_requires_truth(self, medium_dataset):
        data = medium_dataset
        bare = CombinedDataset(
            study=data.study, z1=data.z1, z2=data.z2, z3=data.z3,
            x1=data.x1, x2=data.x2, y1=data.y1, y2=data.y2,
        )
        with pytest.raises(ConfigurationError, match="truth"):
            initial_state(
                bare, PriorSpec(), McmcConfig(init="truth"), np.random.default_rng(0)
            )


class TestRunChain:
    def test_draw_accounting_and_names(self):
        data = simulate(SimConfig(n_total=20, seed=1))
        draws = run_chain(data, PriorSpec(), McmcConfig(n_iter=10, burn_in=4, thin=2, seed=0))
        assert draws.n_draws == 3
        assert draws.names == param_names(15, 15, 5)
        assert len(draws.names) == 58
        assert np.all(np.isfinite(draws.draws))
        assert draws.column("beta1").shape == (3,)

    def test_deterministic_given_seed(self):
        data = simulate(SimConfig(n_total=20, seed=1))
        cfg = McmcConfig(n_iter=30, burn_in=5, seed=42)
        a = run_chain(data, PriorSpec(), cfg)
        b = run_chain(data, PriorSpec(), cfg)
        np.testing.assert_array_equal(a.draws, b.draws)
        c = run_chain(data, PriorSpec(), dataclasses.replace(cfg, seed=43))
        assert not np.array_equal(a.draws, c.draws)

    def test_recovers_generating_slope(self):
        data = simulate(SimConfig(n_total=400, seed=30))
        cfg = McmcConfig(n_iter=1500, burn_in=500, seed=3)
        draws = run_chain(data, PriorSpec(), cfg)
        b1 = draws.column("beta1")
        b2 = draws.column("beta2")
        assert abs(b1.mean() - 0.3) < 0.08
        assert abs(b2.mean() - 0.3) < 0.08
        # Both slopes are clearly separated from zero.
        assert np.percentile(b1, 2.5) > 0.1
        assert np.percentile(b2, 2.5) > 0.1

    def test_outcome_blind_imputation_attenuates(self):
        # Imputing the missing exposures from the exposure model alone (the
        # ablation mode) feeds back through the latent confounder and drags
        # the slope toward zero; the default mode does not.  This contrast is
        # the reason the mode exists.
        data = simulate(SimConfig(n_total=400, seed=30))
        cfg = McmcConfig(n_iter=1500, burn_in=500, seed=3, imputation="exposure_only")
        blind = run_chain(data, PriorSpec(), cfg).column("beta1").mean()
        assert blind < 0.15

    def test_prior_and_least_squares_inits_agree(self):
        data = simulate(SimConfig(n_total=400, seed=31))
        base = McmcConfig(n_iter=1500, burn_in=500, seed=5)
        m_ls = run_chain(data, PriorSpec(), base).column("beta1").mean()
        m_pr = run_chain(
            data, PriorSpec(), dataclasses.replace(base, init="prior")
        ).column("beta1").mean()
        assert m_ls == pytest.approx(m_pr, abs=0.03)

    def test_numerical_blowup_raises(self):
        data = simulate(SimConfig(n_total=20, seed=1))
        broken = CombinedDataset(
            study=data.study, z1=data.z1, z2=data.z2, z3=data.z3,
            x1=data.x1, x2=data.x2, y1=data.y1 * 1e200, y2=data.y2,
        )
        with np.errstate(all="ignore"), pytest.raises(NumericalError):
            run_chain(broken, PriorSpec(), McmcConfig(n_iter=20, burn_in=0, seed=0))
