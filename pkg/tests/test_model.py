"""Core types and the joint log density.

The log_joint oracle below rebuilds the density term by term with
scipy.stats, which keeps the reference independent of the vectorized
implementation in the package.
"""

import numpy as np
import pytest
from scipy import stats

from bayesmr.errors import ConfigurationError
from bayesmr.gibbs import McmcConfig, initial_state
from bayesmr.model import (
    CombinedDataset,
    ParamState,
    PosteriorDraws,
    PriorSpec,
    SimConfig,
    log_joint,
    param_names,
    working_exposures,
)
from bayesmr.simulate import simulate


def small_dataset(seed=0, n=40, missing=0.5):
    return simulate(SimConfig(n_total=n, missing_rate=missing, seed=seed))


def random_state(data, seed=0):
    rng = np.random.default_rng(seed)
    state = initial_state(
        data, PriorSpec(), McmcConfig(n_iter=10, burn_in=0, init="truth"), rng
    )
    state.beta = state.beta + rng.normal(0, 0.2, 2)
    state.delta = state.delta + rng.normal(0, 0.2, 4)
    state.u = state.u + rng.normal(0, 0.3, data.n)
    state.v = state.v + rng.normal(0, 0.2, 4)
    state.x_imputed = state.x_imputed + rng.normal(0, 0.3, state.x_imputed.shape)
    state.sigma2 = state.sigma2 * np.exp(rng.normal(0, 0.5, (4, 2)))
    return state


class TestSimConfig:
    def test_row_counts(self):
        cfg = SimConfig(n_total=400, missing_rate=0.5)
        assert (cfg.n_observed, cfg.n_missing) == (200, 200)

    def test_row_counts_survive_float_rounding(self):
        # 400 * 0.2 is 80.00000000000001 in floating point.
        cfg = SimConfig(n_total=400, missing_rate=0.2)
        assert cfg.n_missing == 80
        assert SimConfig(n_total=400, missing_rate=0.8).n_missing == 320

    @pytest.mark.parametrize("rate", [0.0, 1.0, -0.1, 1.5])
    def test_missing_rate_bounds(self, rate):
        with pytest.raises(ConfigurationError):
            SimConfig(missing_rate=rate)

    def test_non_integer_split_rejected(self):
        with pytest.raises(ConfigurationError, match="whole number"):
            SimConfig(n_total=401, missing_rate=0.5)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigurationError):
            SimConfig(sigma=-0.1)

    def test_zero_sigma_allowed(self):
        assert SimConfig(sigma=0.0).sigma == 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"maf": 0.0},
            {"maf": 1.0},
            {"v_low": 0.5, "v_high": -0.5},
            {"n_z3": 0},
            {"n_total": 1},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ConfigurationError):
            SimConfig(**kwargs)


class TestParamNames:
    def test_count_and_uniqueness(self):
        names = param_names(15, 15, 5)
        assert len(names) == 58
        assert len(set(names)) == 58

    def test_spot_names(self):
        names = param_names(15, 15, 5)
        assert names[0] == "beta1"
        assert names[1] == "beta2"
        assert "alpha1_15" in names
        assert "alpha31_5" in names
        assert "sigma2_y2_b" in names
        assert names[-1] == "v_y2"

    def test_flatten_alignment(self):
        data = small_dataset()
        state = random_state(data)
        names = param_names(15, 15, 5)
        flat = state.flatten()
        assert flat.shape == (len(names),)
        assert flat[names.index("beta2")] == state.beta[1]
        assert flat[names.index("alpha2_3")] == state.alpha2[2]
        assert flat[names.index("delta_y1")] == state.delta[2]
        assert flat[names.index("sigma2_x2_b")] == state.sigma2[1, 1]
        assert flat[names.index("v_x2")] == state.v[1]


class TestCombinedDataset:
    def test_masks_and_counts(self):
        data = small_dataset(n=40, missing=0.25)
        assert data.n == 40
        assert data.n_a == 30
        assert data.n_b == 10
        assert data.b_mask.sum() == 10

    def test_exposures_must_be_nan_on_study_b(self):
        data = small_dataset()
        x1 = data.x1.copy()
        x1[-1] = 1.0  # a study-B row
        with pytest.raises(ConfigurationError, match="missing"):
            CombinedDataset(
                study=data.study, z1=data.z1, z2=data.z2, z3=data.z3,
                x1=x1, x2=data.x2, y1=data.y1, y2=data.y2,
            )

    def test_exposures_must_be_finite_on_study_a(self):
        data = small_dataset()
        x1 = data.x1.copy()
        x1[0] = np.nan
        with pytest.raises(ConfigurationError, match="finite"):
            CombinedDataset(
                study=data.study, z1=data.z1, z2=data.z2, z3=data.z3,
                x1=x1, x2=data.x2, y1=data.y1, y2=data.y2,
            )

    def test_bad_genotypes_rejected(self):
        data = small_dataset()
        z1 = data.z1.copy()
        z1[0, 0] = 3
        with pytest.raises(ConfigurationError, match="genotype"):
            CombinedDataset(
                study=data.study, z1=z1, z2=data.z2, z3=data.z3,
                x1=data.x1, x2=data.x2, y1=data.y1, y2=data.y2,
            )

    def test_bad_study_labels_rejected(self):
        data = small_dataset()
        study = data.study.copy()
        study[0] = "C"
        with pytest.raises(ConfigurationError, match="study"):
            CombinedDataset(
                study=study, z1=data.z1, z2=data.z2, z3=data.z3,
                x1=data.x1, x2=data.x2, y1=data.y1, y2=data.y2,
            )

    def test_single_study_rejected(self):
        data = small_dataset()
        study = np.array(["A"] * data.n, dtype="U1")
        x1 = np.nan_to_num(data.x1, nan=0.0)
        x2 = np.nan_to_num(data.x2, nan=0.0)
        with pytest.raises(ConfigurationError, match="each study"):
            CombinedDataset(
                study=study, z1=data.z1, z2=data.z2, z3=data.z3,
                x1=x1, x2=x2, y1=data.y1, y2=data.y2,
            )


class TestPosteriorDraws:
    def test_column_lookup(self):
        names = ("a", "b")
        draws = PosteriorDraws(names=names, draws=np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert draws.n_draws == 2
        np.testing.assert_array_equal(draws.column("b"), [2.0, 4.0])

    def test_unknown_column(self):
        draws = PosteriorDraws(names=("a",), draws=np.zeros((3, 1)))
        with pytest.raises(KeyError):
            draws.column("nope")

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            PosteriorDraws(names=("a", "b"), draws=np.zeros((3, 3)))


class TestPriorSpec:
    def test_defaults(self):
        p = PriorSpec()
        assert (p.beta_sd, p.alpha_sd, p.ig_shape, p.ig_rate) == (10.0, 0.3, 3.0, 2.0)
        assert p.ig_target == "variance"

    @pytest.mark.parametrize(
        "kwargs", [{"beta_sd": 0.0}, {"ig_rate": -1.0}, {"ig_target": "scale"}]
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            PriorSpec(**kwargs)


class TestLogJoint:
    def scipy_log_joint(self, state, data, priors):
        """Term-by-term reference density."""
        b = data.b_mask
        x1, x2 = working_exposures(state, data)
        total = 0.0
        mx1 = data.z1 @ state.alpha1 + data.z3 @ state.alpha31 \
            + state.delta[0] * state.u + state.v[0] * b
        mx2 = data.z2 @ state.alpha2 + data.z3 @ state.alpha32 \
            + state.delta[1] * state.u + state.v[1] * b
        my1 = state.beta[0] * x1 + state.delta[2] * state.u + state.v[2] * b
        my2 = state.beta[1] * x2 + state.delta[3] * state.u + state.v[3] * b
        for e, (obs, mean) in enumerate(
            [(x1, mx1), (x2, mx2), (data.y1, my1), (data.y2, my2)]
        ):
            sd = np.sqrt(np.where(b, state.sigma2[e, 1], state.sigma2[e, 0]))
            total += stats.norm.logpdf(obs, mean, sd).sum()
        total += stats.norm.logpdf(state.beta, 0, priors.beta_sd).sum()
        for coefs in (state.alpha1, state.alpha2, state.alpha31, state.alpha32):
            total += stats.norm.logpdf(coefs, 0, priors.alpha_sd).sum()
        total += stats.norm.logpdf(state.delta, 0, priors.delta_sd).sum()
        total += stats.norm.logpdf(state.v, 0, priors.v_sd).sum()
        total += stats.norm.logpdf(state.u, 0, 1).sum()
        for s2 in state.sigma2.ravel():
            if priors.ig_target == "variance":
                total += stats.invgamma.logpdf(s2, priors.ig_shape, scale=priors.ig_rate)
            else:
                sd = np.sqrt(s2)
                total += stats.invgamma.logpdf(sd, priors.ig_shape, scale=priors.ig_rate)
                total -= np.log(2 * sd)
        return total

    @pytest.mark.parametrize("ig_target", ["variance", "sd"])
    def test_matches_scipy_reference(self, ig_target):
        data = small_dataset(seed=3)
        state = random_state(data, seed=4)
        priors = PriorSpec(ig_target=ig_target)
        ours = log_joint(state, data, priors)
        ref = self.scipy_log_joint(state, data, priors)
        assert ours == pytest.approx(ref, rel=1e-10)

    def test_nonpositive_variance_gives_minus_inf(self):
        data = small_dataset()
        state = random_state(data)
        state.sigma2[1, 0] = 0.0
        assert log_joint(state, data, PriorSpec()) == -np.inf

    def test_finite_for_reasonable_state(self):
        data = small_dataset(seed=9)
        state = random_state(data, seed=10)
        assert np.isfinite(log_joint(state, data, PriorSpec()))
