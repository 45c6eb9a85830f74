"""Core types and the joint log density for the two-study causal model.

The data layout is a combined two-study design.  Study A observes genotype
counts, both exposures, and both outcomes.  Study B observes genotypes and
outcomes but neither exposure; exposures on study-B rows are treated as
latent and carried in :class:`ParamState` alongside the model parameters.

Per-row model, writing ``u_i`` for the latent confounder and ``s(i)`` for
the row's study:

    x1_i ~ Normal(z1_i . alpha1 + z3_i . alpha31 + delta_x1 u_i + v_x1 1[B],
                  sigma2_x1,s(i))
    x2_i ~ Normal(z2_i . alpha2 + z3_i . alpha32 + delta_x2 u_i + v_x2 1[B],
                  sigma2_x2,s(i))
    y1_i ~ Normal(beta1 x1_i + delta_y1 u_i + v_y1 1[B], sigma2_y1,s(i))
    y2_i ~ Normal(beta2 x2_i + delta_y2 u_i + v_y2 1[B], sigma2_y2,s(i))

The ``v`` intercepts apply to study-B rows only and absorb between-study
shifts.  Each equation has its own noise variance per study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

EQ_LABELS = ("x1", "x2", "y1", "y2")
STUDY_LABELS = ("a", "b")


@dataclass(frozen=True)
class SimConfig:
    """Generating configuration for a synthetic two-study dataset.

    ``missing_rate`` is the fraction of rows assigned to study B (the study
    with unobserved exposures).  ``iv_strength`` is the common value of all
    true genotype coefficients.  ``n_z1`` / ``n_z2`` count the instruments
    specific to exposure 1 / exposure 2 and ``n_z3`` the shared ones.
    """

    n_total: int = 400
    missing_rate: float = 0.5
    iv_strength: float = 0.3
    beta1: float = 0.3
    beta2: float = 0.3
    delta: float = 1.0
    sigma: float = 0.1
    n_z1: int = 15
    n_z2: int = 15
    n_z3: int = 5
    maf: float = 0.3
    v_low: float = -0.5
    v_high: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_total < 2:
            raise ConfigurationError(f"n_total must be at least 2, got {self.n_total}")
        if not 0.0 < self.missing_rate < 1.0:
            raise ConfigurationError(
                f"missing_rate must lie strictly between 0 and 1, got {self.missing_rate}"
            )
        target = self.n_total * self.missing_rate
        if abs(target - round(target)) > 1e-9 * max(1.0, abs(target)):
            raise ConfigurationError(
                "n_total * missing_rate must be a whole number of rows; "
                f"got {self.n_total} * {self.missing_rate} = {target}"
            )
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be non-negative, got {self.sigma}")
        if min(self.n_z1, self.n_z2, self.n_z3) < 1:
            raise ConfigurationError("each instrument group needs at least one variant")
        if not 0.0 < self.maf < 1.0:
            raise ConfigurationError(f"maf must lie strictly between 0 and 1, got {self.maf}")
        if self.v_low > self.v_high:
            raise ConfigurationError(
                f"v_low must not exceed v_high, got ({self.v_low}, {self.v_high})"
            )

    @property
    def n_missing(self) -> int:
        """Number of study-B rows."""
        return int(round(self.n_total * self.missing_rate))

    @property
    def n_observed(self) -> int:
        """Number of study-A rows."""
        return self.n_total - self.n_missing


@dataclass(frozen=True)
class DatasetTruth:
    """Generating values retained for scoring and diagnostics.

    ``x1_hidden`` / ``x2_hidden`` hold the exposures that were generated for
    study-B rows before masking, in study-B row order.
    """

    config: SimConfig
    v: np.ndarray
    u: np.ndarray
    x1_hidden: np.ndarray
    x2_hidden: np.ndarray


@dataclass(frozen=True)
class CombinedDataset:
    """Columnar two-study dataset.

    ``study`` holds "A"/"B" labels.  ``x1``/``x2`` are NaN exactly on
    study-B rows.  Genotype matrices hold counts in {0, 1, 2}.
    """

    study: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    truth: DatasetTruth | None = None

    def __post_init__(self) -> None:
        study = np.asarray(self.study, dtype="U1")
        object.__setattr__(self, "study", study)
        n = study.shape[0]
        bad = set(np.unique(study)) - {"A", "B"}
        if bad:
            raise ConfigurationError(f"study labels must be 'A' or 'B', found {sorted(bad)}")
        for name in ("z1", "z2", "z3"):
            z = np.asarray(getattr(self, name))
            if z.ndim != 2 or z.shape[0] != n:
                raise ConfigurationError(f"{name} must have shape ({n}, *), got {z.shape}")
            if not np.all(np.isin(z, (0, 1, 2))):
                raise ConfigurationError(f"{name} must contain genotype counts in {{0, 1, 2}}")
            object.__setattr__(self, name, z.astype(np.int64))
        for name in ("x1", "x2", "y1", "y2"):
            col = np.asarray(getattr(self, name), dtype=np.float64)
            if col.shape != (n,):
                raise ConfigurationError(f"{name} must have shape ({n},), got {col.shape}")
            object.__setattr__(self, name, col)
        if not (np.all(np.isfinite(self.y1)) and np.all(np.isfinite(self.y2))):
            raise ConfigurationError("outcomes y1 and y2 must be finite for every row")
        b = study == "B"
        for name in ("x1", "x2"):
            col = getattr(self, name)
            if not np.all(np.isnan(col[b])):
                raise ConfigurationError(f"{name} must be missing (NaN) on every study-B row")
            if not np.all(np.isfinite(col[~b])):
                raise ConfigurationError(f"{name} must be finite on every study-A row")
        if not b.any() or b.all():
            raise ConfigurationError("dataset must contain at least one row from each study")
        if self.truth is not None and self.truth.u.shape != (n,):
            raise ConfigurationError(
                f"truth.u must have shape ({n},), got {self.truth.u.shape}"
            )

    @property
    def n(self) -> int:
        return self.study.shape[0]

    @property
    def b_mask(self) -> np.ndarray:
        """Boolean mask of study-B rows."""
        return self.study == "B"

    @property
    def n_a(self) -> int:
        return int(np.sum(self.study == "A"))

    @property
    def n_b(self) -> int:
        return int(np.sum(self.study == "B"))


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters.

    Scale parameters get an inverse-gamma prior with the given shape and
    rate.  ``ig_target`` selects whether that prior sits on the noise
    variance ("variance", conjugate) or on the noise standard deviation
    ("sd", sampled by a slice step).
    """

    beta_sd: float = 10.0
    alpha_sd: float = 0.3
    delta_sd: float = 1.0
    v_sd: float = 1.0
    ig_shape: float = 3.0
    ig_rate: float = 2.0
    ig_target: str = "variance"

    def __post_init__(self) -> None:
        for name in ("beta_sd", "alpha_sd", "delta_sd", "v_sd", "ig_shape", "ig_rate"):
            val = getattr(self, name)
            if not val > 0.0:
                raise ConfigurationError(f"{name} must be positive, got {val}")
        if self.ig_target not in ("variance", "sd"):
            raise ConfigurationError(
                f"ig_target must be 'variance' or 'sd', got {self.ig_target!r}"
            )


@dataclass
class ParamState:
    """Full sampler state: model parameters plus latent quantities.

    ``delta`` and ``v`` follow equation order (x1, x2, y1, y2); ``sigma2``
    is indexed [equation, study] with study order (A, B).  ``x_imputed``
    holds the study-B exposures, one row per study-B row in dataset order,
    columns (x1, x2).
    """

    beta: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha31: np.ndarray
    alpha32: np.ndarray
    delta: np.ndarray
    sigma2: np.ndarray
    v: np.ndarray
    u: np.ndarray
    x_imputed: np.ndarray

    def copy(self) -> ParamState:
        return ParamState(
            beta=self.beta.copy(),
            alpha1=self.alpha1.copy(),
            alpha2=self.alpha2.copy(),
            alpha31=self.alpha31.copy(),
            alpha32=self.alpha32.copy(),
            delta=self.delta.copy(),
            sigma2=self.sigma2.copy(),
            v=self.v.copy(),
            u=self.u.copy(),
            x_imputed=self.x_imputed.copy(),
        )

    def flatten(self) -> np.ndarray:
        """Model parameters as a vector aligned with :func:`param_names`."""
        return np.concatenate(
            [
                self.beta,
                self.alpha1,
                self.alpha2,
                self.alpha31,
                self.alpha32,
                self.delta,
                self.sigma2.ravel(),
                self.v,
            ]
        )


def param_names(n_z1: int, n_z2: int, n_z3: int) -> tuple[str, ...]:
    """Canonical parameter names matching :meth:`ParamState.flatten` order."""
    names = ["beta1", "beta2"]
    names += [f"alpha1_{j}" for j in range(1, n_z1 + 1)]
    names += [f"alpha2_{j}" for j in range(1, n_z2 + 1)]
    names += [f"alpha31_{j}" for j in range(1, n_z3 + 1)]
    names += [f"alpha32_{j}" for j in range(1, n_z3 + 1)]
    names += [f"delta_{eq}" for eq in EQ_LABELS]
    names += [f"sigma2_{eq}_{s}" for eq in EQ_LABELS for s in STUDY_LABELS]
    names += [f"v_{eq}" for eq in EQ_LABELS]
    return tuple(names)


@dataclass(frozen=True)
class PosteriorDraws:
    """Kept posterior draws, one row per draw, columns named by ``names``."""

    names: tuple[str, ...]
    draws: np.ndarray

    def __post_init__(self) -> None:
        draws = np.asarray(self.draws, dtype=np.float64)
        if draws.ndim != 2 or draws.shape[1] != len(self.names):
            raise ConfigurationError(
                f"draws must have shape (n_draws, {len(self.names)}), got {draws.shape}"
            )
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None
        return self.draws[:, j]


def working_exposures(state: ParamState, data: CombinedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Exposure columns with study-B entries filled from the imputed values."""
    b_idx = np.flatnonzero(data.b_mask)
    x1 = data.x1.copy()
    x2 = data.x2.copy()
    x1[b_idx] = state.x_imputed[:, 0]
    x2[b_idx] = state.x_imputed[:, 1]
    return x1, x2


def linear_predictors(
    state: ParamState, data: CombinedDataset
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-row means of the four equations, including study-B intercepts."""
    b = data.b_mask.astype(np.float64)
    x1, x2 = working_exposures(state, data)
    mx1 = data.z1 @ state.alpha1 + data.z3 @ state.alpha31 + state.delta[0] * state.u + state.v[0] * b
    mx2 = data.z2 @ state.alpha2 + data.z3 @ state.alpha32 + state.delta[1] * state.u + state.v[1] * b
    my1 = state.beta[0] * x1 + state.delta[2] * state.u + state.v[2] * b
    my2 = state.beta[1] * x2 + state.delta[3] * state.u + state.v[3] * b
    return mx1, mx2, my1, my2


def _normal_logpdf_sum(x: np.ndarray, mean: np.ndarray, var: np.ndarray | float) -> float:
    resid = np.asarray(x) - mean
    return float(-0.5 * np.sum(np.log(2.0 * np.pi * var) + resid**2 / var))


def _invgamma_logpdf(x: float, shape: float, rate: float) -> float:
    return shape * math.log(rate) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - rate / x


def log_joint(state: ParamState, data: CombinedDataset, priors: PriorSpec) -> float:
    """Log joint density of data, latent quantities, and parameters.

    All normalizing constants are included.  The study-B exposure entries of
    the state contribute through their equation likelihoods, so the result
    is a proper joint density over observations, imputed exposures, ``u``,
    and parameters.  With ``ig_target == "sd"`` the scale prior is a density
    over the standard deviation; the Jacobian ``1 / (2 sigma)`` is included
    so the value stays a density over the stored variances.

    Returns ``-inf`` when any stored variance is non-positive.
    """
    if np.any(state.sigma2 <= 0.0):
        return -math.inf

    b = data.b_mask
    x1, x2 = working_exposures(state, data)
    means = linear_predictors(state, data)
    observed = (x1, x2, data.y1, data.y2)

    total = 0.0
    for e in range(4):
        var = np.where(b, state.sigma2[e, 1], state.sigma2[e, 0])
        total += _normal_logpdf_sum(observed[e], means[e], var)

    total += _normal_logpdf_sum(state.beta, 0.0, priors.beta_sd**2)
    for coefs in (state.alpha1, state.alpha2, state.alpha31, state.alpha32):
        total += _normal_logpdf_sum(coefs, 0.0, priors.alpha_sd**2)
    total += _normal_logpdf_sum(state.delta, 0.0, priors.delta_sd**2)
    total += _normal_logpdf_sum(state.v, 0.0, priors.v_sd**2)
    total += _normal_logpdf_sum(state.u, 0.0, 1.0)

    for s2 in state.sigma2.ravel():
        if priors.ig_target == "variance":
            total += _invgamma_logpdf(float(s2), priors.ig_shape, priors.ig_rate)
        else:
            sd = math.sqrt(float(s2))
            total += _invgamma_logpdf(sd, priors.ig_shape, priors.ig_rate) - math.log(2.0 * sd)
    return total
