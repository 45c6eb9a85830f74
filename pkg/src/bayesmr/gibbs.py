"""Blocked Gibbs sampler with in-chain imputation of missing exposures.

Every full conditional in the model is available in closed form, so the
chain is a systematic scan of exact draws (plus, optionally, a slice step
for the noise scales when the inverse-gamma prior targets the standard
deviation instead of the variance).  One iteration performs, in order:

1. imputation of the study-B exposures (x1 column, then x2),
2. the latent confounder ``u`` (one vectorized draw),
3. coefficient blocks: (alpha1, alpha31, delta_x1), (alpha2, alpha32,
   delta_x2), (beta1, delta_y1), (beta2, delta_y2), then the four study-B
   intercepts v_x1, v_x2, v_y1, v_y2,
4. the eight noise variances, equation-major with study A before B.

The draw order is fixed so a given seed reproduces the chain exactly.

Imputation modes
----------------
``full_conditional`` (default) draws each missing exposure from its exact
conditional given everything else, which combines the exposure equation
with the information flowing back from the observed outcome.  For a
study-B row with outcome y and exposure-equation mean ``a``:

    precision = 1/s2_x + beta^2/s2_y
    mean = (a/s2_x + beta (y - v_y - delta_y u)/s2_y) / precision

``exposure_only`` drops the outcome term and proposes from the exposure
equation alone, Normal(a, s2_x).  That matches a common shortcut in which
the imputation step conditions only on instruments and confounder; it
remains a valid Gibbs step for a model in which the outcome equation is
not informative about the missing exposure, and is kept as a comparison
mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .model import (
    CombinedDataset,
    ParamState,
    PosteriorDraws,
    PriorSpec,
    param_names,
)

_INIT_MODES = ("least_squares", "prior", "truth")
_IMPUTATION_MODES = ("full_conditional", "exposure_only")
_VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, initialization, and imputation settings."""

    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 1
    init: str = "least_squares"
    imputation: str = "full_conditional"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_iter < 1:
            raise ConfigurationError(f"n_iter must be at least 1, got {self.n_iter}")
        if not 0 <= self.burn_in < self.n_iter:
            raise ConfigurationError(
                f"burn_in must lie in [0, n_iter), got {self.burn_in} with n_iter={self.n_iter}"
            )
        if self.thin < 1:
            raise ConfigurationError(f"thin must be at least 1, got {self.thin}")
        if self.init not in _INIT_MODES:
            raise ConfigurationError(f"init must be one of {_INIT_MODES}, got {self.init!r}")
        if self.imputation not in _IMPUTATION_MODES:
            raise ConfigurationError(
                f"imputation must be one of {_IMPUTATION_MODES}, got {self.imputation!r}"
            )

    @property
    def n_kept(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


class ChainWorkspace:
    """Precomputed designs and masks shared across iterations.

    ``x1w`` / ``x2w`` are working exposure columns whose study-B entries are
    refreshed by the imputation step each iteration.
    """

    def __init__(self, data: CombinedDataset):
        self.data = data
        self.b_bool = data.b_mask
        self.is_b = self.b_bool.astype(np.float64)
        self.ia = np.flatnonzero(~self.b_bool)
        self.ib = np.flatnonzero(self.b_bool)
        self.n = data.n
        self.n_a = self.ia.size
        self.n_b = self.ib.size
        # Exposure-equation designs: instrument columns then shared columns.
        self.Z1 = np.column_stack((data.z1, data.z3)).astype(np.float64)
        self.Z2 = np.column_stack((data.z2, data.z3)).astype(np.float64)
        self.Z1b = self.Z1[self.ib]
        self.Z2b = self.Z2[self.ib]
        # Per-study Gram matrices; the genotype part of each exposure-block
        # precision only changes through the two noise precisions, so it can
        # be assembled from these without touching the n-row design again.
        self.G1a = self.Z1[self.ia].T @ self.Z1[self.ia]
        self.G1b = self.Z1b.T @ self.Z1b
        self.G2a = self.Z2[self.ia].T @ self.Z2[self.ia]
        self.G2b = self.Z2b.T @ self.Z2b
        self.x1w = data.x1.copy()
        self.x2w = data.x2.copy()

    def refresh_exposures(self, state: ParamState) -> None:
        self.x1w[self.ib] = state.x_imputed[:, 0]
        self.x2w[self.ib] = state.x_imputed[:, 1]

    def row_var(self, state: ParamState, eq: int) -> np.ndarray:
        return np.where(self.b_bool, state.sigma2[eq, 1], state.sigma2[eq, 0])


def _draw_mvn_canonical(rng: np.random.Generator, prec: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Draw from Normal(prec^-1 shift, prec^-1) via one Cholesky factor."""
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "coefficient-block precision matrix is not positive definite"
        ) from exc
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, shift))
    z = rng.standard_normal(prec.shape[0])
    return mean + np.linalg.solve(chol.T, z)


def draw_normal_block(
    rng: np.random.Generator,
    design: np.ndarray,
    lam: np.ndarray,
    response: np.ndarray,
    prior_prec: np.ndarray,
) -> np.ndarray:
    """One exact draw of a Gaussian coefficient block.

    Rows follow ``response_i ~ Normal(design_i . coef, 1 / lam_i)`` and each
    coefficient has an independent Normal(0, 1 / prior_prec_j) prior.  The
    full conditional is Normal(P^-1 b, P^-1) with

        P = diag(prior_prec) + design' diag(lam) design
        b = design' (lam * response)
    """
    design = np.asarray(design, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    prior_prec = np.asarray(prior_prec, dtype=np.float64)
    if design.ndim != 2:
        raise ConfigurationError(f"design must be 2-D, got shape {design.shape}")
    n, p = design.shape
    if lam.shape != (n,) or response.shape != (n,) or prior_prec.shape != (p,):
        raise ConfigurationError(
            "draw_normal_block shapes disagree: "
            f"design {design.shape}, lam {lam.shape}, response {response.shape}, "
            f"prior_prec {prior_prec.shape}"
        )
    if np.any(lam <= 0.0) or np.any(prior_prec <= 0.0):
        raise ConfigurationError("lam and prior_prec must be strictly positive")
    weighted = design * lam[:, None]
    prec = weighted.T @ design
    prec[np.diag_indices_from(prec)] += prior_prec
    shift = weighted.T @ response
    return _draw_mvn_canonical(rng, prec, shift)


def impute_exposures(
    rng: np.random.Generator, state: ParamState, ws: ChainWorkspace, mode: str
) -> None:
    """Redraw the study-B exposures; x1 first, then x2."""
    ib = ws.ib
    u_b = state.u[ib]
    for col, Zb, coefs, d_x, v_x, y, beta, d_y, v_y, eq_x, eq_y in (
        (0, ws.Z1b, np.concatenate((state.alpha1, state.alpha31)), state.delta[0],
         state.v[0], ws.data.y1[ib], state.beta[0], state.delta[2], state.v[2], 0, 2),
        (1, ws.Z2b, np.concatenate((state.alpha2, state.alpha32)), state.delta[1],
         state.v[1], ws.data.y2[ib], state.beta[1], state.delta[3], state.v[3], 1, 3),
    ):
        a = Zb @ coefs + d_x * u_b + v_x
        s2_x = state.sigma2[eq_x, 1]
        if mode == "exposure_only":
            draw = a + math.sqrt(s2_x) * rng.standard_normal(ws.n_b)
        else:
            s2_y = state.sigma2[eq_y, 1]
            prec = 1.0 / s2_x + beta**2 / s2_y
            mean = (a / s2_x + beta * (y - v_y - d_y * u_b) / s2_y) / prec
            draw = mean + rng.standard_normal(ws.n_b) / math.sqrt(prec)
        state.x_imputed[:, col] = draw
    ws.refresh_exposures(state)


def update_confounder(rng: np.random.Generator, state: ParamState, ws: ChainWorkspace) -> None:
    """Redraw ``u`` from its row-wise Gaussian full conditional."""
    data = ws.data
    c1 = np.concatenate((state.alpha1, state.alpha31))
    c2 = np.concatenate((state.alpha2, state.alpha32))
    resid = (
        ws.x1w - ws.Z1 @ c1 - state.v[0] * ws.is_b,
        ws.x2w - ws.Z2 @ c2 - state.v[1] * ws.is_b,
        data.y1 - state.beta[0] * ws.x1w - state.v[2] * ws.is_b,
        data.y2 - state.beta[1] * ws.x2w - state.v[3] * ws.is_b,
    )
    prec = np.ones(ws.n)
    shift = np.zeros(ws.n)
    for e in range(4):
        var = ws.row_var(state, e)
        prec += state.delta[e] ** 2 / var
        shift += state.delta[e] * resid[e] / var
    state.u = shift / prec + rng.standard_normal(ws.n) / np.sqrt(prec)


def _draw_exposure_block(
    rng: np.random.Generator,
    ws: ChainWorkspace,
    Z: np.ndarray,
    Ga: np.ndarray,
    Gb: np.ndarray,
    u: np.ndarray,
    response: np.ndarray,
    lam_a: float,
    lam_b: float,
    priors: PriorSpec,
) -> np.ndarray:
    """Draw (genotype coefficients, delta) for one exposure equation.

    The genotype block of the precision is lam_a * Ga + lam_b * Gb, so only
    the u row/column needs fresh n-row products each iteration.
    """
    p = Z.shape[1]
    lam = np.where(ws.b_bool, lam_b, lam_a)
    lu = lam * u
    lw = lam * response
    prec = np.empty((p + 1, p + 1))
    prec[:p, :p] = lam_a * Ga + lam_b * Gb
    zu = Z.T @ lu
    prec[:p, p] = zu
    prec[p, :p] = zu
    prec[p, p] = u @ lu
    diag = np.full(p + 1, priors.alpha_sd**-2)
    diag[p] = priors.delta_sd**-2
    prec[np.diag_indices_from(prec)] += diag
    shift = np.empty(p + 1)
    shift[:p] = Z.T @ lw
    shift[p] = u @ lw
    return _draw_mvn_canonical(rng, prec, shift)


def update_coefficients(
    rng: np.random.Generator, state: ParamState, ws: ChainWorkspace, priors: PriorSpec
) -> None:
    """Redraw all regression coefficients and the study-B intercepts."""
    n_z1 = state.alpha1.size
    n_z2 = state.alpha2.size

    coefs = _draw_exposure_block(
        rng, ws, ws.Z1, ws.G1a, ws.G1b, state.u, ws.x1w - state.v[0] * ws.is_b,
        1.0 / state.sigma2[0, 0], 1.0 / state.sigma2[0, 1], priors,
    )
    state.alpha1 = coefs[:n_z1]
    state.alpha31 = coefs[n_z1:-1]
    state.delta[0] = coefs[-1]

    coefs = _draw_exposure_block(
        rng, ws, ws.Z2, ws.G2a, ws.G2b, state.u, ws.x2w - state.v[1] * ws.is_b,
        1.0 / state.sigma2[1, 0], 1.0 / state.sigma2[1, 1], priors,
    )
    state.alpha2 = coefs[:n_z2]
    state.alpha32 = coefs[n_z2:-1]
    state.delta[1] = coefs[-1]

    for eq, xw, y, bi in ((2, ws.x1w, ws.data.y1, 0), (3, ws.x2w, ws.data.y2, 1)):
        design = np.column_stack((xw, state.u))
        lam = 1.0 / ws.row_var(state, eq)
        response = y - state.v[eq] * ws.is_b
        prior_prec = np.array([priors.beta_sd**-2, priors.delta_sd**-2])
        weighted = design * lam[:, None]
        prec = weighted.T @ design
        prec[np.diag_indices_from(prec)] += prior_prec
        draw = _draw_mvn_canonical(rng, prec, weighted.T @ response)
        state.beta[bi] = draw[0]
        state.delta[eq] = draw[1]

    # Study-B intercepts, one conjugate scalar draw per equation.
    ib = ws.ib
    u_b = state.u[ib]
    means_wo_v = (
        ws.Z1b @ np.concatenate((state.alpha1, state.alpha31)) + state.delta[0] * u_b,
        ws.Z2b @ np.concatenate((state.alpha2, state.alpha32)) + state.delta[1] * u_b,
        state.beta[0] * ws.x1w[ib] + state.delta[2] * u_b,
        state.beta[1] * ws.x2w[ib] + state.delta[3] * u_b,
    )
    observed = (ws.x1w[ib], ws.x2w[ib], ws.data.y1[ib], ws.data.y2[ib])
    for e in range(4):
        s2 = state.sigma2[e, 1]
        prec = priors.v_sd**-2 + ws.n_b / s2
        mean = np.sum(observed[e] - means_wo_v[e]) / s2 / prec
        state.v[e] = mean + rng.standard_normal() / math.sqrt(prec)


def _slice_sample(rng, logf, x0: float, width: float = 1.0, max_steps: int = 100) -> float:
    """Univariate slice sampler with stepping out (one update)."""
    logy = logf(x0) - rng.exponential()
    offset = rng.random()
    lo = x0 - width * offset
    hi = lo + width
    j = int(math.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and logf(lo) > logy:
        lo -= width
        j -= 1
    while k > 0 and logf(hi) > logy:
        hi += width
        k -= 1
    for _ in range(1000):
        x1 = lo + (hi - lo) * rng.random()
        if logf(x1) > logy:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1
    raise NumericalError("slice sampler failed to find an acceptable point")


def update_variances(
    rng: np.random.Generator, state: ParamState, ws: ChainWorkspace, priors: PriorSpec
) -> None:
    """Redraw the eight noise variances, equation-major, study A then B."""
    data = ws.data
    c1 = np.concatenate((state.alpha1, state.alpha31))
    c2 = np.concatenate((state.alpha2, state.alpha32))
    resid = (
        ws.x1w - ws.Z1 @ c1 - state.delta[0] * state.u - state.v[0] * ws.is_b,
        ws.x2w - ws.Z2 @ c2 - state.delta[1] * state.u - state.v[1] * ws.is_b,
        data.y1 - state.beta[0] * ws.x1w - state.delta[2] * state.u - state.v[2] * ws.is_b,
        data.y2 - state.beta[1] * ws.x2w - state.delta[3] * state.u - state.v[3] * ws.is_b,
    )
    for e in range(4):
        for s, rows in ((0, ws.ia), (1, ws.ib)):
            ssr = float(np.sum(resid[e][rows] ** 2))
            n_s = rows.size
            if priors.ig_target == "variance":
                shape = priors.ig_shape + 0.5 * n_s
                rate = priors.ig_rate + 0.5 * ssr
                g = rng.gamma(shape, 1.0 / rate)
                if g <= 0.0:
                    raise NumericalError(
                        f"variance draw underflowed for sigma2[{e},{s}]"
                    )
                state.sigma2[e, s] = 1.0 / g
            else:
                # Slice step on t = log(sd); the Jacobian folds into the -n_s
                # and prior exponents: log f(t) = -(n_s + shape) t
                #   - ssr exp(-2t) / 2 - rate exp(-t).
                a, b = priors.ig_shape, priors.ig_rate

                def logf(t: float, _n=n_s, _ssr=ssr, _a=a, _b=b) -> float:
                    return -(_n + _a) * t - 0.5 * _ssr * math.exp(-2.0 * t) - _b * math.exp(-t)

                t0 = 0.5 * math.log(state.sigma2[e, s])
                t1 = _slice_sample(rng, logf, t0, width=0.5)
                state.sigma2[e, s] = math.exp(2.0 * t1)


def initial_state(
    data: CombinedDataset,
    priors: PriorSpec,
    mcmc: McmcConfig,
    rng: np.random.Generator,
) -> ParamState:
    """Build the starting state for one chain.

    ``least_squares`` regresses each study-A equation on its design (no
    confounder), seeds the variances from those residuals, draws ``u`` from
    its prior, and fills the missing exposures with their fitted means.
    ``prior`` draws every component from the prior, imputing exposures from
    their equation given the drawn parameters.  ``truth`` starts at the
    generating values and needs a dataset that carries them.
    """
    n_z1 = data.z1.shape[1]
    n_z2 = data.z2.shape[1]
    n_z3 = data.z3.shape[1]
    ws = ChainWorkspace(data)

    if mcmc.init == "least_squares":
        x1_a = data.x1[ws.ia]
        x2_a = data.x2[ws.ia]
        c1, _, _, _ = np.linalg.lstsq(ws.Z1[ws.ia], x1_a, rcond=None)
        c2, _, _, _ = np.linalg.lstsq(ws.Z2[ws.ia], x2_a, rcond=None)
        b1, _, _, _ = np.linalg.lstsq(x1_a[:, None], data.y1[ws.ia], rcond=None)
        b2, _, _, _ = np.linalg.lstsq(x2_a[:, None], data.y2[ws.ia], rcond=None)
        var_x1 = max(float(np.mean((x1_a - ws.Z1[ws.ia] @ c1) ** 2)), _VAR_FLOOR)
        var_x2 = max(float(np.mean((x2_a - ws.Z2[ws.ia] @ c2) ** 2)), _VAR_FLOOR)
        var_y1 = max(float(np.mean((data.y1[ws.ia] - b1[0] * x1_a) ** 2)), _VAR_FLOOR)
        var_y2 = max(float(np.mean((data.y2[ws.ia] - b2[0] * x2_a) ** 2)), _VAR_FLOOR)
        sigma2 = np.repeat(np.array([[var_x1], [var_x2], [var_y1], [var_y2]]), 2, axis=1)
        x_imputed = np.column_stack((ws.Z1b @ c1, ws.Z2b @ c2))
        return ParamState(
            beta=np.array([float(b1[0]), float(b2[0])]),
            alpha1=c1[:n_z1].copy(),
            alpha2=c2[:n_z2].copy(),
            alpha31=c1[n_z1:].copy(),
            alpha32=c2[n_z2:].copy(),
            delta=np.zeros(4),
            sigma2=sigma2,
            v=np.zeros(4),
            u=rng.standard_normal(data.n),
            x_imputed=x_imputed,
        )

    if mcmc.init == "prior":
        beta = priors.beta_sd * rng.standard_normal(2)
        alpha1 = priors.alpha_sd * rng.standard_normal(n_z1)
        alpha2 = priors.alpha_sd * rng.standard_normal(n_z2)
        alpha31 = priors.alpha_sd * rng.standard_normal(n_z3)
        alpha32 = priors.alpha_sd * rng.standard_normal(n_z3)
        delta = priors.delta_sd * rng.standard_normal(4)
        scale_draws = 1.0 / rng.gamma(priors.ig_shape, 1.0 / priors.ig_rate, size=8)
        if priors.ig_target == "sd":
            scale_draws = scale_draws**2
        sigma2 = scale_draws.reshape(4, 2)
        v = priors.v_sd * rng.standard_normal(4)
        u = rng.standard_normal(data.n)
        u_b = u[ws.ib]
        a1 = ws.Z1b @ np.concatenate((alpha1, alpha31)) + delta[0] * u_b + v[0]
        a2 = ws.Z2b @ np.concatenate((alpha2, alpha32)) + delta[1] * u_b + v[1]
        x1_imp = a1 + math.sqrt(sigma2[0, 1]) * rng.standard_normal(ws.n_b)
        x2_imp = a2 + math.sqrt(sigma2[1, 1]) * rng.standard_normal(ws.n_b)
        return ParamState(
            beta=beta,
            alpha1=alpha1,
            alpha2=alpha2,
            alpha31=alpha31,
            alpha32=alpha32,
            delta=delta,
            sigma2=sigma2,
            v=v,
            u=u,
            x_imputed=np.column_stack((x1_imp, x2_imp)),
        )

    truth = data.truth
    if truth is None:
        raise ConfigurationError("init='truth' needs a dataset that carries its truth")
    cfg = truth.config
    sigma2 = np.full((4, 2), max(cfg.sigma**2, _VAR_FLOOR))
    return ParamState(
        beta=np.array([cfg.beta1, cfg.beta2]),
        alpha1=np.full(n_z1, cfg.iv_strength),
        alpha2=np.full(n_z2, cfg.iv_strength),
        alpha31=np.full(n_z3, cfg.iv_strength),
        alpha32=np.full(n_z3, cfg.iv_strength),
        delta=np.full(4, cfg.delta),
        sigma2=sigma2,
        v=truth.v.copy(),
        u=truth.u.copy(),
        x_imputed=np.column_stack((truth.x1_hidden, truth.x2_hidden)),
    )


def _check_finite(block: str, iteration: int, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalError(
                f"non-finite values after the {block} update at iteration {iteration}"
            )


def run_chain(data: CombinedDataset, priors: PriorSpec, mcmc: McmcConfig) -> PosteriorDraws:
    """Run one chain and return the kept draws.

    Draws are recorded at iterations burn_in, burn_in + thin, ... (after the
    full scan for that iteration).  Raises
    :class:`~bayesmr.errors.NumericalError` if any update produces
    non-finite values.
    """
    names = param_names(data.z1.shape[1], data.z2.shape[1], data.z3.shape[1])
    rng = np.random.default_rng(mcmc.seed)
    ws = ChainWorkspace(data)
    state = initial_state(data, priors, mcmc, rng)
    ws.refresh_exposures(state)

    kept = np.empty((mcmc.n_kept, len(names)))
    k = 0
    for it in range(mcmc.n_iter):
        impute_exposures(rng, state, ws, mcmc.imputation)
        _check_finite("imputation", it, state.x_imputed)
        update_confounder(rng, state, ws)
        _check_finite("confounder", it, state.u)
        update_coefficients(rng, state, ws, priors)
        _check_finite(
            "coefficient", it, state.beta, state.alpha1, state.alpha2,
            state.alpha31, state.alpha32, state.delta, state.v,
        )
        update_variances(rng, state, ws, priors)
        _check_finite("variance", it, state.sigma2)
        if it >= mcmc.burn_in and (it - mcmc.burn_in) % mcmc.thin == 0:
            kept[k] = state.flatten()
            k += 1
    return PosteriorDraws(names=names, draws=kept)
