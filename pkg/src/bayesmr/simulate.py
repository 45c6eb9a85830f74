"""Synthetic data generation for the two-study design.

The draw order from the seeded generator is fixed and documented so that a
given :class:`~bayesmr.model.SimConfig` always yields the same dataset:

1. study-B intercepts ``v`` (4 uniforms),
2. genotype counts for all rows, one binomial block of shape
   ``(n_total, n_z1 + n_z2 + n_z3)``,
3. confounder ``u`` (``n_total`` standard normals),
4. exposure noise, one standard-normal vector per exposure (x1 then x2),
5. outcome noise, one standard-normal vector per outcome (y1 then y2).

Rows 0 .. n_observed-1 are study A; the remaining rows are study B.  All
true genotype coefficients equal ``iv_strength`` and all four confounder
loadings equal ``delta``.
"""

from __future__ import annotations

import numpy as np

from .model import CombinedDataset, DatasetTruth, SimConfig


def draw_random_effects(rng: np.random.Generator, config: SimConfig) -> np.ndarray:
    """Study-B intercepts for (x1, x2, y1, y2), iid uniform on [v_low, v_high]."""
    return rng.uniform(config.v_low, config.v_high, size=4)


def simulate(config: SimConfig) -> CombinedDataset:
    """Generate one combined dataset; the truth travels with it."""
    rng = np.random.default_rng(config.seed)
    n = config.n_total
    n_a = config.n_observed
    n_b = config.n_missing
    n_iv = config.n_z1 + config.n_z2 + config.n_z3

    v = draw_random_effects(rng, config)
    z = rng.binomial(2, config.maf, size=(n, n_iv))
    u = rng.standard_normal(n)
    ex1 = rng.standard_normal(n)
    ex2 = rng.standard_normal(n)
    ey1 = rng.standard_normal(n)
    ey2 = rng.standard_normal(n)

    z1 = z[:, : config.n_z1]
    z2 = z[:, config.n_z1 : config.n_z1 + config.n_z2]
    z3 = z[:, config.n_z1 + config.n_z2 :]

    is_b = np.zeros(n)
    is_b[n_a:] = 1.0

    alpha1 = np.full(config.n_z1, config.iv_strength)
    alpha2 = np.full(config.n_z2, config.iv_strength)
    alpha3 = np.full(config.n_z3, config.iv_strength)

    x1 = z1 @ alpha1 + z3 @ alpha3 + config.delta * u + v[0] * is_b + config.sigma * ex1
    x2 = z2 @ alpha2 + z3 @ alpha3 + config.delta * u + v[1] * is_b + config.sigma * ex2
    y1 = config.beta1 * x1 + config.delta * u + v[2] * is_b + config.sigma * ey1
    y2 = config.beta2 * x2 + config.delta * u + v[3] * is_b + config.sigma * ey2

    truth = DatasetTruth(
        config=config,
        v=v,
        u=u,
        x1_hidden=x1[n_a:].copy(),
        x2_hidden=x2[n_a:].copy(),
    )

    x1_obs = x1.copy()
    x2_obs = x2.copy()
    x1_obs[n_a:] = np.nan
    x2_obs[n_a:] = np.nan
    study = np.array(["A"] * n_a + ["B"] * n_b, dtype="U1")

    return CombinedDataset(
        study=study,
        z1=z1,
        z2=z2,
        z3=z3,
        x1=x1_obs,
        x2=x2_obs,
        y1=y1,
        y2=y2,
        truth=truth,
    )
