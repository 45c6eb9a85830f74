"""Two-sample inverse-variance weighted estimator.

Per-variant associations are simple linear regressions with an intercept:
the exposure side uses study-A rows (where exposures are observed), the
outcome side uses study-B rows, so the two sides come from disjoint
samples.  Exposure 1 is instrumented by its own variants plus the shared
ones (z1 and z3 columns); exposure 2 by z2 and z3.

With per-variant exposure slope a_k, outcome slope g_k, and outcome
standard error s_k, the combined estimate is

    estimate = sum(a_k g_k / s_k^2) / sum(a_k^2 / s_k^2)
    se = sqrt(1 / sum(a_k^2 / s_k^2))

and the 95% interval is estimate +/- 1.96 se.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import CombinedDataset

# Guards against a zero outcome standard error (exactly collinear data).
SE_FLOOR = 1e-12

_Z95 = 1.96


@dataclass(frozen=True)
class IvAssoc:
    """Marginal associations of one variant with exposure and outcome."""

    name: str
    exposure_effect: float
    exposure_se: float
    outcome_effect: float
    outcome_se: float


@dataclass(frozen=True)
class IvwResult:
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    n_iv: int


def marginal_assoc(genotype: np.ndarray, trait: np.ndarray) -> tuple[float, float]:
    """Slope and its standard error from a one-variant regression.

    Fits trait ~ intercept + genotype by least squares.  Needs at least
    three observations and a non-constant genotype.
    """
    g = np.asarray(genotype, dtype=np.float64)
    t = np.asarray(trait, dtype=np.float64)
    n = g.shape[0]
    if n < 3:
        raise ConfigurationError(f"marginal association needs at least 3 rows, got {n}")
    gc = g - g.mean()
    sxx = float(gc @ gc)
    if sxx == 0.0:
        raise ConfigurationError("genotype column is constant; no association is defined")
    slope = float(gc @ t) / sxx
    fitted = t.mean() + slope * gc
    rss = float(np.sum((t - fitted) ** 2))
    se = math.sqrt(rss / (n - 2) / sxx)
    return slope, se


def iv_associations(data: CombinedDataset, target: str) -> list[IvAssoc]:
    """Per-variant two-sample associations for one causal effect.

    ``target`` is "beta1" or "beta2".  Variants that are constant in either
    study are skipped with a warning.
    """
    if target == "beta1":
        blocks = (("z1", data.z1), ("z3", data.z3))
        exposure, outcome = data.x1, data.y1
    elif target == "beta2":
        blocks = (("z2", data.z2), ("z3", data.z3))
        exposure, outcome = data.x2, data.y2
    else:
        raise ConfigurationError(f"target must be 'beta1' or 'beta2', got {target!r}")

    a_rows = ~data.b_mask
    b_rows = data.b_mask
    out = []
    for label, z in blocks:
        for j in range(z.shape[1]):
            name = f"{label}_{j + 1}"
            col = z[:, j].astype(np.float64)
            try:
                a_hat, a_se = marginal_assoc(col[a_rows], exposure[a_rows])
                g_hat, g_se = marginal_assoc(col[b_rows], outcome[b_rows])
            except ConfigurationError as exc:
                warnings.warn(f"skipping variant {name}: {exc}", stacklevel=2)
                continue
            out.append(
                IvAssoc(
                    name=name,
                    exposure_effect=a_hat,
                    exposure_se=a_se,
                    outcome_effect=g_hat,
                    outcome_se=g_se,
                )
            )
    return out


def ivw(assocs: list[IvAssoc]) -> IvwResult:
    """Combine per-variant associations into one causal estimate."""
    if not assocs:
        raise ConfigurationError("IVW needs at least one usable variant")
    a = np.array([s.exposure_effect for s in assocs])
    g = np.array([s.outcome_effect for s in assocs])
    se = np.maximum([s.outcome_se for s in assocs], SE_FLOOR)
    w = 1.0 / se**2
    denom = float(np.sum(a**2 * w))
    if denom <= 0.0:
        raise ConfigurationError("IVW weights degenerate: all exposure effects are zero")
    estimate = float(np.sum(a * g * w)) / denom
    se_est = 1.0 / math.sqrt(denom)
    return IvwResult(
        estimate=estimate,
        se=se_est,
        ci_low=estimate - _Z95 * se_est,
        ci_high=estimate + _Z95 * se_est,
        n_iv=len(assocs),
    )


def ivw_from_dataset(data: CombinedDataset, target: str) -> IvwResult:
    """Associations plus pooling in one call."""
    return ivw(iv_associations(data, target))
