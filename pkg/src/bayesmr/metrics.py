"""Posterior summaries, replication scoring, and 2-D kernel densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import PosteriorDraws

MIN_SUMMARY_DRAWS = 100


@dataclass(frozen=True)
class ParamSummary:
    """Location, spread, and equal-tailed credible interval of one column."""

    name: str
    mean: float
    sd: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class MetricsRow:
    """Replication-level scores for one estimator and one target.

    ``power`` is the fraction of intervals excluding zero and is only
    defined when the true value is nonzero; otherwise it is None.
    """

    target: str
    method: str
    n_replicates: int
    mean: float
    sd: float
    coverage: float
    power: float | None


@dataclass(frozen=True)
class DensityGrid:
    """Kernel density evaluated on a rectangular grid.

    ``values[i, j]`` is the density at ``(x[i], y[j])``.
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    bandwidth: tuple[float, float]

    def mode(self) -> tuple[float, float]:
        """Grid point with the highest density (first one on ties)."""
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.x[i]), float(self.y[j])


def summarize(draws: PosteriorDraws, name: str, ci_level: float = 0.95) -> ParamSummary:
    """Mean, sd, and equal-tailed interval for one parameter column.

    Requires at least MIN_SUMMARY_DRAWS draws so the interval endpoints are
    not dominated by interpolation between a handful of order statistics.
    """
    if not 0.0 < ci_level < 1.0:
        raise ConfigurationError(f"ci_level must lie in (0, 1), got {ci_level}")
    if draws.n_draws < MIN_SUMMARY_DRAWS:
        raise ConfigurationError(
            f"summarize needs at least {MIN_SUMMARY_DRAWS} draws, got {draws.n_draws}"
        )
    col = draws.column(name)
    if not np.all(np.isfinite(col)):
        raise ConfigurationError(f"draws for {name!r} contain non-finite values")
    tail = 100.0 * (1.0 - ci_level) / 2.0
    lo, hi = np.percentile(col, [tail, 100.0 - tail])
    return ParamSummary(
        name=name,
        mean=float(np.mean(col)),
        sd=float(np.std(col, ddof=1)),
        ci_low=float(lo),
        ci_high=float(hi),
    )


def score_replicates(
    target: str,
    method: str,
    estimates: np.ndarray,
    ci_lows: np.ndarray,
    ci_highs: np.ndarray,
    truth: float,
) -> MetricsRow:
    """Score one estimator across replicates against the generating value.

    Coverage counts closed intervals containing ``truth``; power counts
    intervals excluding zero (reported only when ``truth`` is nonzero).
    """
    est = np.asarray(estimates, dtype=np.float64)
    lo = np.asarray(ci_lows, dtype=np.float64)
    hi = np.asarray(ci_highs, dtype=np.float64)
    if not est.shape == lo.shape == hi.shape or est.ndim != 1:
        raise ConfigurationError(
            f"estimates/ci_lows/ci_highs must be equal-length vectors, got "
            f"{est.shape}, {lo.shape}, {hi.shape}"
        )
    if est.size < 2:
        raise ConfigurationError(f"scoring needs at least 2 replicates, got {est.size}")
    coverage = float(np.mean((lo <= truth) & (truth <= hi)))
    power = None if truth == 0.0 else float(np.mean((lo > 0.0) | (hi < 0.0)))
    return MetricsRow(
        target=target,
        method=method,
        n_replicates=int(est.size),
        mean=float(np.mean(est)),
        sd=float(np.std(est, ddof=1)),
        coverage=coverage,
        power=power,
    )


def scott_bandwidth(values: np.ndarray) -> float:
    """Per-dimension rule-of-thumb bandwidth n**(-1/6) * sd for a 2-D kde."""
    sd = float(np.std(values, ddof=1))
    return values.size ** (-1.0 / 6.0) * sd


def gkde2d(
    x: np.ndarray,
    y: np.ndarray,
    grid_x: np.ndarray | None = None,
    grid_y: np.ndarray | None = None,
    n_grid: int = 100,
    _chunk: int = 16384,
) -> DensityGrid:
    """Product-Gaussian kernel density of (x, y) samples on a grid.

    Bandwidths follow the diagonal rule of thumb for two dimensions.  When
    a grid is not supplied it spans the sample range padded by three
    bandwidths.  The kernel separates over the axes, so the grid is filled
    with matrix products over sample chunks rather than a triple loop.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ConfigurationError(
            f"x and y must be equal-length vectors, got {x.shape} and {y.shape}"
        )
    n = x.size
    if n < 2:
        raise ConfigurationError(f"kde needs at least 2 samples, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ConfigurationError("kde samples must be finite")
    hx = scott_bandwidth(x)
    hy = scott_bandwidth(y)
    if hx <= 0.0 or hy <= 0.0:
        raise ConfigurationError(
            "kde samples are constant along one axis; add jitter or check the draws"
        )
    if grid_x is None:
        grid_x = np.linspace(x.min() - 3.0 * hx, x.max() + 3.0 * hx, n_grid)
    else:
        grid_x = np.asarray(grid_x, dtype=np.float64)
    if grid_y is None:
        grid_y = np.linspace(y.min() - 3.0 * hy, y.max() + 3.0 * hy, n_grid)
    else:
        grid_y = np.asarray(grid_y, dtype=np.float64)

    norm = 1.0 / (2.0 * math.pi * hx * hy * n)
    values = np.zeros((grid_x.size, grid_y.size))
    for start in range(0, n, _chunk):
        xs = x[start : start + _chunk]
        ys = y[start : start + _chunk]
        kx = np.exp(-0.5 * ((grid_x[:, None] - xs[None, :]) / hx) ** 2)
        ky = np.exp(-0.5 * ((ys[:, None] - grid_y[None, :]) / hy) ** 2)
        values += kx @ ky
    return DensityGrid(x=grid_x, y=grid_y, values=values * norm, bandwidth=(hx, hy))
