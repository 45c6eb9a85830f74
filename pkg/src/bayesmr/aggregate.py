"""Divide-and-combine posterior inference on row subsets.

A large combined dataset is split into J subsets that each preserve the
study-A / study-B ratio, every subset gets its own full-length chain, and
the subset posteriors are pooled after recentring each one on the average
of the subset means:

    shifted_j = draws_j + (mean of subset means - subset mean j)

The pooled draws therefore have column means equal to the grand mean by
construction, while spread and correlation come from the subset chains.
The gap between the aggregated mean and a full-data posterior mean shrinks
as subsets get larger, which is the regime where splitting is worthwhile.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .gibbs import McmcConfig, run_chain
from .model import CombinedDataset, PosteriorDraws, PriorSpec
from .parallel import run_tasks
from .seeding import derive_seed


@dataclass(frozen=True)
class SubsetPosterior:
    """Draws from one subset's chain plus the subset's size and position."""

    index: int
    n_rows: int
    draws: PosteriorDraws


@dataclass(frozen=True)
class AggregatedPosterior:
    """Pooled recentred draws plus the per-subset means they came from."""

    draws: PosteriorDraws
    subset_means: np.ndarray
    grand_mean: np.ndarray


def _take_rows(data: CombinedDataset, rows: np.ndarray) -> CombinedDataset:
    return CombinedDataset(
        study=data.study[rows],
        z1=data.z1[rows],
        z2=data.z2[rows],
        z3=data.z3[rows],
        x1=data.x1[rows],
        x2=data.x2[rows],
        y1=data.y1[rows],
        y2=data.y2[rows],
        truth=None,
    )


def partition(data: CombinedDataset, n_subsets: int, seed: int) -> list[CombinedDataset]:
    """Split rows into ``n_subsets`` pieces with the per-study mix intact.

    Rows of each study are shuffled once and dealt round-robin, so every
    subset gets exactly n_A / J study-A rows and n_B / J study-B rows; both
    counts must divide evenly.  With ``n_subsets == 1`` the dataset is
    returned as is.  Subset rows keep their original relative order and the
    generating truth is not carried over.
    """
    if n_subsets < 1:
        raise ConfigurationError(f"n_subsets must be at least 1, got {n_subsets}")
    if n_subsets == 1:
        return [data]
    n_a, n_b = data.n_a, data.n_b
    if n_a % n_subsets or n_b % n_subsets:
        raise ConfigurationError(
            f"cannot split rows evenly into {n_subsets} subsets: "
            f"n_A={n_a}, n_B={n_b} must both be divisible by {n_subsets}"
        )
    rng = np.random.default_rng(seed)
    a_order = rng.permutation(np.flatnonzero(~data.b_mask))
    b_order = rng.permutation(np.flatnonzero(data.b_mask))
    out = []
    for j in range(n_subsets):
        rows = np.sort(np.concatenate((a_order[j::n_subsets], b_order[j::n_subsets])))
        out.append(_take_rows(data, rows))
    return out


def _fit_subset(task: tuple[int, CombinedDataset, PriorSpec, McmcConfig]) -> SubsetPosterior:
    index, subset, priors, mcmc = task
    return SubsetPosterior(index=index, n_rows=subset.n, draws=run_chain(subset, priors, mcmc))


def fit_partitioned(
    data: CombinedDataset,
    priors: PriorSpec,
    mcmc: McmcConfig,
    n_subsets: int,
    max_workers: int | None = None,
) -> list[SubsetPosterior]:
    """Partition, then run one chain per subset.

    The partition shuffle and each subset's chain get seeds derived from
    ``mcmc.seed`` and the subset count, so results do not depend on the
    worker count and do not collide with a full-data chain using the same
    seed.
    """
    subsets = partition(data, n_subsets, derive_seed(mcmc.seed, "partition", n_subsets))
    tasks = [
        (j, subset, priors, replace(mcmc, seed=derive_seed(mcmc.seed, "subset", n_subsets, j)))
        for j, subset in enumerate(subsets)
    ]
    return run_tasks(_fit_subset, tasks, max_workers)


def aggregate_subsets(subsets: list[SubsetPosterior]) -> AggregatedPosterior:
    """Recentre each subset's draws on the grand mean and pool them."""
    if not subsets:
        raise ConfigurationError("aggregation needs at least one subset posterior")
    names = subsets[0].draws.names
    n_kept = subsets[0].draws.n_draws
    for sub in subsets[1:]:
        if sub.draws.names != names:
            raise ConfigurationError("subset posteriors disagree on parameter names")
        if sub.draws.n_draws != n_kept:
            raise ConfigurationError(
                "subset posteriors must hold the same number of draws, got "
                f"{n_kept} and {sub.draws.n_draws}"
            )
    means = np.vstack([sub.draws.draws.mean(axis=0) for sub in subsets])
    grand = means.mean(axis=0)
    pooled = np.vstack([sub.draws.draws + (grand - means[j]) for j, sub in enumerate(subsets)])
    return AggregatedPosterior(
        draws=PosteriorDraws(names=names, draws=pooled),
        subset_means=means,
        grand_mean=grand,
    )
