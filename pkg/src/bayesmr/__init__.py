"""Two-study Bayesian causal-effect estimation with missing exposures.

The package bundles a blocked Gibbs sampler that imputes unobserved
exposures inside the chain, a two-sample inverse-variance weighted
baseline, subset-posterior aggregation for large datasets, and a
simulation harness that scores both estimators over replicated data.
"""

from .aggregate import (
    AggregatedPosterior,
    SubsetPosterior,
    aggregate_subsets,
    fit_partitioned,
    partition,
)
from .dataio import load_dataset, load_draws, save_dataset, save_draws
from .errors import BayesmrError, ConfigurationError, NumericalError
from .gibbs import McmcConfig, draw_normal_block, run_chain
from .harness import (
    ContourResult,
    ContourStudyConfig,
    ExperimentConfig,
    StudyResult,
    run_large_study,
    run_study,
)
from .ivw import IvAssoc, IvwResult, iv_associations, ivw, ivw_from_dataset, marginal_assoc
from .metrics import (
    DensityGrid,
    MetricsRow,
    ParamSummary,
    gkde2d,
    score_replicates,
    summarize,
)
from .model import (
    CombinedDataset,
    DatasetTruth,
    ParamState,
    PosteriorDraws,
    PriorSpec,
    SimConfig,
    log_joint,
    param_names,
)
from .seeding import derive_seed
from .simulate import simulate

__version__ = "0.1.0"

__all__ = [
    "AggregatedPosterior",
    "BayesmrError",
    "CombinedDataset",
    "ConfigurationError",
    "ContourResult",
    "ContourStudyConfig",
    "DatasetTruth",
    "DensityGrid",
    "ExperimentConfig",
    "IvAssoc",
    "IvwResult",
    "McmcConfig",
    "MetricsRow",
    "NumericalError",
    "ParamState",
    "ParamSummary",
    "PosteriorDraws",
    "PriorSpec",
    "SimConfig",
    "StudyResult",
    "SubsetPosterior",
    "aggregate_subsets",
    "derive_seed",
    "draw_normal_block",
    "fit_partitioned",
    "gkde2d",
    "iv_associations",
    "ivw",
    "ivw_from_dataset",
    "load_dataset",
    "load_draws",
    "log_joint",
    "marginal_assoc",
    "param_names",
    "partition",
    "run_chain",
    "run_large_study",
    "run_study",
    "save_dataset",
    "save_draws",
    "score_replicates",
    "simulate",
    "summarize",
    "__version__",
]
