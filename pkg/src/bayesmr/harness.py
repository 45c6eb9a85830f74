"""Replicated simulation studies and the large-sample contour study.

``run_study`` sweeps a grid of generating configurations, runs the chain
and the inverse-variance baseline on fresh data for every replicate, and
scores both against the generating values.  ``run_large_study`` fits one
large dataset in full and through subset posteriors, then lays kernel
density grids over the causal-effect draws.

Every random stream is derived from the master seed and task labels, and
parallel results are merged in task order, so outputs are byte-identical
across runs and worker counts.  Wall-clock timings go to a separate
``timings.json`` to keep every other output file stable.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .aggregate import aggregate_subsets, fit_partitioned
from .errors import ConfigurationError, NumericalError
from .gibbs import McmcConfig, run_chain
from .ivw import ivw_from_dataset
from .metrics import DensityGrid, MetricsRow, gkde2d, score_replicates, scott_bandwidth, summarize
from .model import PosteriorDraws, PriorSpec, SimConfig
from .parallel import run_tasks
from .seeding import derive_seed
from .simulate import simulate

TARGETS = ("beta1", "beta2")
METHODS = ("bayes", "ivw")

REPLICATE_COLUMNS = (
    "missing_rate", "iv_strength", "beta_true", "replicate",
    "method", "target", "estimate", "ci_low", "ci_high",
)
METRICS_COLUMNS = (
    "missing_rate", "iv_strength", "beta_true", "method", "target",
    "n_replicates", "mean", "sd", "coverage", "power",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid of generating configurations for a replicated study."""

    missing_rates: tuple[float, ...] = (0.2, 0.5, 0.8)
    iv_strengths: tuple[float, ...] = (0.1, 0.3)
    betas: tuple[float, ...] = (0.3,)
    n_total: int = 400
    n_replicates: int = 50
    n_iter: int = 5000
    burn_in: int = 1000
    imputation: str = "full_conditional"
    ig_target: str = "variance"
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.missing_rates and self.iv_strengths and self.betas):
            raise ConfigurationError("every grid axis needs at least one value")
        if self.n_replicates < 2:
            raise ConfigurationError(
                f"n_replicates must be at least 2, got {self.n_replicates}"
            )

    def cells(self) -> list["StudyCell"]:
        return [
            StudyCell(missing_rate=m, iv_strength=a, beta=b)
            for m in self.missing_rates
            for a in self.iv_strengths
            for b in self.betas
        ]


@dataclass(frozen=True)
class StudyCell:
    missing_rate: float
    iv_strength: float
    beta: float


@dataclass(frozen=True)
class ReplicateRecord:
    cell: StudyCell
    replicate: int
    method: str
    target: str
    estimate: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ReplicateFailure:
    cell: StudyCell
    replicate: int
    error: str


@dataclass(frozen=True)
class StudyResult:
    metrics: tuple[tuple[StudyCell, MetricsRow], ...]
    records: tuple[ReplicateRecord, ...]
    failures: tuple[ReplicateFailure, ...]


@dataclass(frozen=True)
class _ReplicateTask:
    cell: StudyCell
    replicate: int
    n_total: int
    n_iter: int
    burn_in: int
    imputation: str
    ig_target: str
    sim_seed: int
    chain_seed: int


def _run_replicate(task: _ReplicateTask) -> list[ReplicateRecord] | ReplicateFailure:
    try:
        data = simulate(
            SimConfig(
                n_total=task.n_total,
                missing_rate=task.cell.missing_rate,
                iv_strength=task.cell.iv_strength,
                beta1=task.cell.beta,
                beta2=task.cell.beta,
                seed=task.sim_seed,
            )
        )
        draws = run_chain(
            data,
            PriorSpec(ig_target=task.ig_target),
            McmcConfig(
                n_iter=task.n_iter,
                burn_in=task.burn_in,
                imputation=task.imputation,
                seed=task.chain_seed,
            ),
        )
        records = []
        for target in TARGETS:
            s = summarize(draws, target)
            records.append(
                ReplicateRecord(task.cell, task.replicate, "bayes", target,
                                s.mean, s.ci_low, s.ci_high)
            )
        for target in TARGETS:
            r = ivw_from_dataset(data, target)
            records.append(
                ReplicateRecord(task.cell, task.replicate, "ivw", target,
                                r.estimate, r.ci_low, r.ci_high)
            )
        return records
    except (ConfigurationError, NumericalError) as exc:
        return ReplicateFailure(task.cell, task.replicate, str(exc))


def compute_metrics(records: list[ReplicateRecord]) -> list[tuple[StudyCell, MetricsRow]]:
    """Group replicate records and score each (cell, method, target) group.

    Groups with fewer than two surviving replicates are dropped; the caller
    sees those through the failure list.
    """
    groups: dict[tuple[StudyCell, str, str], list[ReplicateRecord]] = {}
    for rec in records:
        groups.setdefault((rec.cell, rec.method, rec.target), []).append(rec)
    out = []
    for (cell, method, target), group in groups.items():
        if len(group) < 2:
            continue
        row = score_replicates(
            target,
            method,
            np.array([g.estimate for g in group]),
            np.array([g.ci_low for g in group]),
            np.array([g.ci_high for g in group]),
            truth=cell.beta,
        )
        out.append((cell, row))
    return out


def _fmt(value: float | int | str | None) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_tsv(path: str | os.PathLike[str], header: tuple[str, ...], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def write_replicates(records: list[ReplicateRecord], path: str | os.PathLike[str]) -> None:
    rows = [
        [r.cell.missing_rate, r.cell.iv_strength, r.cell.beta, r.replicate,
         r.method, r.target, r.estimate, r.ci_low, r.ci_high]
        for r in records
    ]
    _write_tsv(path, REPLICATE_COLUMNS, rows)


def read_replicates(path: str | os.PathLike[str]) -> list[ReplicateRecord]:
    """Read a replicate TSV written by :func:`write_replicates`."""
    with open(path) as fh:
        header = tuple(fh.readline().rstrip("\n").split("\t"))
        if header != REPLICATE_COLUMNS:
            raise ConfigurationError(
                f"{path}: expected columns {REPLICATE_COLUMNS}, found {header}"
            )
        records = []
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != len(REPLICATE_COLUMNS):
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {len(REPLICATE_COLUMNS)} fields"
                )
            try:
                cell = StudyCell(float(fields[0]), float(fields[1]), float(fields[2]))
                records.append(
                    ReplicateRecord(cell, int(fields[3]), fields[4], fields[5],
                                    float(fields[6]), float(fields[7]), float(fields[8]))
                )
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: cannot parse row") from None
    if not records:
        raise ConfigurationError(f"{path}: no replicate rows")
    return records


def write_metrics(
    metrics: list[tuple[StudyCell, MetricsRow]], path: str | os.PathLike[str]
) -> None:
    rows = [
        [cell.missing_rate, cell.iv_strength, cell.beta, m.method, m.target,
         m.n_replicates, m.mean, m.sd, m.coverage, m.power]
        for cell, m in metrics
    ]
    _write_tsv(path, METRICS_COLUMNS, rows)


def _package_version() -> str:
    try:
        return version("bayesmr")
    except PackageNotFoundError:
        return "unknown"


def run_study(
    config: ExperimentConfig,
    out_dir: str | os.PathLike[str] | None = None,
    max_workers: int | None = None,
) -> StudyResult:
    """Run the replicated study; write TSV and manifest files when asked.

    Replicates that fail numerically are reported in the result (and the
    manifest) and left out of the scores rather than aborting the sweep.
    """
    t0 = time.perf_counter()
    tasks = [
        _ReplicateTask(
            cell=cell,
            replicate=r,
            n_total=config.n_total,
            n_iter=config.n_iter,
            burn_in=config.burn_in,
            imputation=config.imputation,
            ig_target=config.ig_target,
            sim_seed=derive_seed(config.master_seed, "sim", ci, r),
            chain_seed=derive_seed(config.master_seed, "chain", ci, r),
        )
        for ci, cell in enumerate(config.cells())
        for r in range(config.n_replicates)
    ]
    outcomes = run_tasks(_run_replicate, tasks, max_workers)

    records: list[ReplicateRecord] = []
    failures: list[ReplicateFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, ReplicateFailure):
            failures.append(outcome)
        else:
            records.extend(outcome)
    metrics = compute_metrics(records)
    result = StudyResult(
        metrics=tuple(metrics), records=tuple(records), failures=tuple(failures)
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_replicates(records, out / "replicates.tsv")
        write_metrics(metrics, out / "metrics.tsv")
        manifest = {
            "kind": "replicated-study",
            "package_version": _package_version(),
            "config": asdict(config),
            "n_tasks": len(tasks),
            "n_failures": len(failures),
            "failures": [
                {"cell": asdict(f.cell), "replicate": f.replicate, "error": f.error}
                for f in failures
            ],
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        with open(out / "timings.json", "w") as fh:
            json.dump({"wall_seconds": time.perf_counter() - t0}, fh, indent=1)
            fh.write("\n")
    return result


@dataclass(frozen=True)
class ContourStudyConfig:
    """One large dataset per beta value, fitted in full and in subsets."""

    n_total: int = 5000
    missing_rate: float = 0.5
    iv_strength: float = 0.3
    betas: tuple[float, ...] = (0.3, 0.0)
    subset_counts: tuple[int, ...] = (5, 25)
    n_iter: int = 4000
    burn_in: int = 1000
    n_grid: int = 101
    imputation: str = "full_conditional"
    ig_target: str = "variance"
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not self.betas:
            raise ConfigurationError("at least one beta value is required")
        if any(j < 2 for j in self.subset_counts):
            raise ConfigurationError("subset counts must be at least 2")
        if self.n_grid < 2:
            raise ConfigurationError(f"n_grid must be at least 2, got {self.n_grid}")


@dataclass(frozen=True)
class ContourFit:
    """One fitted posterior for the causal pair, with its density grid.

    ``drift`` holds absolute gaps between this fit's parameter means and
    the full-data fit's means; it is None on the full fit itself.
    """

    label: str
    mean: tuple[float, float]
    mode: tuple[float, float]
    grid: DensityGrid
    drift: dict[str, float] | None


@dataclass(frozen=True)
class ContourDataset:
    beta: float
    fits: tuple[ContourFit, ...]


@dataclass(frozen=True)
class ContourResult:
    datasets: tuple[ContourDataset, ...]


def _shared_grid(
    columns: list[tuple[np.ndarray, np.ndarray]], n_grid: int
) -> tuple[np.ndarray, np.ndarray]:
    """One grid covering every fit's draws, padded by 3 bandwidths each."""
    los_x, his_x, los_y, his_y = [], [], [], []
    for b1, b2 in columns:
        hx = scott_bandwidth(b1)
        hy = scott_bandwidth(b2)
        los_x.append(b1.min() - 3.0 * hx)
        his_x.append(b1.max() + 3.0 * hx)
        los_y.append(b2.min() - 3.0 * hy)
        his_y.append(b2.max() + 3.0 * hy)
    return (
        np.linspace(min(los_x), max(his_x), n_grid),
        np.linspace(min(los_y), max(his_y), n_grid),
    )


def write_grid(
    path: str | os.PathLike[str],
    grid: DensityGrid,
    names: tuple[str, str] = ("beta1", "beta2"),
) -> None:
    """Write a density grid as long-format TSV: x, y, density."""
    rows = []
    for i, gx in enumerate(grid.x):
        for j, gy in enumerate(grid.y):
            rows.append([float(gx), float(gy), float(grid.values[i, j])])
    _write_tsv(Path(path), (names[0], names[1], "density"), rows)


def run_large_study(
    config: ContourStudyConfig,
    out_dir: str | os.PathLike[str] | None = None,
    max_workers: int | None = None,
) -> ContourResult:
    """Full fit and subset-posterior fits on one large dataset per beta."""
    t0 = time.perf_counter()
    priors = PriorSpec(ig_target=config.ig_target)
    datasets = []
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    for bi, beta in enumerate(config.betas):
        data = simulate(
            SimConfig(
                n_total=config.n_total,
                missing_rate=config.missing_rate,
                iv_strength=config.iv_strength,
                beta1=beta,
                beta2=beta,
                seed=derive_seed(config.master_seed, "contour-sim", bi),
            )
        )
        full = run_chain(
            data,
            priors,
            McmcConfig(
                n_iter=config.n_iter,
                burn_in=config.burn_in,
                imputation=config.imputation,
                seed=derive_seed(config.master_seed, "contour-chain", bi),
            ),
        )
        fitted: list[tuple[str, PosteriorDraws]] = [("full", full)]
        for n_subsets in config.subset_counts:
            subs = fit_partitioned(
                data,
                priors,
                McmcConfig(
                    n_iter=config.n_iter,
                    burn_in=config.burn_in,
                    imputation=config.imputation,
                    seed=derive_seed(config.master_seed, "contour-part", bi, n_subsets),
                ),
                n_subsets,
                max_workers=max_workers,
            )
            fitted.append((f"J{n_subsets}", aggregate_subsets(subs).draws))

        columns = [(d.column("beta1"), d.column("beta2")) for _, d in fitted]
        grid_x, grid_y = _shared_grid(columns, config.n_grid)
        full_means = full.draws.mean(axis=0)
        fits = []
        for (label, draws), (b1, b2) in zip(fitted, columns):
            grid = gkde2d(b1, b2, grid_x=grid_x, grid_y=grid_y)
            drift = None
            if label != "full":
                gap = np.abs(draws.draws.mean(axis=0) - full_means)
                drift = {
                    "beta1": float(gap[draws.names.index("beta1")]),
                    "beta2": float(gap[draws.names.index("beta2")]),
                    "max_all_params": float(gap.max()),
                }
            fits.append(
                ContourFit(
                    label=label,
                    mean=(float(b1.mean()), float(b2.mean())),
                    mode=grid.mode(),
                    grid=grid,
                    drift=drift,
                )
            )
            if out is not None:
                write_grid(out / f"contours_dataset{bi}_{label}.tsv", grid)
        datasets.append(ContourDataset(beta=beta, fits=tuple(fits)))

    result = ContourResult(datasets=tuple(datasets))
    if out is not None:
        summary = {
            "kind": "contour-study",
            "package_version": _package_version(),
            "config": asdict(config),
            "datasets": [
                {
                    "beta": ds.beta,
                    "fits": [
                        {
                            "label": f.label,
                            "mean": list(f.mean),
                            "mode": list(f.mode),
                            "bandwidth": list(f.grid.bandwidth),
                            "drift": f.drift,
                            "file": f"contours_dataset{bi}_{f.label}.tsv",
                        }
                        for f in ds.fits
                    ],
                }
                for bi, ds in enumerate(result.datasets)
            ],
        }
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
            fh.write("\n")
        with open(out / "timings.json", "w") as fh:
            json.dump({"wall_seconds": time.perf_counter() - t0}, fh, indent=1)
            fh.write("\n")
    return result
