"""Command line entry points.

Exit codes: 0 on success, 1 for usage or configuration problems (including
unreadable or malformed inputs), 2 when a computation fails numerically.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .aggregate import aggregate_subsets, fit_partitioned
from .dataio import load_dataset, load_draws, save_dataset, save_draws
from .errors import ConfigurationError, NumericalError
from .gibbs import McmcConfig, run_chain
from .harness import (
    ContourStudyConfig,
    ExperimentConfig,
    compute_metrics,
    read_replicates,
    run_large_study,
    run_study,
    write_grid,
    write_metrics,
)
from .ivw import ivw_from_dataset
from .metrics import gkde2d, summarize
from .model import PriorSpec, SimConfig
from .simulate import simulate


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits with code 1 on usage errors."""

    def error(self, message: str):  # noqa: ANN201 - argparse API
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_chain_args(p: argparse.ArgumentParser, thin: bool = True) -> None:
    p.add_argument("--n-iter", type=int, default=5000, help="total iterations")
    p.add_argument("--burn-in", type=int, default=1000, help="discarded iterations")
    if thin:
        p.add_argument("--thin", type=int, default=1, help="keep every k-th draw")
    p.add_argument("--seed", type=int, default=0, help="chain seed")
    p.add_argument(
        "--init", choices=("least_squares", "prior", "truth"), default="least_squares",
        help="chain initialization",
    )
    p.add_argument(
        "--imputation", choices=("full_conditional", "exposure_only"),
        default="full_conditional", help="imputation step for missing exposures",
    )
    p.add_argument(
        "--ig-target", choices=("variance", "sd"), default="variance",
        help="whether the inverse-gamma scale prior sits on the variance or the sd",
    )


def _add_workers_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--max-workers", type=int, default=None,
        help="process count (default: BAYESMR_MAX_WORKERS or 1)",
    )


def _print_beta_summaries(draws, fh=None) -> None:
    fh = fh or sys.stdout
    for target in ("beta1", "beta2"):
        s = summarize(draws, target)
        print(
            f"{target}: mean={s.mean:.4f} sd={s.sd:.4f} "
            f"ci95=({s.ci_low:.4f}, {s.ci_high:.4f})",
            file=fh,
        )


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = SimConfig(
        n_total=args.n,
        missing_rate=args.missing_rate,
        iv_strength=args.iv_strength,
        beta1=args.beta1,
        beta2=args.beta2,
        delta=args.delta,
        sigma=args.sigma,
        n_z1=args.n_z1,
        n_z2=args.n_z2,
        n_z3=args.n_z3,
        maf=args.maf,
        seed=args.seed,
    )
    data = simulate(config)
    save_dataset(data, args.out)
    print(f"wrote {args.out}: {data.n} rows ({data.n_a} study A, {data.n_b} study B)")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    data = load_dataset(args.data)
    draws = run_chain(
        data,
        PriorSpec(ig_target=args.ig_target),
        McmcConfig(
            n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin,
            init=args.init, imputation=args.imputation, seed=args.seed,
        ),
    )
    save_draws(draws, args.out)
    print(f"wrote {args.out}: {draws.n_draws} draws of {len(draws.names)} parameters")
    _print_beta_summaries(draws)
    return 0


def _cmd_ivw(args: argparse.Namespace) -> int:
    data = load_dataset(args.data)
    targets = ("beta1", "beta2") if args.target == "both" else (args.target,)
    payload = {t: asdict(ivw_from_dataset(data, t)) for t in targets}
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_partition_fit(args: argparse.Namespace) -> int:
    from pathlib import Path
    import time

    t0 = time.perf_counter()
    data = load_dataset(args.data)
    mcmc = McmcConfig(
        n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin,
        init=args.init, imputation=args.imputation, seed=args.seed,
    )
    subsets = fit_partitioned(
        data, PriorSpec(ig_target=args.ig_target), mcmc, args.subsets,
        max_workers=args.max_workers,
    )
    agg = aggregate_subsets(subsets)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_draws(agg.draws, out / "aggregated.tsv")
    if args.keep_subset_draws:
        for sub in subsets:
            save_draws(sub.draws, out / f"subset_{sub.index:02d}.tsv")
    names = agg.draws.names
    manifest = {
        "kind": "partition-fit",
        "n_subsets": args.subsets,
        "subset_rows": [s.n_rows for s in subsets],
        "mcmc": asdict(mcmc),
        "ig_target": args.ig_target,
        "grand_mean": dict(zip(names, (float(v) for v in agg.grand_mean))),
        "subset_means": [
            dict(zip(names, (float(v) for v in row))) for row in agg.subset_means
        ],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out / "timings.json", "w") as fh:
        json.dump({"wall_seconds": time.perf_counter() - t0}, fh, indent=1)
        fh.write("\n")
    print(f"wrote {out / 'aggregated.tsv'}: {agg.draws.n_draws} pooled draws")
    _print_beta_summaries(agg.draws)
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    records = read_replicates(args.replicates)
    metrics = compute_metrics(records)
    write_metrics(metrics, args.out)
    print(f"wrote {args.out}: {len(metrics)} metric rows")
    return 0


def _cmd_contours(args: argparse.Namespace) -> int:
    draws = load_draws(args.draws)
    grid = gkde2d(draws.column(args.x), draws.column(args.y), n_grid=args.n_grid)
    write_grid(args.out, grid, names=(args.x, args.y))
    mx, my = grid.mode()
    print(f"wrote {args.out}: {args.n_grid}x{args.n_grid} grid, mode=({mx:.4f}, {my:.4f})")
    return 0


def _report_study(result, out_dir: str) -> int:
    for cell, row in result.metrics:
        power = "NA" if row.power is None else f"{row.power:.3f}"
        print(
            f"missing={cell.missing_rate:<4} strength={cell.iv_strength:<4} "
            f"beta={cell.beta:<4} {row.method:<5} {row.target}: "
            f"mean={row.mean:.3f} sd={row.sd:.3f} coverage={row.coverage:.3f} power={power}"
        )
    print(f"outputs in {out_dir}")
    if result.failures:
        for f in result.failures:
            print(
                f"failed replicate {f.replicate} "
                f"(missing={f.cell.missing_rate}, strength={f.cell.iv_strength}, "
                f"beta={f.cell.beta}): {f.error}",
                file=sys.stderr,
            )
        print(f"{len(result.failures)} replicate(s) failed", file=sys.stderr)
        return 2
    return 0


def _cmd_reproduce_table(args: argparse.Namespace, betas: tuple[float, ...]) -> int:
    replicates = args.replicates
    if replicates is None:
        replicates = 1000 if args.full_scale else 50
    config = ExperimentConfig(
        missing_rates=(0.2, 0.5, 0.8),
        iv_strengths=(0.1, 0.3),
        betas=betas,
        n_total=args.n,
        n_replicates=replicates,
        n_iter=args.n_iter,
        burn_in=args.burn_in,
        imputation=args.imputation,
        ig_target=args.ig_target,
        master_seed=args.seed,
    )
    result = run_study(config, out_dir=args.out_dir, max_workers=args.max_workers)
    return _report_study(result, args.out_dir)


def _cmd_reproduce_contours(args: argparse.Namespace) -> int:
    n_total = args.n
    subset_counts = args.subsets
    if args.full_scale:
        n_total = n_total if n_total is not None else 50000
        subset_counts = subset_counts if subset_counts is not None else (5, 50)
    else:
        n_total = n_total if n_total is not None else 5000
        subset_counts = subset_counts if subset_counts is not None else (5, 25)
    config = ContourStudyConfig(
        n_total=n_total,
        missing_rate=args.missing_rate,
        iv_strength=args.iv_strength,
        subset_counts=subset_counts,
        n_iter=args.n_iter,
        burn_in=args.burn_in,
        n_grid=args.n_grid,
        imputation=args.imputation,
        ig_target=args.ig_target,
        master_seed=args.seed,
    )
    result = run_large_study(config, out_dir=args.out_dir, max_workers=args.max_workers)
    for ds in result.datasets:
        for fit in ds.fits:
            drift = ""
            if fit.drift is not None:
                drift = (
                    f" drift(beta1)={fit.drift['beta1']:.5f}"
                    f" drift(beta2)={fit.drift['beta2']:.5f}"
                )
            print(
                f"beta={ds.beta} fit={fit.label}: "
                f"mean=({fit.mean[0]:.4f}, {fit.mean[1]:.4f}) "
                f"mode=({fit.mode[0]:.4f}, {fit.mode[1]:.4f}){drift}"
            )
    print(f"outputs in {args.out_dir}")
    return 0


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bayesmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic two-study dataset")
    p.add_argument("--n", type=int, default=400, help="total rows")
    p.add_argument("--missing-rate", type=float, default=0.5)
    p.add_argument("--iv-strength", type=float, default=0.3)
    p.add_argument("--beta1", type=float, default=0.3)
    p.add_argument("--beta2", type=float, default=0.3)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--n-z1", type=int, default=15)
    p.add_argument("--n-z2", type=int, default=15)
    p.add_argument("--n-z3", type=int, default=5)
    p.add_argument("--maf", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="run the chain on a dataset")
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--out", required=True, help="output draws TSV")
    _add_chain_args(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("ivw", help="inverse-variance weighted baseline")
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--target", choices=("beta1", "beta2", "both"), default="both")
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.set_defaults(func=_cmd_ivw)

    p = sub.add_parser("partition-fit", help="subset-posterior fit of one dataset")
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--subsets", type=int, required=True, help="number of subsets")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--keep-subset-draws", action="store_true",
                   help="also write each subset's draws")
    _add_chain_args(p)
    _add_workers_arg(p)
    p.set_defaults(func=_cmd_partition_fit)

    p = sub.add_parser("metrics", help="score a replicates TSV into metrics")
    p.add_argument("replicates", help="replicates.tsv from a study run")
    p.add_argument("--out", required=True, help="output metrics TSV")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("contours", help="2-D kernel density grid from draws")
    p.add_argument("draws", help="draws TSV")
    p.add_argument("--x", default="beta1", help="x-axis parameter")
    p.add_argument("--y", default="beta2", help="y-axis parameter")
    p.add_argument("--n-grid", type=int, default=101)
    p.add_argument("--out", required=True, help="output grid TSV")
    p.set_defaults(func=_cmd_contours)

    for name, betas in (("reproduce-table1", (0.3,)), ("reproduce-table2", (0.0,))):
        p = sub.add_parser(
            name, help=f"replicated study with beta={betas[0]} across the config grid"
        )
        p.add_argument("--out-dir", required=True)
        p.add_argument("--n", type=int, default=400, help="rows per dataset")
        p.add_argument("--replicates", type=int, default=None,
                       help="replicates per cell (default 50; 1000 with --full-scale)")
        p.add_argument("--n-iter", type=int, default=5000)
        p.add_argument("--burn-in", type=int, default=1000)
        p.add_argument("--imputation", choices=("full_conditional", "exposure_only"),
                       default="full_conditional")
        p.add_argument("--ig-target", choices=("variance", "sd"), default="variance")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--full-scale", action="store_true")
        _add_workers_arg(p)
        p.set_defaults(func=lambda a, _b=betas: _cmd_reproduce_table(a, _b))

    p = sub.add_parser("reproduce-contours", help="large-sample full and subset fits")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=None,
                   help="rows (default 5000; 50000 with --full-scale)")
    p.add_argument("--subsets", type=_parse_int_tuple, default=None,
                   help="comma-separated subset counts (default 5,25; 5,50 full scale)")
    p.add_argument("--missing-rate", type=float, default=0.5)
    p.add_argument("--iv-strength", type=float, default=0.3)
    p.add_argument("--n-iter", type=int, default=4000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--n-grid", type=int, default=101)
    p.add_argument("--imputation", choices=("full_conditional", "exposure_only"),
                   default="full_conditional")
    p.add_argument("--ig-target", choices=("variance", "sd"), default="variance")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--full-scale", action="store_true")
    _add_workers_arg(p)
    p.set_defaults(func=_cmd_reproduce_contours)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
