"""Reading and writing datasets and posterior draws.

Datasets are stored as a single CSV with one row per individual:

    study,z1_1,...,z1_L,z2_1,...,z2_K,z3_1,...,z3_M,x1,x2,y1,y2

``study`` is "A" or "B", genotype columns are integer counts, and missing
exposures are written as ``NA``.  Floats are rendered with ``repr`` so a
save/load round trip is bit exact.  When a dataset carries generating truth
a JSON sidecar is written next to the CSV (same name plus ``.meta.json``)
and picked up again on load.

Posterior draws use a TSV with one named column per parameter.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .model import CombinedDataset, DatasetTruth, PosteriorDraws, SimConfig

NA_TOKEN = "NA"


def _meta_path(path: str | os.PathLike[str]) -> Path:
    return Path(os.fspath(path) + ".meta.json")


def _fmt(value: float) -> str:
    return repr(float(value))


def save_dataset(data: CombinedDataset, path: str | os.PathLike[str]) -> None:
    """Write ``data`` as CSV; write the truth sidecar when present."""
    n_z1 = data.z1.shape[1]
    n_z2 = data.z2.shape[1]
    n_z3 = data.z3.shape[1]
    header = (
        ["study"]
        + [f"z1_{j}" for j in range(1, n_z1 + 1)]
        + [f"z2_{j}" for j in range(1, n_z2 + 1)]
        + [f"z3_{j}" for j in range(1, n_z3 + 1)]
        + ["x1", "x2", "y1", "y2"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [str(data.study[i])]
            row += [str(int(g)) for g in data.z1[i]]
            row += [str(int(g)) for g in data.z2[i]]
            row += [str(int(g)) for g in data.z3[i]]
            for col in (data.x1, data.x2):
                row.append(NA_TOKEN if np.isnan(col[i]) else _fmt(col[i]))
            row += [_fmt(data.y1[i]), _fmt(data.y2[i])]
            writer.writerow(row)

    if data.truth is not None:
        meta = {
            "config": asdict(data.truth.config),
            "v": data.truth.v.tolist(),
            "u": data.truth.u.tolist(),
            "x1_hidden": data.truth.x1_hidden.tolist(),
            "x2_hidden": data.truth.x2_hidden.tolist(),
        }
        with open(_meta_path(path), "w") as fh:
            json.dump(meta, fh, indent=1)
            fh.write("\n")


def _group_columns(header: list[str], prefix: str) -> list[int]:
    cols = [i for i, name in enumerate(header) if name.startswith(prefix + "_")]
    expected = [f"{prefix}_{j}" for j in range(1, len(cols) + 1)]
    if not cols or [header[i] for i in cols] != expected:
        raise ConfigurationError(
            f"dataset header must contain columns {prefix}_1..{prefix}_k in order"
        )
    return cols


def load_dataset(path: str | os.PathLike[str]) -> CombinedDataset:
    """Read a dataset CSV written by :func:`save_dataset`."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read dataset: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty dataset file") from None
        rows = list(reader)
    if not rows:
        raise ConfigurationError(f"{path}: dataset has a header but no rows")

    z1_cols = _group_columns(header, "z1")
    z2_cols = _group_columns(header, "z2")
    z3_cols = _group_columns(header, "z3")
    try:
        idx = {name: header.index(name) for name in ("study", "x1", "x2", "y1", "y2")}
    except ValueError as exc:
        raise ConfigurationError(f"{path}: missing required column ({exc})") from None

    n = len(rows)
    study = np.empty(n, dtype="U1")
    z1 = np.empty((n, len(z1_cols)), dtype=np.int64)
    z2 = np.empty((n, len(z2_cols)), dtype=np.int64)
    z3 = np.empty((n, len(z3_cols)), dtype=np.int64)
    x1 = np.empty(n)
    x2 = np.empty(n)
    y1 = np.empty(n)
    y2 = np.empty(n)

    def parse_float(token: str, line: int, name: str, allow_na: bool) -> float:
        if allow_na and token == NA_TOKEN:
            return np.nan
        try:
            return float(token)
        except ValueError:
            raise ConfigurationError(
                f"{path}:{line}: cannot parse {name}={token!r} as a number"
            ) from None

    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise ConfigurationError(
                f"{path}:{line}: expected {len(header)} fields, found {len(row)}"
            )
        study[i] = row[idx["study"]]
        for cols, out, name in ((z1_cols, z1, "z1"), (z2_cols, z2, "z2"), (z3_cols, z3, "z3")):
            for k, c in enumerate(cols):
                try:
                    out[i, k] = int(row[c])
                except ValueError:
                    raise ConfigurationError(
                        f"{path}:{line}: genotype {header[c]}={row[c]!r} is not an integer"
                    ) from None
        x1[i] = parse_float(row[idx["x1"]], line, "x1", allow_na=True)
        x2[i] = parse_float(row[idx["x2"]], line, "x2", allow_na=True)
        y1[i] = parse_float(row[idx["y1"]], line, "y1", allow_na=False)
        y2[i] = parse_float(row[idx["y2"]], line, "y2", allow_na=False)

    truth = None
    meta_path = _meta_path(path)
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        truth = DatasetTruth(
            config=SimConfig(**meta["config"]),
            v=np.asarray(meta["v"], dtype=np.float64),
            u=np.asarray(meta["u"], dtype=np.float64),
            x1_hidden=np.asarray(meta["x1_hidden"], dtype=np.float64),
            x2_hidden=np.asarray(meta["x2_hidden"], dtype=np.float64),
        )

    return CombinedDataset(
        study=study, z1=z1, z2=z2, z3=z3, x1=x1, x2=x2, y1=y1, y2=y2, truth=truth
    )


def save_draws(draws: PosteriorDraws, path: str | os.PathLike[str]) -> None:
    """Write posterior draws as TSV with one column per parameter."""
    with open(path, "w") as fh:
        fh.write("\t".join(draws.names) + "\n")
        for row in draws.draws:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def load_draws(path: str | os.PathLike[str]) -> PosteriorDraws:
    """Read a draws TSV written by :func:`save_draws`."""
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read draws: {exc}") from None
    with fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise ConfigurationError(f"{path}: empty draws file")
        names = tuple(header.split("\t"))
        values: list[list[float]] = []
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != len(names):
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {len(names)} fields, found {len(fields)}"
                )
            try:
                values.append([float(f) for f in fields])
            except ValueError:
                raise ConfigurationError(
                    f"{path}:{lineno}: cannot parse draw values"
                ) from None
    if not values:
        raise ConfigurationError(f"{path}: draws file has a header but no rows")
    return PosteriorDraws(names=names, draws=np.asarray(values))
