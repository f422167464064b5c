"""Readers for the benchmark CLI's report JSON and projection CSV formats.

Loaders validate the embedded schema version (JSON reports) or the exact
header (CSV) and never modify the files they read; returned arrays are marked
read-only so downstream plotting code cannot mutate shared state either.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_SCHEMA_VERSION = 1
PROJECTION_HEADER = ("x", "y", "x_aug", "y_aug", "dx", "dy", "label", "domain")


class PlotsError(ValueError):
    """Unusable figure input: wrong schema, empty file, or malformed rows."""


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OtddReport:
    """Pairwise domain transport distances from an analyze-otdd report."""

    domain_ids: tuple[int, ...]
    matrix: np.ndarray  # (E, E), symmetric, zero diagonal
    featurized: str | None


@dataclass(frozen=True)
class ProjectionTable:
    """2-d projected features with augmentation arrows from export-projection."""

    xy: np.ndarray  # (n, 2) clean coordinates
    xy_aug: np.ndarray  # (n, 2) augmented coordinates
    arrows: np.ndarray  # (n, 2) = xy_aug - xy as exported
    labels: np.ndarray  # (n,) int
    domains: np.ndarray  # (n,) int

    @property
    def n(self) -> int:
        return self.xy.shape[0]


def _check_schema(path: Path, obj: dict) -> None:
    version = obj.get("schema_version")
    if version != SUPPORTED_SCHEMA_VERSION:
        raise PlotsError(
            f"{path}: report schema_version {version!r} is not supported; "
            f"this renderer reads version {SUPPORTED_SCHEMA_VERSION}"
        )


def load_otdd_report(path: str | Path) -> OtddReport:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise PlotsError(f"{path}: empty input")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlotsError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise PlotsError(f"{path}: expected a report object, got {type(obj).__name__}")
    _check_schema(path, obj)
    missing = [key for key in ("domain_ids", "matrix") if key not in obj]
    if missing:
        raise PlotsError(f"{path}: report is missing fields {missing}")
    matrix = np.asarray(obj["matrix"], dtype=np.float64)
    ids = tuple(int(v) for v in obj["domain_ids"])
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise PlotsError(f"{path}: matrix must be square, got shape {matrix.shape}")
    if matrix.shape[0] != len(ids):
        raise PlotsError(
            f"{path}: {len(ids)} domain ids do not index a {matrix.shape} matrix"
        )
    if matrix.shape[0] == 0:
        raise PlotsError(f"{path}: empty input")
    return OtddReport(
        domain_ids=ids, matrix=_read_only(matrix), featurized=obj.get("featurized")
    )


def load_projection(path: str | Path) -> ProjectionTable:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise PlotsError(f"{path}: empty input") from None
        if header != PROJECTION_HEADER:
            raise PlotsError(
                f"{path}: unexpected header {','.join(header)!r}; "
                f"expected {','.join(PROJECTION_HEADER)!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(PROJECTION_HEADER):
                raise PlotsError(
                    f"{path}:{lineno}: expected {len(PROJECTION_HEADER)} columns, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise PlotsError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise PlotsError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    labels = table[:, 6]
    domains = table[:, 7]
    if not (np.all(labels == np.round(labels)) and np.all(domains == np.round(domains))):
        raise PlotsError(f"{path}: label and domain columns must be integers")
    return ProjectionTable(
        xy=_read_only(table[:, 0:2].copy()),
        xy_aug=_read_only(table[:, 2:4].copy()),
        arrows=_read_only(table[:, 4:6].copy()),
        labels=_read_only(labels.astype(np.intp)),
        domains=_read_only(domains.astype(np.intp)),
    )
