"""Ingestion of SupplyGraph-style CSVs, preprocessing and synthetic data."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graph import (
    DirectedGraph,
    GraphError,
    ProductNode,
    adjacency_matrix,
    dedupe,
    normalize_adjacency,
)

FEATURES = ("production", "sales_order", "delivery", "factory_issue")
NODE_HEADER = ["product", "group", "subgroup", "plant", "storage"]
EDGE_HEADER = ["source", "target"]
AR_COEF = 0.6


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TemporalFeatureTable:
    feature_name: str
    product_codes: tuple[str, ...]
    timestamps: tuple[dt.date, ...]
    values: np.ndarray  # T x N

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        T, N = len(self.timestamps), len(self.product_codes)
        if values.shape != (T, N):
            raise DataError(f"values shape {values.shape} does not match T={T}, N={N}")
        if not np.all(np.isfinite(values)):
            raise DataError("feature table contains missing or non-finite cells")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                kind = "duplicate" if a == b else "non-increasing"
                raise DataError(f"{kind} timestamp {b.isoformat()}")
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return len(self.timestamps)

    @property
    def N(self) -> int:
        return len(self.product_codes)

    def with_values(self, values: np.ndarray) -> "TemporalFeatureTable":
        return TemporalFeatureTable(self.feature_name, self.product_codes, self.timestamps, values)

    def select(self, codes: Sequence[str]) -> "TemporalFeatureTable":
        """Columns reordered (and restricted) to ``codes``."""
        col = {c: j for j, c in enumerate(self.product_codes)}
        unknown = [c for c in codes if c not in col]
        if unknown:
            raise DataError(f"products missing from {self.feature_name}: {', '.join(unknown)}")
        idx = [col[c] for c in codes]
        return TemporalFeatureTable(
            self.feature_name, tuple(codes), self.timestamps, self.values[:, idx]
        )


# --------------------------------------------------------------------------- CSV


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_nodes_csv(path) -> list[ProductNode]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != NODE_HEADER:
            raise DataError(f"{path}: expected header {','.join(NODE_HEADER)}, got {header}")
        nodes = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(NODE_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(NODE_HEADER)} fields")
            nodes.append(ProductNode(*row))
    if not nodes:
        raise DataError(f"{path}: no products")
    return nodes


def read_edges_csv(path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EDGE_HEADER:
            raise DataError(f"{path}: expected header source,target, got {header}")
        edges = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            edges.append((row[0], row[1]))
    return edges


def read_feature_csv(path, feature_name: str | None = None) -> TemporalFeatureTable:
    path = Path(path)
    name = feature_name or path.stem
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date" or len(header) < 2:
            raise DataError(f"{path}: header must start with 'date' and list product codes")
        codes = header[1:]
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                dates.append(dt.date.fromisoformat(row[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from None
            values = []
            for code, cell in zip(codes, row[1:]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in column {code!r}"
                    ) from None
            rows.append(values)
    if len(set(codes)) != len(codes):
        raise DataError(f"{path}: duplicate product columns")
    values = np.array(rows, dtype=float).reshape(len(rows), len(codes))
    try:
        return TemporalFeatureTable(name, tuple(codes), tuple(dates), values)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_nodes_csv(nodes: Sequence[ProductNode], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_HEADER)
        for n in nodes:
            w.writerow([n.code, n.group, n.subgroup, n.plant, n.storage])


def write_edges_csv(edges: Sequence[tuple[str, str]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        w.writerows(edges)


def write_feature_csv(table: TemporalFeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *table.product_codes])
        for date, row in zip(table.timestamps, table.values):
            w.writerow([date.isoformat(), *(_fmt(v) for v in row)])


def align_features(graph: DirectedGraph, table: TemporalFeatureTable) -> TemporalFeatureTable:
    """Reorder feature columns to the graph's node order; the product sets must match."""
    in_graph, in_table = set(graph.codes), set(table.product_codes)
    if in_graph != in_table:
        parts = []
        if in_graph - in_table:
            parts.append("missing from features: " + ", ".join(sorted(in_graph - in_table)))
        if in_table - in_graph:
            parts.append("unknown to nodes file: " + ", ".join(sorted(in_table - in_graph)))
        raise DataError("product mismatch; " + "; ".join(parts))
    return table.select(graph.codes)


def ingest(
    nodes_path,
    edges_path,
    feature_paths: Mapping[str, str | Path] | Sequence[str | Path],
    edge_type: str = "plant",
) -> tuple[DirectedGraph, dict[str, TemporalFeatureTable]]:
    """Read nodes, one edge file and feature files into a deduped graph and
    feature tables whose columns follow the graph's node order."""
    if not isinstance(feature_paths, Mapping):
        feature_paths = {Path(p).stem: p for p in feature_paths}
    try:
        graph = dedupe(read_nodes_csv(nodes_path), read_edges_csv(edges_path), edge_type)
    except GraphError as exc:
        raise DataError(f"{edges_path}: {exc}") from None

    tables = {}
    for name, path in feature_paths.items():
        try:
            tables[name] = align_features(graph, read_feature_csv(path, name))
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return graph, tables


# ----------------------------------------------------------------- preprocessing


@dataclass(frozen=True)
class SplitSpec:
    boundary: int
    train_ratio: float
    T: int


def split(T: int, train_ratio: float = 0.95, window: int = 5) -> SplitSpec:
    """Chronological split: train rows ``[0, boundary)``, test rows ``[boundary, T)``."""
    if not 0.0 < train_ratio < 1.0:
        raise DataError("train_ratio must lie strictly between 0 and 1")
    if T < 2:
        raise DataError("need at least two time points")
    boundary = math.floor(train_ratio * T)
    if boundary < window + 1 or T - boundary < window + 1:
        raise DataError(
            f"segment too short: split of T={T} at {boundary} leaves fewer than "
            f"{window + 1} points on one side"
        )
    return SplitSpec(boundary, train_ratio, T)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(
    table: TemporalFeatureTable, split_spec: SplitSpec, scope: str = "train_only"
) -> Normalizer:
    """Per-node mean and population std, from the training rows by default."""
    if scope == "train_only":
        rows = table.values[: split_spec.boundary]
    elif scope == "full_series":
        rows = table.values
    else:
        raise DataError(f"unknown normalize scope {scope!r}")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    flat = [c for c, s in zip(table.product_codes, std) if not s > 0]
    if flat:
        raise DataError(
            "zero variance in training segment for " + ", ".join(flat)
            + " (mask inactive nodes first)"
        )
    return Normalizer(mean, std)


def apply_normalizer(table: TemporalFeatureTable, norm: Normalizer) -> TemporalFeatureTable:
    return table.with_values((table.values - norm.mean) / norm.std)


@dataclass(frozen=True)
class Segment:
    """Windowed examples of one segment, stacked.

    ``X[k]`` is the N x window history for example ``k``, ``y[k]`` its labels and
    ``t[k]`` the (global) time index of the label row.
    """

    X: np.ndarray  # K x N x window
    y: np.ndarray  # K x N
    t: np.ndarray  # K

    def __len__(self) -> int:
        return len(self.t)

    @property
    def examples(self) -> list[tuple[np.ndarray, np.ndarray, int]]:
        return [(self.X[k], self.y[k], int(self.t[k])) for k in range(len(self))]


@dataclass(frozen=True)
class WindowedDataset:
    window: int
    train: Segment
    test: Segment
    split: SplitSpec
    product_codes: tuple[str, ...]

    @property
    def train_examples(self):
        return self.train.examples

    @property
    def test_examples(self):
        return self.test.examples


def _window_segment(values: np.ndarray, start: int, window: int) -> Segment:
    L = len(values)
    if L <= window:
        raise DataError(f"segment too short: length {L} with window {window}")
    K = L - window
    X = np.stack([values[k : k + window].T for k in range(K)])
    y = values[window:].copy()
    t = np.arange(start + window, start + L)
    return Segment(X, y, t)


def make_windows(normalized: TemporalFeatureTable, split_spec: SplitSpec, window: int = 5) -> WindowedDataset:
    """Rolling windows within each segment; none straddles the boundary."""
    b = split_spec.boundary
    values = normalized.values
    return WindowedDataset(
        window,
        _window_segment(values[:b], 0, window),
        _window_segment(values[b:], b, window),
        split_spec,
        normalized.product_codes,
    )


# --------------------------------------------------------------------- synthetic


def default_dates(T: int, start: dt.date = dt.date(2023, 1, 1)) -> tuple[dt.date, ...]:
    return tuple(start + dt.timedelta(days=i) for i in range(T))


def synth_latent(graph: DirectedGraph, T: int, coupling: float, noise_std: float, seed,
                 x0: np.ndarray | None = None) -> np.ndarray:
    """Graph-coupled AR(1): ``x_t = 0.6 x_{t-1} + coupling * A x_{t-1} + eps_t``.

    ``A`` is the symmetrized normalized adjacency; returns the raw T x N series.
    """
    if T < 20:
        raise DataError("synthetic series need T >= 20")
    if not 0.0 <= coupling < 1.0:
        raise DataError("coupling must lie in [0, 1)")
    A_hat = normalize_adjacency(adjacency_matrix(graph), "symmetrized").weights
    rng = np.random.default_rng(seed)
    x = np.empty((T, graph.n))
    x[0] = rng.standard_normal(graph.n) if x0 is None else x0
    noise = rng.standard_normal((T, graph.n)) * noise_std
    step = AR_COEF * np.eye(graph.n) + coupling * A_hat
    for t in range(1, T):
        x[t] = step @ x[t - 1] + noise[t]
    return x


def to_quantities(x: np.ndarray, level: float = 100.0, scale: float = 10.0) -> np.ndarray:
    """One global affine map to strictly positive quantities."""
    return level + scale * (x - x.min())


def synth_generate(graph: DirectedGraph, T: int = 221, coupling: float = 0.3, noise_std: float = 1.0,
                   seed=7, feature_name: str = "sales_order") -> TemporalFeatureTable:
    x = synth_latent(graph, T, coupling, noise_std, seed)
    return TemporalFeatureTable(feature_name, tuple(graph.codes), default_dates(T), to_quantities(x))
