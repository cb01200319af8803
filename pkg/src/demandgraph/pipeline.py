"""Pipeline stages: QA, preprocessing, training, statistics.

Each stage reads and writes plain files in the output directory so the CLI
subcommands can run one at a time or chained.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .dataset import (
    DataError, TemporalFeatureTable, WindowedDataset, align_features, apply_normalizer,
    fit_normalizer, make_windows, read_edges_csv, read_feature_csv, read_nodes_csv, split,
)
from .fixtures import make_fixture, write_fixture
from .graph import DirectedGraph, adjacency_matrix, dedupe, mask_inactive_nodes
from .models import GraphOperators, save_checkpoint
from .stats import StatReport, compare_models, write_stats_csv
from .trainer import FitResult, fit_model, write_curves_csv


class StageError(RuntimeError):
    """A failure tagged with the pipeline stage it happened in."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


# ---------------------------------------------------------------------- QA


@dataclass
class QAResult:
    raw_node_rows: int
    raw_edge_rows: int
    deduped: DirectedGraph
    graph: DirectedGraph
    removed: list[str]
    features: TemporalFeatureTable  # columns follow ``graph``

    def summary(self, config: PipelineConfig) -> dict:
        return {
            "edge_type": config.edge_type,
            "feature": config.feature,
            "zero_fraction_threshold": config.zero_fraction_threshold,
            "node_rows": self.raw_node_rows,
            "edge_rows": self.raw_edge_rows,
            "nodes_after_dedup": self.deduped.n,
            "nodes_after_mask": self.graph.n,
            "edges_after_dedup": len(self.deduped.edges),
            "edges_after_mask": len(self.graph.edges),
            "removed": list(self.removed),
            "products": self.graph.codes,
            "T": self.features.T,
        }

    def headline(self) -> str:
        return f"nodes: {self.deduped.n} → {self.graph.n} (removed {len(self.removed)})"


def load_raw(config: PipelineConfig):
    if config.synthetic:
        fx = make_fixture(config.synth_seed, config.synth_T, config.synth_coupling, config.synth_noise_std)
        return fx.nodes, fx.edges[config.edge_type], fx.features[config.feature]
    nodes_path, edges_path, feature_path = config.data_paths()
    return (read_nodes_csv(nodes_path), read_edges_csv(edges_path),
            read_feature_csv(feature_path, config.feature))


def run_qa(config: PipelineConfig) -> QAResult:
    raw_nodes, raw_edges, table = load_raw(config)
    deduped = dedupe(raw_nodes, raw_edges, config.edge_type)
    table = align_features(deduped, table)
    graph, removed = mask_inactive_nodes(deduped, table, config.zero_fraction_threshold)
    return QAResult(len(raw_nodes), len(raw_edges), deduped, graph, removed, table.select(graph.codes))


def write_adjacency_csv(graph: DirectedGraph, path) -> None:
    A = adjacency_matrix(graph)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["product", *graph.codes])
        for code, row in zip(graph.codes, A):
            w.writerow([code, *(int(v) for v in row)])


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, ensure_ascii=False, allow_nan=False)
        fh.write("\n")


def stage_qa(config: PipelineConfig, out: Path) -> QAResult:
    qa = run_qa(config)
    write_adjacency_csv(qa.graph, out / "adjacency.csv")
    write_json(qa.summary(config), out / "qa.json")
    return qa


def stage_synth(config: PipelineConfig, out: Path) -> dict[str, Path]:
    fx = make_fixture(config.synth_seed, config.synth_T, config.synth_coupling, config.synth_noise_std)
    return write_fixture(fx, out)


# ----------------------------------------------------------- preprocessing


def preprocess(config: PipelineConfig, qa: QAResult) -> WindowedDataset:
    spec = split(qa.features.T, config.train_ratio, config.window)
    norm = fit_normalizer(qa.features, spec, config.normalize_scope)
    return make_windows(apply_normalizer(qa.features, norm), spec, config.window)


# ------------------------------------------------------------------ training

SE_HEADER = ["model", "segment", "example", "time_index", "product", "prediction", "label", "se"]
SEGMENTS = ("train", "test")


def artifact_name(kind: str, model: str, seed: int) -> str:
    return {"ckpt": f"ckpt_{model}_seed{seed}.txt", "curves": f"curves_{model}_seed{seed}.csv"}[kind]


def write_se_csv(fits: dict[str, FitResult], codes, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SE_HEADER)
        for model, fit in fits.items():
            for segment, ev in zip(SEGMENTS, (fit.train_eval, fit.test_eval)):
                for k in range(len(ev.t)):
                    for j, code in enumerate(codes):
                        w.writerow([model, segment, k, int(ev.t[k]), code,
                                    format(float(ev.predictions[k, j]), ".17g"),
                                    format(float(ev.labels[k, j]), ".17g"),
                                    format(float(ev.se_matrix[k, j]), ".17g")])


@dataclass
class SegmentErrors:
    """Per-model K x N arrays for one segment, rebuilt from an SE CSV."""

    t: np.ndarray
    codes: list[str]
    prediction: dict[str, np.ndarray]
    label: dict[str, np.ndarray]
    se: dict[str, np.ndarray]


def read_se_csv(path) -> dict[str, SegmentErrors]:
    cells: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SE_HEADER:
            raise DataError(f"{path}: unexpected SE header")
        for r in reader:
            key = (r["segment"], r["model"])
            cells.setdefault(key, []).append(
                (int(r["example"]), int(r["time_index"]), r["product"],
                 float(r["prediction"]), float(r["label"]), float(r["se"])))
    out: dict[str, SegmentErrors] = {}
    for (segment, model), rows in cells.items():
        ks = sorted({r[0] for r in rows})
        codes = list(dict.fromkeys(r[2] for r in rows))
        t = np.zeros(len(ks), dtype=int)
        arr = np.zeros((3, len(ks), len(codes)))
        col = {c: j for j, c in enumerate(codes)}
        for k, ti, code, p, lab, se in rows:
            t[k] = ti
            arr[:, k, col[code]] = (p, lab, se)
        seg = out.setdefault(segment, SegmentErrors(t, codes, {}, {}, {}))
        if seg.codes != codes or not np.array_equal(seg.t, t):
            raise DataError(f"{path}: models disagree on {segment} layout")
        seg.prediction[model], seg.label[model], seg.se[model] = arr
    return out


def train_seed(config: PipelineConfig, dataset: WindowedDataset, graph_ops: GraphOperators,
               seed: int) -> dict[str, FitResult]:
    return {
        model: fit_model(model, dataset, graph_ops, config.train_config(seed), config.model_config(model))
        for model in config.models
    }


def stage_train(config: PipelineConfig, out: Path, qa: QAResult | None = None) -> dict[int, dict[str, FitResult]]:
    qa = qa or run_qa(config)
    dataset = preprocess(config, qa)
    graph_ops = GraphOperators(adjacency_matrix(qa.graph), config.adjacency_mode)
    results = {}
    for seed in config.seeds:
        fits = train_seed(config, dataset, graph_ops, seed)
        for model, fit in fits.items():
            save_checkpoint(out / artifact_name("ckpt", model, seed), fit.config, fit.params)
            write_curves_csv(fit.history, out / artifact_name("curves", model, seed))
        write_se_csv(fits, qa.graph.codes, out / f"se_seed{seed}.csv")
        results[seed] = fits
    return results


# --------------------------------------------------------------------- stats


def seed_files(out: Path, prefix: str) -> dict[int, Path]:
    pattern = re.compile(rf"{prefix}_seed(-?\d+)\.csv$")
    found = {}
    for p in sorted(out.iterdir()):
        m = pattern.match(p.name)
        if m:
            found[int(m.group(1))] = p
    return dict(sorted(found.items()))


def segment_reports(errors: dict[str, SegmentErrors], models) -> list[StatReport]:
    reports = []
    for segment in SEGMENTS:
        seg = errors[segment]
        reports.append(compare_models(
            {m: seg.se[m].ravel() for m in models},
            segment,
            {m: (seg.prediction[m] - seg.label[m]).ravel() for m in models},
        ))
    return reports


def stage_stats(config: PipelineConfig, out: Path) -> dict[int, list[StatReport]]:
    se_files = seed_files(out, "se")
    missing = [s for s in config.seeds if s not in se_files]
    if missing:
        raise DataError(f"no SE file for seed {missing[0]} in {out} (run train first)")
    reports = {}
    for seed in config.seeds:
        errors = read_se_csv(se_files[seed])
        models = [m for m in config.models if m in errors.get("test", SegmentErrors(None, [], {}, {}, {})).se]
        if models != list(config.models):
            raise DataError(f"{se_files[seed]}: models {list(config.models)} not all present")
        reports[seed] = segment_reports(errors, models)
        write_stats_csv(reports[seed], out / f"stats_seed{seed}.csv")
    return reports
