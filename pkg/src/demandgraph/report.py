"""RunReport assembly, JSON round-trip and plain-text tables."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .graph import adjacency_matrix
from .models import param_count
from .pipeline import (
    SEGMENTS, QAResult, artifact_name, preprocess, read_se_csv, seed_files, segment_reports, write_json,
)
from .stats import StatReport, TestResult
from .svg import adjacency_figure, box_figure, learning_curve_figure, series_figure, write_svg
from .trainer import read_curves_csv

SCHEMA = "demandgraph.run_report"
SCHEMA_VERSION = 1
REPORT_FILE = "report.json"


class ReportError(ValueError):
    pass


def _test_dict(res: TestResult) -> dict:
    return {
        "test": res.test_name,
        "statistic": res.statistic,
        "df": res.df,
        "p": res.p_value,
        "corrected_p": res.corrected_p,
        "significant": res.significant,
    }


def stat_report_dict(rep: StatReport) -> dict:
    return {
        "segment": rep.segment,
        "omnibus": _test_dict(rep.omnibus),
        "pairwise": {name: _test_dict(r) for name, r in rep.pairwise.items()},
        "se_box": {m: dataclasses.asdict(b) for m, b in rep.se_box.items()},
        "error_box": {m: dataclasses.asdict(b) for m, b in rep.error_box.items()},
    }


def _metrics(se: np.ndarray) -> dict:
    mse, med = float(np.mean(se)), float(np.median(se))
    return {"mse": mse, "median_se": med, "median_below_mse": med < mse}


def figure_names(models) -> list[str]:
    names = ["fig_adjacency.svg"]
    names += [f"fig_curves_{m}.svg" for m in models]
    names += [f"fig_series_{m}.svg" for m in models]
    return names + ["fig_box_train.svg", "fig_box_test.svg"]


def write_figures(config: PipelineConfig, qa: QAResult, out: Path, seed: int,
                  curves: dict, errors: dict, reports: list[StatReport]) -> None:
    groups = [node.group for node in qa.graph.nodes]
    write_svg(adjacency_figure(adjacency_matrix(qa.graph), qa.graph.codes, groups, config.synth_seed,
                               f"{config.edge_type} graph"), out / "fig_adjacency.svg")
    for m in config.models:
        h = curves[m]
        write_svg(learning_curve_figure([r.epoch for r in h], [r.train_loss for r in h],
                                        [r.test_loss for r in h], m), out / f"fig_curves_{m}.svg")
        t = np.r_[errors["train"].t, errors["test"].t]
        actual = np.vstack([errors[s].label[m] for s in SEGMENTS])
        pred = np.vstack([errors[s].prediction[m] for s in SEGMENTS])
        write_svg(series_figure(t, actual, pred, errors["train"].codes, m), out / f"fig_series_{m}.svg")
    for rep in reports:
        panels = [("prediction error", rep.error_box), ("squared error", rep.se_box)]
        write_svg(box_figure(panels, f"{rep.segment} segment, seed {seed}"), out / f"fig_box_{rep.segment}.svg")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_report(config: PipelineConfig, qa: QAResult, out: Path) -> dict:
    """Assemble the report from the train/stats artifacts in ``out`` and
    write the figures (for the first seed) alongside it."""
    dataset = preprocess(config, qa)
    se_files = seed_files(out, "se")
    runs = []
    for seed in config.seeds:
        if seed not in se_files:
            raise ReportError(f"no SE file for seed {seed} in {out} (run train first)")
        errors = read_se_csv(se_files[seed])
        reports = segment_reports(errors, config.models)
        models = {}
        curves = {}
        for m in config.models:
            path = out / artifact_name("curves", m, seed)
            if not path.exists():
                raise ReportError(f"missing {path.name} (run train first)")
            curves[m] = read_curves_csv(path)
            models[m] = {
                "param_count": param_count(config.model_config(m)),
                **{s: _metrics(errors[s].se[m]) for s in SEGMENTS},
                "curve": {
                    "epoch": [r.epoch for r in curves[m]],
                    "train_loss": [r.train_loss for r in curves[m]],
                    "test_loss": [r.test_loss for r in curves[m]],
                },
            }
        runs.append({"seed": seed, "models": models, "stats": [stat_report_dict(r) for r in reports]})
        if seed == config.seeds[0]:
            write_figures(config, qa, out, seed, curves, errors, reports)

    artifacts = []
    for seed in config.seeds:
        for m in config.models:
            artifacts += [artifact_name("ckpt", m, seed), artifact_name("curves", m, seed)]
        artifacts += [f"se_seed{seed}.csv", f"stats_seed{seed}.csv"]
    artifacts += ["qa.json", "adjacency.csv"] + figure_names(config.models)
    manifest = []
    for name in artifacts:
        path = out / name
        if not path.exists():
            raise ReportError(f"missing artifact {name}")
        manifest.append({"file": name, "sha256": _sha256(path)})

    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "config": config.echo(),
        "qa": qa.summary(config),
        "preprocessing": {
            "T": dataset.split.T,
            "boundary": dataset.split.boundary,
            "window": dataset.window,
            "train_windows": len(dataset.train),
            "test_windows": len(dataset.test),
            "normalize_scope": config.normalize_scope,
        },
        "runs": runs,
        "files": manifest,
    }


def write_report(report: dict, out: Path) -> Path:
    path = out / REPORT_FILE
    write_json(report, path)
    return path


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    if report.get("schema") != SCHEMA:
        raise ReportError(f"{path}: not a run report")
    if report.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"{path}: unsupported schema version {report.get('schema_version')!r}")
    return report


def config_from_report(report: dict, out: str = "out") -> PipelineConfig:
    """Rebuild the run configuration from the report's echo."""
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in report["config"].items()}
    return PipelineConfig(**values, out=out)


def report_tables(report: dict) -> dict[str, list[tuple]]:
    """Metric and test tables as plain tuples, for comparison and printing."""
    metrics, tests = [], []
    for run in report["runs"]:
        for model, m in run["models"].items():
            for seg in SEGMENTS:
                metrics.append((run["seed"], seg, model, m[seg]["mse"], m[seg]["median_se"]))
        for rep in run["stats"]:
            rows = [("kruskal_wallis", rep["omnibus"])]
            rows += [(f"mann_whitney_u:{k}", v) for k, v in rep["pairwise"].items()]
            for name, r in rows:
                tests.append((run["seed"], rep["segment"], name, r["statistic"], r["df"],
                              r["p"], r["corrected_p"], r["significant"]))
    return {"metrics": metrics, "tests": tests}


def _g(v) -> str:
    return "" if v is None else f"{v:.4g}" if isinstance(v, float) else str(v)


def render_tables(report: dict) -> str:
    tables = report_tables(report)
    lines = [f"{'seed':>5} {'segment':<7} {'model':<5} {'MSE':>10} {'median SE':>10}"]
    for seed, seg, model, mse, med in tables["metrics"]:
        lines.append(f"{seed:>5} {seg:<7} {model:<5} {mse:>10.4f} {med:>10.4f}")
    lines.append("")
    lines.append(f"{'seed':>5} {'segment':<7} {'test':<26} {'statistic':>10} {'p':>10} {'corr. p':>10} sig")
    for seed, seg, name, stat, _df, p, cp, sig in tables["tests"]:
        lines.append(f"{seed:>5} {seg:<7} {name:<26} {_g(stat):>10} {_g(p):>10} {_g(cp):>10} {'yes' if sig else 'no'}")
    return "\n".join(lines) + "\n"
