import csv
import hashlib
import json

import numpy as np
import pytest

from demandgraph.cli import build_parser, main
from demandgraph.config import FIELDS, format_config
from demandgraph.graph import adjacency_matrix
from demandgraph.pipeline import SE_HEADER, preprocess, run_qa
from demandgraph.report import config_from_report, load_report, render_tables, report_tables
from demandgraph.trainer import fit_model
from demandgraph.models import GraphOperators

QUICK = ["--epochs", "3", "--seed", "7"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", *QUICK, "--out", str(out)]) == 0
    return out


def test_run_outputs(run_dir):
    report = load_report(run_dir / "report.json")
    assert report["schema_version"] == 1
    (run,) = report["runs"]
    assert run["seed"] == 7 and list(run["models"]) == ["mlp", "gcn", "gat"]
    assert [s["segment"] for s in run["stats"]] == ["train", "test"]
    kinds = {"adjacency", "curves", "series", "box"}
    svgs = sorted(p.name for p in run_dir.glob("fig_*.svg"))
    assert {name.split("_")[1].split(".")[0] for name in svgs} == kinds
    assert len(svgs) == 9
    for entry in report["files"]:
        assert hashlib.sha256((run_dir / entry["file"]).read_bytes()).hexdigest() == entry["sha256"]
    assert report["qa"]["nodes_after_dedup"] == 40 and report["qa"]["nodes_after_mask"] == 29
    assert report["preprocessing"]["train_windows"] == 204 and report["preprocessing"]["test_windows"] == 7
    assert len(run["models"]["gat"]["curve"]["epoch"]) == 3
    assert "out" not in report["config"]
    assert not (run_dir / "FAILED").exists()


def test_se_csv_schema(run_dir):
    with open(run_dir / "se_seed7.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SE_HEADER
    assert len(rows) - 1 == 3 * (204 + 7) * 29


def test_report_tables_round_trip_match_direct_fit(run_dir):
    report = load_report(run_dir / "report.json")
    tables = report_tables(report)
    config = config_from_report(report)
    qa = run_qa(config)
    ds = preprocess(config, qa)
    ops = GraphOperators(adjacency_matrix(qa.graph), config.adjacency_mode)
    for seed, seg, model, mse, med in tables["metrics"]:
        fit = fit_model(model, ds, ops, config.train_config(seed), config.model_config(model))
        ev = fit.train_eval if seg == "train" else fit.test_eval
        assert mse == float(np.mean(ev.se_matrix)) and med == float(np.median(ev.se_matrix))
    assert "kruskal_wallis" in render_tables(report)


def test_report_json_round_trip_exact(run_dir):
    text = (run_dir / "report.json").read_text()
    report = json.loads(text)
    assert json.dumps(report, indent=1, ensure_ascii=False) + "\n" == text


def test_config_echo_reruns_identically(run_dir, tmp_path):
    report = load_report(run_dir / "report.json")
    cfg_path = tmp_path / "echo.cfg"
    cfg_path.write_text(format_config(config_from_report(report, out=str(tmp_path / "again"))))
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "again" / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()


def test_stages_match_run(run_dir, tmp_path, capsys):
    out = str(tmp_path)
    for stage in ("qa", "train", "stats", "report"):
        assert main([stage, *QUICK, "--out", out]) == 0
    assert (tmp_path / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()
    assert (tmp_path / "stats_seed7.csv").read_bytes() == (run_dir / "stats_seed7.csv").read_bytes()


def test_qa_summary_line(tmp_path, capsys):
    assert main(["qa", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "nodes: 40 → 29 (removed 11)"
    with open(tmp_path / "adjacency.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 30 and len(rows[0]) == 30
    A = np.array([[int(v) for v in r[1:]] for r in rows[1:]])
    assert A.sum() == json.loads((tmp_path / "qa.json").read_text())["edges_after_mask"]


def test_synth_then_qa_from_files(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data)]) == 0
    assert {p.name for p in data.iterdir()} >= {"nodes.csv", "edges_plant.csv", "sales_order.csv"}
    capsys.readouterr()
    assert main(["qa", "--data-dir", str(data), "--out", str(tmp_path / "qa")]) == 0
    assert capsys.readouterr().out.startswith("nodes: 40 → 29 (removed 11)\n")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epochs = 3\nbogus = 1\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert err == ["ERROR config: unknown config key 'bogus'"]


def test_stage_failure_marked(tmp_path, capsys):
    assert main(["stats", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ERROR stats: ") and "\n" not in err
    assert (tmp_path / "FAILED").read_text().strip() == err


def test_missing_data_fails_in_qa(tmp_path, capsys):
    assert main(["qa", "--data-dir", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("ERROR qa: ")


def test_every_config_key_has_a_flag():
    help_text = build_parser()._subparsers._group_actions[0].choices["run"].format_help()
    for name in FIELDS:
        assert f"--{name.replace('_', '-')}" in help_text
    for flag in ("--config", "--seed", "--out", "--models", "--edge-type", "--feature"):
        assert flag in help_text
