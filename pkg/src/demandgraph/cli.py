"""Command-line entry point: ``demandgraph {qa,synth,train,stats,report,run}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import FIELDS, ConfigError, PipelineConfig, load_config
from .pipeline import stage_qa, stage_stats, stage_synth, stage_train
from .report import build_report, render_tables, write_report

COMMANDS = {
    "qa": "dedupe and mask the graph; write qa.json and adjacency.csv",
    "synth": "write the synthetic fixture CSVs",
    "train": "train every model and seed; write checkpoints, curves and SE CSVs",
    "stats": "run the rank tests on the SE CSVs; write stats CSVs",
    "report": "assemble report.json and the SVG figures",
    "run": "qa, train, stats and report in one go",
}
FAILED_MARKER = "FAILED"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="single training seed (shorthand for --seeds)")
    g = p.add_argument_group("config overrides (one flag per config key)")
    for name, f in FIELDS.items():
        default = getattr(PipelineConfig(), name)
        shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}", metavar="VALUE",
                       help=f"default: {shown!s}" if shown != "" else "default: unset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demandgraph", description="Graph demand forecasting pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in COMMANDS.items():
        _add_config_flags(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {name: getattr(args, f"cfg_{name}") for name in FIELDS
                 if getattr(args, f"cfg_{name}") is not None}
    if args.seed is not None:
        overrides["seeds"] = str(args.seed)
    return load_config(args.config, overrides)


def _stats_lines(reports) -> list[str]:
    return [f"seed {seed} {rep.segment}: Kruskal-Wallis p = {rep.omnibus.p_value:.4g}"
            for seed, reps in reports.items() for rep in reps]


def _run(command: str, config: PipelineConfig, out: Path, state: dict) -> list[str]:
    """Execute one subcommand and return lines for stdout; ``state["stage"]``
    tracks the stage in progress for error reporting."""
    lines = []
    if command == "synth":
        paths = stage_synth(config, out)
        return [f"wrote {len(paths)} fixture files to {out}"]
    if command == "stats":
        state["stage"] = "stats"
        return _stats_lines(stage_stats(config, out))

    state["stage"] = "qa"
    qa = stage_qa(config, out)
    if command in ("qa", "run"):
        lines.append(qa.headline())
        lines.append(f"edges: {len(qa.deduped.edges)} → {len(qa.graph.edges)}")
    if command == "qa":
        return lines

    if command in ("train", "run"):
        state["stage"] = "train"
        results = stage_train(config, out, qa)
        for seed, fits in results.items():
            for model, fit in fits.items():
                last = fit.history[-1]
                lines.append(f"seed {seed} {model}: train loss {last.train_loss:.4f}, test loss {last.test_loss:.4f}")
    if command in ("stats", "run"):
        state["stage"] = "stats"
        lines += _stats_lines(stage_stats(config, out))
    if command in ("report", "run"):
        state["stage"] = "report"
        report = build_report(config, qa, out)
        path = write_report(report, out)
        lines.append(render_tables(report).rstrip("\n"))
        lines.append(f"wrote {path}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"ERROR config: {exc}", file=sys.stderr)
        return 2

    out = Path(config.out)
    marker = out / FAILED_MARKER
    state = {"stage": args.command}
    try:
        out.mkdir(parents=True, exist_ok=True)
        if marker.exists():
            marker.unlink()
        lines = _run(args.command, config, out, state)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        line = f"ERROR {state['stage']}: {exc}"
        print(line, file=sys.stderr)
        if out.is_dir():
            marker.write_text(line + "\n", encoding="utf-8")
        return 1
    for line in lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
