"""Pipeline configuration: flat ``key = value`` files plus CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .dataset import FEATURES
from .graph import ADJACENCY_MODES, EDGE_TYPES
from .models import MODEL_KINDS, ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # real data; all empty means "use the synthetic fixture"
    data_dir: str = ""
    nodes_path: str = ""
    edges_path: str = ""
    feature_path: str = ""
    # synthetic fixture
    synth_seed: int = 7
    synth_T: int = 221
    synth_coupling: float = 0.3
    synth_noise_std: float = 1.0
    # graph and preprocessing
    edge_type: str = "plant"
    feature: str = "sales_order"
    train_ratio: float = 0.95
    window: int = 5
    zero_fraction_threshold: float = 0.9
    adjacency_mode: str = "symmetrized"
    normalize_scope: str = "train_only"
    # models
    models: tuple[str, ...] = MODEL_KINDS
    hidden_dim: int = 8
    gat_hidden_dim: int = 4
    gat_heads: int = 6
    dropout: float = 0.5
    leaky_relu_slope: float = 0.2
    # training
    epochs: int = 200
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seeds: tuple[int, ...] = (7,)
    # output directory
    out: str = "out"

    def __post_init__(self):
        if self.edge_type not in EDGE_TYPES:
            raise ConfigError(f"edge_type must be one of {', '.join(EDGE_TYPES)}")
        if self.feature not in FEATURES:
            raise ConfigError(f"feature must be one of {', '.join(FEATURES)}")
        if self.adjacency_mode not in ADJACENCY_MODES:
            raise ConfigError(f"adjacency_mode must be one of {', '.join(ADJACENCY_MODES)}")
        if self.normalize_scope not in ("train_only", "full_series"):
            raise ConfigError("normalize_scope must be train_only or full_series")
        if not self.models:
            raise ConfigError("models must not be empty")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown model {bad[0]!r}")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("models must not repeat")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must not repeat")
        if self.window < 1 or self.epochs < 1:
            raise ConfigError("window and epochs must be positive")
        explicit = [self.nodes_path, self.edges_path, self.feature_path]
        if any(explicit) and not all(explicit) and not self.data_dir:
            raise ConfigError("nodes_path, edges_path and feature_path must be given together")

    @property
    def synthetic(self) -> bool:
        return not (self.data_dir or self.nodes_path)

    def data_paths(self) -> tuple[Path, Path, Path]:
        """Explicit paths win; otherwise conventional names under ``data_dir``."""
        base = Path(self.data_dir)
        return (
            Path(self.nodes_path) if self.nodes_path else base / "nodes.csv",
            Path(self.edges_path) if self.edges_path else base / f"edges_{self.edge_type}.csv",
            Path(self.feature_path) if self.feature_path else base / f"{self.feature}.csv",
        )

    def model_config(self, kind: str) -> ModelConfig:
        if kind == "gat":
            return ModelConfig(kind, self.window, self.gat_hidden_dim, self.gat_heads, 1,
                               self.dropout, self.leaky_relu_slope)
        return ModelConfig(kind, self.window, self.hidden_dim, 1, 1, self.dropout, self.leaky_relu_slope)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.epochs, self.learning_rate, self.weight_decay,
                           self.beta1, self.beta2, self.eps, seed)

    def echo(self) -> dict[str, Any]:
        """Every field except the output directory, as JSON-friendly values."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "out":
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_SCALARS = {"str": str, "int": int, "float": float, "tuple[str, ...]": str, "tuple[int, ...]": int}
_TYPES = {name: _SCALARS[f.type] for name, f in FIELDS.items()}
_LISTS = {name for name, f in FIELDS.items() if f.type.startswith("tuple")}


def parse_value(key: str, raw: Any) -> Any:
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    conv = _TYPES[key]
    try:
        if key in _LISTS:
            items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(conv(str(i).strip()) for i in items if str(i).strip())
        return conv(str(raw).strip()) if not isinstance(raw, conv) else raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, raw)
    return values


def load_config(path=None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values = parse_config_text(text)
    for key, raw in (overrides or {}).items():
        values[key] = parse_value(key, raw)
    return PipelineConfig(**values)


def format_config(config: PipelineConfig) -> str:
    """Inverse of ``parse_config_text``."""
    lines = []
    for name in FIELDS:
        v = getattr(config, name)
        text = ",".join(map(str, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"
