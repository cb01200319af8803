"""Full-batch training loop, learning curves and squared-error evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .dataset import Segment, WindowedDataset
from .models import GraphOperators, ModelConfig, forward, init_params
from .optim import Adam

# RNG stream ids under a run seed
INIT_STREAM = 0
DROPOUT_STREAM = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 7
    batch_mode: str = "full_batch"
    loss: str = "mse"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_mode != "full_batch":
            raise ValueError(f"unsupported batch mode {self.batch_mode!r}")
        if self.loss != "mse":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float


@dataclass(frozen=True)
class EvalResult:
    se_matrix: np.ndarray  # K x N
    mse: float
    median_se: float
    predictions: np.ndarray  # K x N
    labels: np.ndarray  # K x N
    t: np.ndarray  # K


def example_generators(seed: int, epoch: int, count: int) -> list[np.random.Generator]:
    """One dropout stream per (seed, epoch, example); independent of scheduling."""
    return [np.random.default_rng([seed, DROPOUT_STREAM, epoch, k]) for k in range(count)]


def _predict(config, params, segment: Segment, graph_ops, training=False, rng=None) -> ad.Tensor:
    return forward(config, params, segment.X, graph_ops, training, rng)


def segment_loss(config, params, segment: Segment, graph_ops) -> float:
    with ad.no_grad():
        pred = _predict(config, params, segment, graph_ops)
        return float(ad.mse(pred, segment.y[..., None]).value)


def train(
    model_config: ModelConfig,
    params: dict[str, ad.Tensor],
    dataset: WindowedDataset,
    graph_ops: GraphOperators | None,
    train_config: TrainConfig,
) -> tuple[dict[str, ad.Tensor], list[EpochRecord]]:
    """Train in place: per epoch one dropout-active pass over every training
    window, one Adam step on the mean squared error, then eval-mode losses."""
    if len(dataset.train) == 0:
        raise TrainingError("empty training segment")
    if model_config.kind != "mlp" and graph_ops is None:
        raise TrainingError(f"{model_config.kind} requires an adjacency")
    opt = Adam(
        list(params.values()), train_config.learning_rate, train_config.weight_decay,
        train_config.beta1, train_config.beta2, train_config.eps,
    )
    train_seg, test_seg = dataset.train, dataset.test
    target = train_seg.y[..., None]
    records = []
    for epoch in range(1, train_config.epochs + 1):
        opt.zero_grad()
        rngs = example_generators(train_config.seed, epoch, len(train_seg))
        pred = _predict(model_config, params, train_seg, graph_ops, training=True, rng=rngs)
        loss = ad.mse(pred, target)
        if not np.isfinite(loss.value):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        loss.backward()
        opt.step()
        train_loss = segment_loss(model_config, params, train_seg, graph_ops)
        test_loss = segment_loss(model_config, params, test_seg, graph_ops) if len(test_seg) else float("nan")
        if not (np.isfinite(train_loss) and (np.isfinite(test_loss) or not len(test_seg))):
            raise TrainingError(f"non-finite evaluation loss at epoch {epoch}")
        records.append(EpochRecord(epoch, train_loss, test_loss))
    return params, records


def squared_errors(predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return (np.asarray(predictions) - np.asarray(labels)) ** 2


def summarize(predictions: np.ndarray, labels: np.ndarray, t: np.ndarray) -> EvalResult:
    se = squared_errors(predictions, labels)
    return EvalResult(se, float(np.mean(se)), float(np.median(se)),
                      np.asarray(predictions), np.asarray(labels), np.asarray(t))


def evaluate(model_config: ModelConfig, params, segment: Segment, graph_ops) -> EvalResult:
    if len(segment) == 0:
        raise TrainingError("cannot evaluate an empty segment")
    with ad.no_grad():
        pred = _predict(model_config, params, segment, graph_ops).value[..., 0]
    return summarize(pred, segment.y, segment.t)


@dataclass
class FitResult:
    config: ModelConfig
    params: dict[str, ad.Tensor]
    history: list[EpochRecord]
    train_eval: EvalResult
    test_eval: EvalResult


def fit_model(kind: str, dataset: WindowedDataset, graph_ops: GraphOperators | None,
              train_config: TrainConfig, model_config: ModelConfig | None = None) -> FitResult:
    config = model_config or ModelConfig.default(kind, dataset.window)
    params = init_params(config, [train_config.seed, INIT_STREAM])
    params, history = train(config, params, dataset, graph_ops, train_config)
    return FitResult(
        config, params, history,
        evaluate(config, params, dataset.train, graph_ops),
        evaluate(config, params, dataset.test, graph_ops),
    )


def write_curves_csv(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_loss"])
        for r in history:
            w.writerow([r.epoch, format(r.train_loss, ".17g"), format(r.test_loss, ".17g")])


def read_curves_csv(path) -> list[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["test_loss"]))
                for r in reader]
