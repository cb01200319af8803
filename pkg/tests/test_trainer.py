import dataclasses

import numpy as np
import pytest

from demandgraph.dataset import Segment
from demandgraph.graph import adjacency_matrix
from demandgraph.models import GraphOperators, ModelConfig, init_params
from demandgraph.trainer import (
    TrainConfig, TrainingError, evaluate, example_generators, fit_model, read_curves_csv,
    summarize, train, write_curves_csv,
)


@pytest.fixture(scope="module")
def ops(qa_result):
    return GraphOperators(adjacency_matrix(qa_result.graph))


def test_config_guards():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_mode="minibatch")


def test_one_epoch_one_record(windowed, ops):
    cfg = ModelConfig.default("gcn")
    params = init_params(cfg, 0)
    before = {k: p.value.copy() for k, p in params.items()}
    _, hist = train(cfg, params, windowed, ops, TrainConfig(epochs=1))
    assert [r.epoch for r in hist] == [1]
    assert any(not np.array_equal(before[k], params[k].value) for k in params)


def test_zero_learning_rate_is_noop(windowed, ops):
    cfg = ModelConfig.default("gat")
    params = init_params(cfg, 0)
    before = {k: p.value.copy() for k, p in params.items()}
    train(cfg, params, windowed, ops, TrainConfig(epochs=3, learning_rate=0.0, weight_decay=0.0))
    assert all(np.array_equal(before[k], params[k].value) for k in params)


def test_non_finite_loss_aborts_with_epoch(windowed, ops):
    X = windowed.train.X.copy()
    X[0, 0, 0] = np.nan
    bad = dataclasses.replace(windowed, train=Segment(X, windowed.train.y, windowed.train.t))
    with pytest.raises(TrainingError, match="epoch 1"):
        train(ModelConfig.default("mlp"), init_params(ModelConfig.default("mlp"), 0), bad, ops,
              TrainConfig(epochs=2))


def test_graph_models_need_adjacency(windowed):
    with pytest.raises(TrainingError):
        train(ModelConfig.default("gcn"), init_params(ModelConfig.default("gcn"), 0), windowed, None,
              TrainConfig(epochs=1))


def test_dropout_streams_keyed_per_example():
    a = example_generators(7, 3, 5)[2].random(4)
    b = example_generators(7, 3, 9)[2].random(4)
    c = example_generators(7, 4, 5)[2].random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


@pytest.mark.parametrize("kind", ["mlp", "gcn", "gat"])
def test_fit_is_deterministic(kind, windowed, ops):
    cfg = TrainConfig(epochs=4, seed=3)
    a = fit_model(kind, windowed, ops, cfg)
    b = fit_model(kind, windowed, ops, cfg)
    assert a.history == b.history
    assert np.array_equal(a.test_eval.se_matrix, b.test_eval.se_matrix)
    assert np.array_equal(a.train_eval.predictions, b.train_eval.predictions)


def test_evaluate_twice_identical_and_mse_is_mean(windowed, ops):
    cfg = ModelConfig.default("gat")
    params = init_params(cfg, 5)
    r1 = evaluate(cfg, params, windowed.test, ops)
    r2 = evaluate(cfg, params, windowed.test, ops)
    assert np.array_equal(r1.se_matrix, r2.se_matrix)
    assert r1.mse == pytest.approx(np.mean(r1.se_matrix), rel=1e-12)
    assert r1.median_se == np.median(r1.se_matrix)
    assert r1.se_matrix.shape == (7, 29)


def test_perfect_and_zero_predictors(windowed):
    y = windowed.train.y
    perfect = summarize(y, y, windowed.train.t)
    assert perfect.mse == 0 and perfect.median_se == 0 and not perfect.se_matrix.any()
    zero = summarize(np.zeros_like(y), y, windowed.train.t)
    assert zero.mse == pytest.approx(1.0, abs=0.05)


def test_empty_segment(ops):
    empty = Segment(np.zeros((0, 29, 5)), np.zeros((0, 29)), np.zeros(0, dtype=int))
    with pytest.raises(TrainingError):
        evaluate(ModelConfig.default("mlp"), init_params(ModelConfig.default("mlp"), 0), empty, ops)


@pytest.mark.parametrize("kind", ["mlp", "gcn", "gat"])
def test_training_reduces_loss(kind, windowed, ops):
    fit = fit_model(kind, windowed, ops, TrainConfig(seed=7))
    assert len(fit.history) == 200
    assert fit.history[-1].train_loss < fit.history[0].train_loss


def test_curves_csv_round_trip(windowed, ops, tmp_path):
    fit = fit_model("mlp", windowed, ops, TrainConfig(epochs=5))
    write_curves_csv(fit.history, tmp_path / "c.csv")
    assert read_curves_csv(tmp_path / "c.csv") == fit.history
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "epoch,train_loss,test_loss"
