"""Per-node MLP, two-layer GCN and two-layer multi-head GAT regressors.

All forwards take a batch of node-window matrices ``X`` of shape ``(B, N, window)``
(a single ``(N, window)`` matrix is also accepted) and return ``(B, N, 1)``.

Parameter draw order for :func:`init_params` (one ``default_rng(seed)``):

* mlp / gcn: ``W1``, ``W2``
* gat: ``W1`` head by head, ``att1`` head by head, ``W2``, ``att2``

Biases start at zero and consume no draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .graph import neighborhood_mask, normalize_adjacency

MODEL_KINDS = ("mlp", "gcn", "gat")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    input_dim: int = 5
    hidden_dim: int = 8
    heads: int = 1
    output_dim: int = 1
    dropout_p: float = 0.5
    leaky_relu_slope: float = 0.2

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if min(self.input_dim, self.hidden_dim, self.heads, self.output_dim) < 1:
            raise ValueError("model dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    @classmethod
    def default(cls, kind: str, input_dim: int = 5) -> "ModelConfig":
        if kind == "gat":
            return cls(kind, input_dim, hidden_dim=4, heads=6)
        return cls(kind, input_dim, hidden_dim=8)

    @property
    def hidden_width(self) -> int:
        return self.hidden_dim * self.heads if self.kind == "gat" else self.hidden_dim


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, size=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=size or (fan_in, fan_out))


def init_params(config: ModelConfig, seed) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    d_in, d_h, d_out = config.input_dim, config.hidden_dim, config.output_dim
    if config.kind in ("mlp", "gcn"):
        W1 = glorot(rng, d_in, d_h)
        W2 = glorot(rng, d_h, d_out)
        return {
            "W1": Parameter(W1, "W1"),
            "b1": Parameter(np.zeros(d_h), "b1"),
            "W2": Parameter(W2, "W2"),
            "b2": Parameter(np.zeros(d_out), "b2"),
        }
    H = config.heads
    W1 = np.stack([glorot(rng, d_in, d_h) for _ in range(H)])
    att1 = np.stack([glorot(rng, 2 * d_h, 1).ravel() for _ in range(H)])
    W2 = glorot(rng, H * d_h, d_out)
    att2 = glorot(rng, 2 * d_out, 1).reshape(1, 2 * d_out)
    return {
        "W1": Parameter(W1, "W1"),
        "att1": Parameter(att1, "att1"),
        "b1": Parameter(np.zeros(H * d_h), "b1"),
        "W2": Parameter(W2, "W2"),
        "att2": Parameter(att2, "att2"),
        "b2": Parameter(np.zeros(d_out), "b2"),
    }


def param_count(config: ModelConfig) -> int:
    d_in, d_h, d_out, H = config.input_dim, config.hidden_dim, config.output_dim, config.heads
    if config.kind in ("mlp", "gcn"):
        return d_in * d_h + d_h + d_h * d_out + d_out
    layer1 = H * (d_in * d_h + 2 * d_h) + H * d_h
    layer2 = H * d_h * d_out + 2 * d_out + d_out
    return layer1 + layer2


def _batched(X) -> Tensor:
    X = ad.as_tensor(X)
    if X.value.ndim == 2:
        X = ad.reshape(X, (1, *X.shape))
    if X.value.ndim != 3:
        raise ad.ShapeError(f"expected (B, N, window) inputs, got {X.shape}")
    return X


def mlp_forward(X, params, config: ModelConfig, training: bool = False, rng=None) -> Tensor:
    X = _batched(X)
    h = ad.relu(ad.add_row_bias(ad.matmul(X, params["W1"]), params["b1"]))
    h = ad.dropout(h, config.dropout_p, training, rng)
    return ad.add_row_bias(ad.matmul(h, params["W2"]), params["b2"])


def gcn_forward(X, A_hat, params, config: ModelConfig, training: bool = False, rng=None) -> Tensor:
    X = _batched(X)
    A = np.asarray(getattr(A_hat, "weights", A_hat))
    if A.shape != (X.shape[1], X.shape[1]):
        raise ad.ShapeError(f"adjacency {A.shape} does not match {X.shape[1]} nodes")
    h = ad.matmul(A, ad.matmul(X, params["W1"]))
    h = ad.relu(ad.add_row_bias(h, params["b1"]))
    h = ad.dropout(h, config.dropout_p, training, rng)
    out = ad.matmul(A, ad.matmul(h, params["W2"]))
    return ad.add_row_bias(out, params["b2"])


def edge_list(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(dst, src)`` index arrays of a neighborhood mask, grouped by ``dst``."""
    return np.nonzero(np.asarray(mask, dtype=bool))


def gat_attention(z: Tensor, att, dst, src, n: int, slope: float) -> Tensor:
    """Attention coefficient per edge ``(B, H, E)``; they sum to one over the
    edges entering each node."""
    return ad.segment_softmax(ad.leaky_relu(ad.edge_logits(z, att, dst, src), slope), dst, n)


def gat_forward(X, mask, params, config: ModelConfig, training: bool = False, rng=None,
                return_attention: bool = False):
    """``mask[i, j]`` true when node ``i`` attends to node ``j`` (self-loops required).

    With ``return_attention`` also returns both layers' coefficients as dense
    ``(B, H, N, N)`` arrays.
    """
    X = _batched(X)
    B, N, _ = X.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (N, N):
        raise ad.ShapeError(f"mask {mask.shape} does not match {N} nodes")
    if not mask.diagonal().all():
        raise ad.ShapeError("attention mask must contain self-loops")
    H, F = config.heads, config.hidden_dim
    dst, src = edge_list(mask)

    z1 = ad.matmul(ad.reshape(X, (B, 1, N, X.shape[2])), params["W1"])  # B,H,N,F
    alpha1 = gat_attention(z1, params["att1"], dst, src, N, config.leaky_relu_slope)
    h = ad.edge_aggregate(alpha1, z1, dst, src)
    h = ad.reshape(ad.swapaxes(h, 1, 2), (B, N, H * F))
    h = ad.relu(ad.add_row_bias(h, params["b1"]))
    h = ad.dropout(h, config.dropout_p, training, rng)

    z2 = ad.reshape(ad.matmul(h, params["W2"]), (B, 1, N, config.output_dim))
    alpha2 = gat_attention(z2, params["att2"], dst, src, N, config.leaky_relu_slope)
    out = ad.reshape(ad.edge_aggregate(alpha2, z2, dst, src), (B, N, config.output_dim))
    out = ad.add_row_bias(out, params["b2"])
    if return_attention:
        dense = []
        for alpha in (alpha1.value, alpha2.value):
            full = np.zeros((*alpha.shape[:-1], N, N))
            full[..., dst, src] = alpha
            dense.append(full)
        return out, tuple(dense)
    return out


class GraphOperators:
    """Graph inputs for every model kind, built once per graph."""

    def __init__(self, A: np.ndarray, mode: str = "symmetrized"):
        self.A = np.asarray(A)
        self.mode = mode
        self.normalized = normalize_adjacency(self.A, mode).weights
        self.mask = neighborhood_mask(self.A, mode)


def forward(config: ModelConfig, params, X, graph_ops: GraphOperators | None,
            training: bool = False, rng=None) -> Tensor:
    if config.kind == "mlp":
        return mlp_forward(X, params, config, training, rng)
    if graph_ops is None:
        raise ValueError(f"{config.kind} needs graph operators")
    if config.kind == "gcn":
        return gcn_forward(X, graph_ops.normalized, params, config, training, rng)
    return gat_forward(X, graph_ops.mask, params, config, training, rng)


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = "demandgraph-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, config: ModelConfig, params: dict[str, Tensor]) -> None:
    """Decimal text: magic/version line, config line, then per parameter a
    ``name ndim d0 d1 ...`` header followed by one value per line."""
    lines = [
        f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}",
        (f"config kind={config.kind} input_dim={config.input_dim} hidden_dim={config.hidden_dim} "
         f"heads={config.heads} output_dim={config.output_dim} dropout_p={config.dropout_p!r} "
         f"leaky_relu_slope={config.leaky_relu_slope!r}"),
    ]
    for name, p in params.items():
        lines.append(" ".join([name, str(p.value.ndim), *map(str, p.shape)]))
        lines.extend(format(float(v), ".17g") for v in p.value.ravel())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, Tensor]]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise ValueError(f"{path}: not a v{CHECKPOINT_VERSION} checkpoint")
    fields = dict(item.split("=", 1) for item in lines[1].split()[1:])
    config = ModelConfig(
        fields["kind"], int(fields["input_dim"]), int(fields["hidden_dim"]), int(fields["heads"]),
        int(fields["output_dim"]), float(fields["dropout_p"]), float(fields["leaky_relu_slope"]),
    )
    params, i = {}, 2
    while i < len(lines):
        name, ndim, *dims = lines[i].split()
        shape = tuple(int(d) for d in dims[: int(ndim)])
        size = int(np.prod(shape))
        values = np.array([float(v) for v in lines[i + 1 : i + 1 + size]])
        params[name] = Parameter(values.reshape(shape), name)
        i += 1 + size
    return config, params
