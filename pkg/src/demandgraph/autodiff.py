"""Minimal reverse-mode differentiation over dense float64 arrays.

Only the handful of primitives the forecasting models need are provided. Each
primitive computes its value eagerly and records a closure that, given the
upstream gradient, accumulates exact analytic gradients into its inputs.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (no grad buffers, no closures)."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str = "",
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad or (
            _grad_enabled and any(p.requires_grad for p in _parents)
        )
        self.grad = np.zeros_like(self.value) if self.requires_grad else None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        """Backpropagate from a scalar."""
        if self.value.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        order, seen = [], set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        self.grad += 1.0
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def Parameter(value, name: str = "") -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += _unbroadcast(g, t.shape)


def _result(value, parents, backward) -> Tensor:
    if not _grad_enabled:
        return Tensor(value)
    return Tensor(value, _parents=tuple(parents), _backward=backward)


# ------------------------------------------------------------------ primitives


def matmul(a, b) -> Tensor:
    """Batched ``a @ b`` with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.value, b.value)
    except ValueError:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.value, -1, -2)))
        if b.requires_grad:
            _accumulate(b, np.matmul(np.swapaxes(a.value, -1, -2), g))

    return _result(out, (a, b), backward)


def add(a, b) -> Tensor:
    """Broadcasting sum; ``add(H, b)`` with ``b`` of shape ``(d,)`` adds a row bias."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}") from None

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(out, (a, b), backward)


def add_row_bias(h, bias) -> Tensor:
    h, bias = as_tensor(h), as_tensor(bias)
    if bias.value.ndim != 1 or bias.shape[0] != h.shape[-1]:
        raise ShapeError(f"bias shape {bias.shape} does not fit rows of {h.shape}")
    return add(h, bias)


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.value > 0

    def backward(g):
        _accumulate(x, g * active)

    return _result(np.maximum(x.value, 0.0), (x,), backward)  # keeps NaN visible


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    if not 0.0 <= slope <= 1.0:
        raise ValueError("leaky_relu slope must lie in [0, 1]")

    def backward(g):
        _accumulate(x, np.where(x.value > 0, g, slope * g))

    return _result(np.maximum(x.value, slope * x.value), (x,), backward)


def masked_row_softmax(logits, mask) -> Tensor:
    """Softmax along the last axis over entries where ``mask`` is true.

    Masked entries are exactly zero. Every row must keep at least one entry.
    """
    logits = as_tensor(logits)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise ShapeError("masked_row_softmax: a row has no unmasked entry")
    row_max = np.where(mask, logits.value, -np.inf).max(axis=-1, keepdims=True)
    e = np.exp(logits.value - row_max) * mask
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accumulate(logits, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _result(y, (logits,), backward)


def dropout_mask(shape, p: float, rng) -> np.ndarray:
    """Inverted-dropout scaling mask.

    ``rng`` is a ``numpy.random.Generator`` or a sequence of generators, one per
    slice along the leading axis (keyed per example).
    """
    if isinstance(rng, np.random.Generator):
        keep = rng.random(shape) >= p
    else:
        rng = list(rng)
        if len(rng) != shape[0]:
            raise ShapeError(f"{len(rng)} generators for leading axis of size {shape[0]}")
        keep = np.stack([r.random(shape[1:]) >= p for r in rng])
    return keep / (1.0 - p)


def dropout(x, p: float, training: bool, rng=None) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    scale = dropout_mask(x.shape, p, rng)

    def backward(g):
        _accumulate(x, g * scale)

    return _result(x.value * scale, (x,), backward)


def mse(pred, target) -> Tensor:
    pred = as_tensor(pred)
    target = np.asarray(target.value if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.value - target

    def backward(g):
        _accumulate(pred, g * 2.0 * diff / diff.size)

    return _result(np.mean(diff * diff), (pred,), backward)


def pair_logits(z, att) -> Tensor:
    """Dense additive attention logits ``e[..., i, j] = att[:F] . z_i + att[F:] . z_j``.

    ``z`` has shape ``(..., H, N, F)`` and ``att`` shape ``(H, 2F)``; this equals
    ``att . [z_i || z_j]`` without materialising the concatenation.
    """
    z, att = as_tensor(z), as_tensor(att)
    H, N, F = z.shape[-3:]
    if att.shape != (H, 2 * F):
        raise ShapeError(f"attention shape {att.shape} does not fit features {z.shape}")
    a_self, a_nb = att.value[:, :F], att.value[:, F:]
    s_self = np.matmul(z.value, a_self[:, :, None])  # (..., H, N, 1)
    s_nb = np.matmul(z.value, a_nb[:, :, None])
    out = s_self + np.swapaxes(s_nb, -1, -2)

    def backward(g):
        _attention_backward(z, att, g.sum(axis=-1), g.sum(axis=-2))

    return _result(out, (z, att), backward)


def _attention_backward(z: Tensor, att: Tensor, g_self: np.ndarray, g_nb: np.ndarray) -> None:
    """Shared by the dense and edge-list logits; ``g_*`` have shape (..., H, N)."""
    H, N, F = z.shape[-3:]
    a_self, a_nb = att.value[:, :F], att.value[:, F:]
    if z.requires_grad:
        z.grad += (np.matmul(g_self[..., None], a_self[:, None, :])
                   + np.matmul(g_nb[..., None], a_nb[:, None, :]))
    if att.requires_grad:
        zf = z.value.reshape(-1, H, N, F)
        att.grad[:, :F] += np.einsum("bhn,bhnf->hf", g_self.reshape(-1, H, N), zf)
        att.grad[:, F:] += np.einsum("bhn,bhnf->hf", g_nb.reshape(-1, H, N), zf)


def _one_hot(index: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((index.size, n))
    out[np.arange(index.size), index] = 1.0
    return out


def edge_logits(z, att, dst, src) -> Tensor:
    """Edge-list form of :func:`pair_logits`: ``e[..., k] = logits[..., dst[k], src[k]]``."""
    z, att = as_tensor(z), as_tensor(att)
    H, N, F = z.shape[-3:]
    if att.shape != (H, 2 * F):
        raise ShapeError(f"attention shape {att.shape} does not fit features {z.shape}")
    s_self = np.matmul(z.value, att.value[:, :F, None])[..., 0]  # (..., H, N)
    s_nb = np.matmul(z.value, att.value[:, F:, None])[..., 0]
    out = s_self[..., dst] + s_nb[..., src]
    to_dst, to_src = _one_hot(dst, N), _one_hot(src, N)

    def backward(g):
        _attention_backward(z, att, g @ to_dst, g @ to_src)

    return _result(out, (z, att), backward)


def segment_softmax(logits, segment, n_segments: int) -> Tensor:
    """Softmax along the last axis within groups of entries sharing ``segment[k]``.

    Edge-list counterpart of :func:`masked_row_softmax` (row ``i`` of the mask
    corresponds to the entries with ``segment == i``).
    """
    logits = as_tensor(logits)
    segment = np.asarray(segment)
    seg = _one_hot(segment, n_segments)
    if not seg.any(axis=0).all():
        raise ShapeError("segment_softmax: a segment has no entry")
    vals = logits.value
    # any per-row shift is exact; the exact per-segment max is a fallback for underflow
    e = np.exp(vals - vals.max(axis=-1, keepdims=True))
    totals = e @ seg
    if not np.all(totals > 0):
        flat = vals.reshape(-1, vals.shape[-1])
        seg_max = np.full((flat.shape[0], n_segments), -np.inf)
        np.maximum.at(seg_max.T, segment, flat.T)
        e = np.exp(vals - seg_max[:, segment].reshape(vals.shape))
        totals = e @ seg
    y = e / totals[..., segment]

    def backward(g):
        dot = ((g * y) @ seg)[..., segment]
        _accumulate(logits, y * (g - dot))

    return _result(y, (logits,), backward)


def edge_aggregate(alpha, z, dst, src) -> Tensor:
    """``out[..., i, :] = sum over edges k with dst[k] == i of alpha[..., k] * z[..., src[k], :]``."""
    alpha, z = as_tensor(alpha), as_tensor(z)
    N = z.shape[-2]
    # scattering into a dense (N, N) operator and using batched matmul beats
    # gathering z per edge, since E * F exceeds N * N here
    dense = np.zeros((*alpha.shape[:-1], N, N))
    dense[..., dst, src] = alpha.value
    out = np.matmul(dense, z.value)

    def backward(g):
        if alpha.requires_grad:
            _accumulate(alpha, np.matmul(g, np.swapaxes(z.value, -1, -2))[..., dst, src])
        if z.requires_grad:
            _accumulate(z, np.matmul(np.swapaxes(dense, -1, -2), g))

    return _result(out, (alpha, z), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape

    def backward(g):
        _accumulate(x, g.reshape(old))

    return _result(x.value.reshape(shape), (x,), backward)


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        _accumulate(x, np.swapaxes(g, a, b))

    return _result(np.swapaxes(x.value, a, b), (x,), backward)


# ----------------------------------------------------------------- grad check


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest ``|analytic - numeric| / max(1, |numeric|)`` over all coordinates.

    ``loss_fn`` must be deterministic and read the current parameter values.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.value):
        raise FloatingPointError("grad_check: non-finite loss")
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().value)
            flat[i] = orig - eps
            down = float(loss_fn().value)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError("grad_check: non-finite loss")
            numeric = (up - down) / (2 * eps)
            worst = max(worst, abs(a.reshape(-1)[i] - numeric) / max(1.0, abs(numeric)))
    for p in params:
        p.zero_grad()
    return worst
