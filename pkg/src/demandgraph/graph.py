"""Product graph container, quality-assurance steps and adjacency operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EDGE_TYPES = ("plant", "storage", "group", "subgroup")
ADJACENCY_MODES = ("symmetrized", "directed_in")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class ProductNode:
    code: str
    group: str = ""
    subgroup: str = ""
    plant: str = ""
    storage: str = ""

    def __post_init__(self):
        if not self.code:
            raise GraphError("product code must be non-empty")


@dataclass(frozen=True)
class DirectedGraph:
    """Homogeneous, binary, directed product graph.

    Edges are ordered ``(src, dst)`` index pairs into ``nodes``. The edge tuple
    is kept sorted so two graphs with the same content compare equal.
    """

    nodes: tuple[ProductNode, ...]
    edges: tuple[tuple[int, int], ...] = ()
    edge_type: str = "plant"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.edge_type not in EDGE_TYPES:
            raise GraphError(f"unknown edge type {self.edge_type!r}")
        codes = [n.code for n in self.nodes]
        if len(set(codes)) != len(codes):
            raise GraphError("duplicate node codes in graph")
        n = len(codes)
        edges = tuple(sorted(set((int(s), int(d)) for s, d in self.edges)))
        if len(edges) != len(self.edges):
            raise GraphError("duplicate edges in graph")
        for s, d in edges:
            if not (0 <= s < n and 0 <= d < n):
                raise GraphError(f"edge ({s}, {d}) out of range for {n} nodes")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(codes)})

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def codes(self) -> list[str]:
        return [node.code for node in self.nodes]

    def index(self, code: str) -> int:
        return self._index[code]

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def edge_codes(self) -> list[tuple[str, str]]:
        return [(self.nodes[s].code, self.nodes[d].code) for s, d in self.edges]


def dedupe(
    raw_nodes: Sequence[ProductNode],
    raw_edges: Iterable[tuple[str, str]],
    edge_type: str = "plant",
) -> DirectedGraph:
    """Keep the first occurrence of every product code and every directed edge."""
    raw_edges = list(raw_edges)
    if not raw_nodes:
        raise GraphError("no nodes given")
    nodes: list[ProductNode] = []
    seen: dict[str, int] = {}
    for node in raw_nodes:
        if node.code not in seen:
            seen[node.code] = len(nodes)
            nodes.append(node)

    edges: dict[tuple[int, int], None] = {}
    for src, dst in raw_edges:
        for code in (src, dst):
            if code not in seen:
                raise GraphError(f"edge references unknown product code {code!r}")
        edges.setdefault((seen[src], seen[dst]))
    return DirectedGraph(tuple(nodes), tuple(edges), edge_type)


def zero_fraction(values: np.ndarray) -> np.ndarray:
    """Fraction of exact zeros per column of a T x N matrix."""
    values = np.asarray(values, dtype=float)
    return (values == 0.0).mean(axis=0)


def induced_subgraph(graph: DirectedGraph, keep: Sequence[int]) -> DirectedGraph:
    keep = sorted(set(keep))
    remap = {old: new for new, old in enumerate(keep)}
    edges = [(remap[s], remap[d]) for s, d in graph.edges if s in remap and d in remap]
    return DirectedGraph(tuple(graph.nodes[i] for i in keep), tuple(edges), graph.edge_type)


def mask_inactive_nodes(graph: DirectedGraph, features, zero_fraction_threshold: float = 0.9):
    """Drop nodes whose feature series is (almost) all zeros.

    ``features`` is a ``TemporalFeatureTable`` (anything with ``product_codes``
    and a ``values`` T x N array). Returns ``(subgraph, removed_codes)``.
    """
    if not 0.0 < zero_fraction_threshold <= 1.0:
        raise GraphError("zero_fraction_threshold must lie in (0, 1]")
    columns = {code: j for j, code in enumerate(features.product_codes)}
    missing = [c for c in graph.codes if c not in columns]
    if missing:
        raise GraphError(f"feature table lacks products: {', '.join(missing)}")
    fractions = zero_fraction(features.values)
    keep, removed = [], []
    for i, code in enumerate(graph.codes):
        if fractions[columns[code]] >= zero_fraction_threshold:
            removed.append(code)
        else:
            keep.append(i)
    if not keep:
        raise GraphError("empty graph after masking")
    return induced_subgraph(graph, keep), removed


def adjacency_matrix(graph: DirectedGraph) -> np.ndarray:
    """Binary matrix with ``A[i, j] = 1`` iff edge ``i -> j`` exists."""
    A = np.zeros((graph.n, graph.n))
    for s, d in graph.edges:
        A[s, d] = 1.0
    return A


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Message-passing operator: ``weights[i, j]`` is the coefficient with which
    node ``i`` aggregates from node ``j``, so that ``H' = weights @ H``."""

    weights: np.ndarray
    mode: str

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def _with_self_loops(A: np.ndarray) -> np.ndarray:
    A_hat = (np.asarray(A) != 0).astype(float)
    np.fill_diagonal(A_hat, 1.0)
    return A_hat


def neighborhood_mask(A: np.ndarray, mode: str = "symmetrized") -> np.ndarray:
    """Boolean ``M[i, j]``: node ``i`` receives messages from node ``j``.

    Self-loops are always present. ``directed_in`` uses only edges ``j -> i``.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {A.shape}")
    if mode == "symmetrized":
        S = np.maximum(A != 0, A.T != 0)
    elif mode == "directed_in":
        S = A.T != 0
    else:
        raise GraphError(f"unknown adjacency mode {mode!r}")
    return _with_self_loops(S) > 0


def normalize_adjacency(A: np.ndarray, mode: str = "symmetrized") -> NormalizedAdjacency:
    """Degree-normalized operator ``D^-1/2 (A + I) D^-1/2``.

    For ``symmetrized`` the edge direction is dropped first. For ``directed_in``
    the degree is the in-degree of ``A + I`` and node ``i`` aggregates over its
    in-neighbors.
    """
    M = neighborhood_mask(A, mode).astype(float)
    # Row i of M lists the sources feeding node i, so row sums are in-degrees
    # (plain degrees once symmetrized).
    d = M.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return NormalizedAdjacency(inv_sqrt[:, None] * M * inv_sqrt[None, :], mode)
