import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demandgraph.dataset import TemporalFeatureTable, default_dates
from demandgraph.graph import (
    DirectedGraph, GraphError, ProductNode, adjacency_matrix, dedupe, mask_inactive_nodes,
    neighborhood_mask, normalize_adjacency,
)


def node(code, plant="P1"):
    return ProductNode(code, "G", "SG", plant, "S1")


def table(codes, values):
    values = np.asarray(values, dtype=float)
    return TemporalFeatureTable("sales_order", tuple(codes), default_dates(values.shape[0]), values)


def test_dedupe_collapses_duplicates():
    g = dedupe([node("A"), node("B"), node("A")], [("A", "B"), ("A", "B")])
    assert g.codes == ["A", "B"]
    assert g.edges == ((0, 1),)


def test_dedupe_keeps_both_directions():
    g = dedupe([node("A"), node("B")], [("A", "B"), ("B", "A")])
    assert set(g.edges) == {(0, 1), (1, 0)}


def test_dedupe_keeps_first_occurrence():
    g = dedupe([ProductNode("A", "G1", "S", "P", "W"), ProductNode("A", "G2", "S", "P", "W")], [])
    assert g.nodes[0].group == "G1"


def test_dedupe_unknown_code_is_named():
    with pytest.raises(GraphError, match="ZZZ"):
        dedupe([node("A")], [("A", "ZZZ")])


def test_graph_rejects_bad_edges():
    with pytest.raises(GraphError):
        DirectedGraph((node("A"),), ((0, 1),))
    with pytest.raises(GraphError):
        DirectedGraph((node("A"), node("A")), ())


def test_fixture_dedupes_to_40(raw_fixture):
    g = dedupe(raw_fixture.nodes, raw_fixture.edges["plant"])
    assert len(raw_fixture.nodes) > 40
    assert g.n == 40


def test_fixture_masks_to_29(raw_fixture, qa_result):
    assert qa_result.deduped.n == 40
    assert qa_result.graph.n == 29
    assert sorted(qa_result.removed) == sorted(raw_fixture.inactive)


def test_mask_all_nonzero_unchanged():
    g = dedupe([node("A"), node("B")], [("A", "B")])
    sub, removed = mask_inactive_nodes(g, table("AB", np.ones((10, 2))), 0.5)
    assert removed == [] and sub == g


def test_mask_drops_node_and_its_edges():
    g = dedupe([node("A"), node("B"), node("C")], [("A", "B"), ("B", "C"), ("A", "C")])
    vals = np.ones((10, 3))
    vals[:, 1] = 0
    sub, removed = mask_inactive_nodes(g, table("ABC", vals), 0.9)
    assert removed == ["B"]
    assert sub.edge_codes() == [("A", "C")]


def test_mask_threshold_is_inclusive():
    g = dedupe([node("A"), node("B")], [])
    vals = np.ones((10, 2))
    vals[:9, 0] = 0  # zero fraction exactly 0.9
    _, removed = mask_inactive_nodes(g, table("AB", vals), 0.9)
    assert removed == ["A"]


def test_mask_everything_errors():
    g = dedupe([node("A")], [])
    with pytest.raises(GraphError, match="empty graph after masking"):
        mask_inactive_nodes(g, table("A", np.zeros((5, 1))), 0.9)


def test_adjacency_examples():
    g = dedupe([node("A"), node("B")], [("A", "B")])
    assert adjacency_matrix(g).tolist() == [[0, 1], [0, 0]]
    assert not adjacency_matrix(dedupe([node("A"), node("B")], [])).any()


def test_fixture_adjacency_is_directed(qa_result):
    A = adjacency_matrix(qa_result.graph)
    assert A.shape == (29, 29)
    assert A.sum() == len(qa_result.graph.edges)
    assert not np.array_equal(A, A.T)


def test_normalize_examples():
    assert normalize_adjacency(np.zeros((1, 1))).weights.tolist() == [[1.0]]
    w = normalize_adjacency(np.array([[0, 1], [0, 0]]), "symmetrized").weights
    np.testing.assert_allclose(w, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(normalize_adjacency(np.eye(3)).weights, np.eye(3), atol=1e-15)


def test_directed_in_orientation():
    # edge 0 -> 1: node 1 aggregates from node 0, node 0 only from itself
    w = normalize_adjacency(np.array([[0, 1], [0, 0]]), "directed_in").weights
    assert w[1, 0] > 0 and w[0, 1] == 0
    assert w[0, 0] == 1.0
    np.testing.assert_array_equal(neighborhood_mask(np.array([[0, 1], [0, 0]]), "directed_in"),
                                  [[1, 0], [1, 1]])


def test_regular_graph_rows_sum_to_one():
    n = 6
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = 1  # directed cycle; symmetrized every degree is 3 with self-loop
    np.testing.assert_allclose(normalize_adjacency(A).weights.sum(1), 1.0, atol=1e-14)


def test_unknown_mode():
    with pytest.raises(GraphError):
        normalize_adjacency(np.zeros((2, 2)), "undirected")


binary_matrices = st.integers(1, 7).flatmap(
    lambda n: st.lists(st.integers(0, 1), min_size=n * n, max_size=n * n).map(
        lambda xs: np.array(xs, dtype=float).reshape(n, n)))


@settings(max_examples=60, deadline=None)
@given(binary_matrices)
def test_symmetrized_operator_properties(A):
    w = normalize_adjacency(A, "symmetrized").weights
    np.testing.assert_allclose(w, w.T, atol=1e-15)
    assert (np.diag(w) > 0).all()
    mask = neighborhood_mask(A, "symmetrized")
    assert not w[mask == 0].any()
    # power iteration bound on the spectral radius
    v = np.ones(len(A))
    for _ in range(200):
        v = w @ v
        v /= np.linalg.norm(v)
    assert np.linalg.norm(w @ v) <= 1 + 1e-9
    d = mask.sum(1)
    np.testing.assert_allclose(w.sum(1), (mask / np.sqrt(np.outer(d, d))).sum(1), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=30),
       st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_dedupe_idempotent_and_masking_closed(edge_ids, node_ids):
    codes = [f"N{i}" for i in node_ids]
    known = set(codes)
    edges = [(f"N{a}", f"N{b}") for a, b in edge_ids if f"N{a}" in known and f"N{b}" in known]
    g = dedupe([node(c) for c in codes], edges)
    again = dedupe(list(g.nodes), g.edge_codes())
    assert again == g
    rng = np.random.default_rng(len(edges))
    vals = rng.integers(0, 2, size=(20, g.n)).astype(float)
    vals[:, 0] = 1.0  # keep at least one node
    sub, removed = mask_inactive_nodes(g, table(g.codes, vals), 0.6)
    assert set(sub.codes) <= set(g.codes)
    assert set(sub.codes) | set(removed) == set(g.codes)
    for a, b in sub.edge_codes():
        assert a in sub and b in sub
    assert sub.codes == [c for c in g.codes if c in set(sub.codes)]  # order preserved
