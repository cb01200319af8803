"""Synthetic SupplyGraph-format data.

The fixture mimics the raw export: 40 distinct products listed with some
duplicate rows, directed plant/storage/group/subgroup edge lists with repeated
rows, and four temporal features over 221 days. Eleven products are nearly
always zero; the remaining 29 follow the graph-coupled AR(1) generator on the
plant graph induced on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    FEATURES,
    TemporalFeatureTable,
    default_dates,
    synth_latent,
    to_quantities,
    write_edges_csv,
    write_feature_csv,
    write_nodes_csv,
)
from .graph import ProductNode, dedupe, induced_subgraph

N_PRODUCTS = 40
N_INACTIVE = 11
GROUPS = ("A", "ATPPCH", "E", "M", "P", "S")
PLANT_SIZES = (7, 6, 6, 5, 5, 4, 4, 3)  # sums to 40
INACTIVE_NONZERO = 0.05


@dataclass
class RawFixture:
    nodes: list[ProductNode]  # with duplicate rows
    edges: dict[str, list[tuple[str, str]]]  # per edge type, with duplicate rows
    features: dict[str, TemporalFeatureTable]
    inactive: list[str]


def _products(rng: np.random.Generator) -> list[ProductNode]:
    nodes = []
    idx = 0
    for plant_no, size in enumerate(PLANT_SIZES):
        for _ in range(size):
            group = GROUPS[idx % len(GROUPS)]
            nodes.append(ProductNode(
                code=f"SKU{idx + 1:03d}",
                group=group,
                subgroup=f"{group}{rng.integers(1, 4)}",
                plant=f"PL{plant_no + 1:02d}",
                storage=f"ST{rng.integers(1, 6):02d}",
            ))
            idx += 1
    return nodes


def _directed_within(nodes, attr: str, rng: np.random.Generator, keep: float) -> list[tuple[str, str]]:
    """Directed edges from earlier to later members of each category."""
    members: dict[str, list[str]] = {}
    for n in nodes:
        members.setdefault(getattr(n, attr), []).append(n.code)
    edges = []
    for codes in members.values():
        for i, src in enumerate(codes):
            for dst in codes[i + 1 :]:
                if rng.random() < keep:
                    edges.append((src, dst))
    return edges


def make_fixture(seed: int = 7, T: int = 221, coupling: float = 0.3, noise_std: float = 1.0) -> RawFixture:
    rng = np.random.default_rng([seed, 0xF1])
    nodes = _products(rng)
    edges = {
        "plant": _directed_within(nodes, "plant", rng, 1.0),
        "storage": _directed_within(nodes, "storage", rng, 0.5),
        "group": _directed_within(nodes, "group", rng, 0.3),
        "subgroup": _directed_within(nodes, "subgroup", rng, 0.6),
    }
    # raw exports repeat some rows
    raw_nodes = list(nodes)
    for i in sorted(rng.choice(N_PRODUCTS, size=5, replace=False)):
        raw_nodes.insert(int(rng.integers(i, len(raw_nodes) + 1)), nodes[i])
    for etype, elist in edges.items():
        if elist:
            dup = rng.choice(len(elist), size=min(4, len(elist)), replace=False)
            edges[etype] = elist + [elist[i] for i in sorted(dup)]

    inactive_idx = sorted(rng.choice(N_PRODUCTS, size=N_INACTIVE, replace=False))
    active_idx = [i for i in range(N_PRODUCTS) if i not in set(inactive_idx)]
    plant_graph = dedupe(nodes, edges["plant"], "plant")
    active_graph = induced_subgraph(plant_graph, active_idx)
    codes = tuple(n.code for n in nodes)
    dates = default_dates(T)

    features = {}
    for f_no, name in enumerate(FEATURES):
        x = synth_latent(active_graph, T, coupling, noise_std, [seed, f_no])
        values = np.zeros((T, N_PRODUCTS))
        values[:, active_idx] = to_quantities(x)
        sparse = np.random.default_rng([seed, f_no, 0x0FF])
        for j in inactive_idx:
            hits = sparse.choice(T, size=int(INACTIVE_NONZERO * T), replace=False)
            values[hits, j] = sparse.integers(1, 50, size=hits.size)
        features[name] = TemporalFeatureTable(name, codes, dates, values)
    return RawFixture(raw_nodes, edges, features, [codes[i] for i in inactive_idx])


def write_fixture(fixture: RawFixture, directory) -> dict[str, Path]:
    """Write ``nodes.csv``, ``edges_<type>.csv`` and ``<feature>.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"nodes": directory / "nodes.csv"}
    write_nodes_csv(fixture.nodes, paths["nodes"])
    for etype, elist in fixture.edges.items():
        paths[f"edges_{etype}"] = directory / f"edges_{etype}.csv"
        write_edges_csv(elist, paths[f"edges_{etype}"])
    for name, table in fixture.features.items():
        paths[name] = directory / f"{name}.csv"
        write_feature_csv(table, paths[name])
    return paths
