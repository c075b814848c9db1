"""ip-NSW and ip-NSW+ indexes for maximum inner product search."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import get_kernels
from .dataset import Dataset
from .simgraph import (
    ProximityGraph,
    SearchStats,
    SimilarityKind,
    _check_build,
    _query,
    _scale,
    build_nsw,
    graph_search,
    insertion_order,
)

__all__ = [
    "IpNswIndex",
    "IpNswPlusIndex",
    "ipnsw_build",
    "ipnsw_query",
    "ipnswplus_build",
    "ipnswplus_query",
    "save_index",
    "load_index",
    "IndexFormatError",
]

INDEX_META = "meta.json"


class IndexFormatError(ValueError):
    pass


@dataclass
class IpNswIndex:
    graph: ProximityGraph
    M: int
    l_build: int
    shuffle_seed: int | None = None
    meta: dict = field(default_factory=dict)

    kind_name = "ipnsw"

    def params(self) -> dict:
        return {"M": self.M, "l_build": self.l_build, "shuffle_seed": self.shuffle_seed}


@dataclass
class IpNswPlusIndex:
    angular_graph: ProximityGraph
    ip_graph: ProximityGraph
    M_a: int = 10
    l_a: int = 10
    M: int = 16
    l_build: int = 100
    k_prime: int = 10
    include_anchors: bool = False
    shuffle_seed: int | None = None
    meta: dict = field(default_factory=dict)

    kind_name = "ipnswplus"

    def params(self) -> dict:
        return {"M_a": self.M_a, "l_a": self.l_a, "M": self.M, "l_build": self.l_build,
                "k_prime": self.k_prime, "include_anchors": self.include_anchors,
                "shuffle_seed": self.shuffle_seed}


def ipnsw_build(dataset: Dataset, M: int = 16, l_build: int = 100,
                shuffle_seed: int | None = None, backend: str | None = None) -> IpNswIndex:
    order = insertion_order(dataset.n, shuffle_seed)
    graph = build_nsw(dataset, SimilarityKind.INNER_PRODUCT, M, l_build, order=order,
                      backend=backend)
    return IpNswIndex(graph, M, l_build, shuffle_seed)


def ipnsw_query(index: IpNswIndex, dataset: Dataset, q, l: int = 10, k: int = 10,
                backend: str | None = None):
    """Top-k MIPS by a walk on the inner-product graph from its entry vertex."""
    return graph_search(index.graph, dataset, q, None, l, k, backend=backend)


def ipnswplus_build(dataset: Dataset, M_a: int = 10, l_a: int = 10, M: int = 16,
                    l_build: int = 100, k_prime: int = 10, include_anchors: bool = False,
                    shuffle_seed: int | None = None,
                    backend: str | None = None) -> IpNswPlusIndex:
    """Build the angular graph and the inner-product graph in one pass.

    Each item is first inserted into the angular graph; the top ``k_prime``
    results of that angular search seed an inner-product walk which picks
    the item's inner-product neighbors.
    """
    order = insertion_order(dataset.n, shuffle_seed)
    _check_build(dataset, M_a, l_a, order)
    _check_build(dataset, M, l_build, order)
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    kern = get_kernels(backend)
    adj_a, deg_a, adj_g, deg_g = kern.build_plus(
        dataset.items, _scale(dataset, SimilarityKind.ANGULAR), order,
        M_a, l_a, M, l_build, k_prime, include_anchors, True)
    entry = int(order[0])
    return IpNswPlusIndex(
        ProximityGraph(adj_a, deg_a, M_a, entry, SimilarityKind.ANGULAR),
        ProximityGraph(adj_g, deg_g, M, entry, SimilarityKind.INNER_PRODUCT),
        M_a, l_a, M, l_build, k_prime, include_anchors, shuffle_seed)


def ipnswplus_query(index: IpNswPlusIndex, dataset: Dataset, q, k_prime: int | None = None,
                    l_a: int | None = None, l: int = 10, k: int = 10,
                    include_anchors: bool | None = None, backend: str | None = None,
                    timings: dict | None = None):
    """Two-stage query: angular walk, then an inner-product walk seeded from it.

    Stage one finds the top ``k_prime`` angular neighbors on the angular
    graph. Their out-neighbors in the inner-product graph, each scored
    once, form the initial pool of an inner-product walk with pool size
    ``l``. If that seed set is empty the walk starts at the entry vertex.
    Pass a dict as ``timings`` to receive per-stage wall time in ns.
    """
    k_prime = index.k_prime if k_prime is None else k_prime
    l_a = index.l_a if l_a is None else l_a
    include_anchors = index.include_anchors if include_anchors is None else include_anchors
    if k > l:
        raise ValueError(f"k={k} exceeds pool size l={l}")
    if k_prime < 1 or k_prime > l_a:
        raise ValueError(f"k_prime={k_prime} must be in [1, l_a={l_a}]")
    if index.ip_graph.n != dataset.n:
        raise ValueError("index and dataset sizes differ")
    kern = get_kernels(backend)
    n = dataset.n
    items = dataset.items

    t0 = time.perf_counter_ns()
    qa = _query(q, dataset, SimilarityKind.ANGULAR)
    visited = np.zeros(n, dtype=np.int32)
    evals = np.empty(2 * n, dtype=np.int32)
    g_a = index.angular_graph
    a_ids, _, n_a, hops_a = kern.search(
        items, _scale(dataset, SimilarityKind.ANGULAR), qa, g_a.adjacency, g_a.degree,
        np.array([g_a.entry_vertex], dtype=np.int64), l_a, visited, 1, evals)
    t1 = time.perf_counter_ns()

    qg = _query(q, dataset, SimilarityKind.INNER_PRODUCT)
    g = index.ip_graph
    ids, _, n_g, n_seed, hops_g = kern.seeded_search(
        items, np.ones(n, dtype=np.float64), qg, g.adjacency, g.degree,
        a_ids[:k_prime], include_anchors, g.entry_vertex, l, visited, 2, evals[n_a:])
    t2 = time.perf_counter_ns()
    if timings is not None:
        timings["angular_ns"] = t1 - t0
        timings["ip_ns"] = t2 - t1

    stats = SearchStats(evals[:n_a + n_g].copy(), hop_count=int(hops_a + hops_g),
                        angular_evals=int(n_a), seed_evals=int(n_seed))
    return ids[:k], stats


# -- persistence ----------------------------------------------------------------

def save_index(index, path, dataset: Dataset | None = None, extra: dict | None = None) -> Path:
    """Write ``index`` to directory ``path``: one file per graph plus meta.json."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = dict(index.meta)
    meta.update({"kind": index.kind_name, "params": index.params()})
    if dataset is not None:
        meta["dataset_checksum"] = dataset.checksum()
        meta["n"], meta["d"] = dataset.n, dataset.d
    if extra:
        meta.update(extra)
    if isinstance(index, IpNswIndex):
        index.graph.save(path / "ip.graph")
        meta["graphs"] = {"ip": "ip.graph"}
    else:
        index.angular_graph.save(path / "angular.graph")
        index.ip_graph.save(path / "ip.graph")
        meta["graphs"] = {"angular": "angular.graph", "ip": "ip.graph"}
    index.meta = meta
    with open(path / INDEX_META, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return path


def load_index(path):
    path = Path(path)
    meta_path = path / INDEX_META
    if not meta_path.is_file():
        raise IndexFormatError(f"{path} has no {INDEX_META}")
    with open(meta_path) as f:
        meta = json.load(f)
    p = meta.get("params", {})
    kind = meta.get("kind")
    if kind == "ipnsw":
        return IpNswIndex(ProximityGraph.load(path / meta["graphs"]["ip"]),
                          p["M"], p["l_build"], p.get("shuffle_seed"), meta)
    if kind == "ipnswplus":
        return IpNswPlusIndex(
            ProximityGraph.load(path / meta["graphs"]["angular"]),
            ProximityGraph.load(path / meta["graphs"]["ip"]),
            p["M_a"], p["l_a"], p["M"], p["l_build"], p["k_prime"],
            p.get("include_anchors", False), p.get("shuffle_seed"), meta)
    raise IndexFormatError(f"unknown index kind {kind!r}")
