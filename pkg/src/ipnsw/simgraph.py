"""Navigable small world graphs: insertion build and best-first graph walk."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from ._accel import get_kernels
from ._kernels_numpy import CandidatePool
from .dataset import Dataset, NormGroupPartition

__all__ = [
    "SimilarityKind",
    "ProximityGraph",
    "SearchStats",
    "CandidatePool",
    "GraphFormatError",
    "similarity",
    "graph_search",
    "build_nsw",
    "in_degree_stats",
    "insertion_order",
]


class SimilarityKind(str, enum.Enum):
    INNER_PRODUCT = "inner-product"
    ANGULAR = "angular"

    @property
    def tag(self) -> int:
        return 0 if self is SimilarityKind.INNER_PRODUCT else 1

    @classmethod
    def from_tag(cls, tag: int) -> "SimilarityKind":
        return (cls.INNER_PRODUCT, cls.ANGULAR)[tag]


def _kind(kind) -> SimilarityKind:
    return kind if isinstance(kind, SimilarityKind) else SimilarityKind(kind)


def similarity(kind, x, y) -> np.float32:
    """Inner product or cosine of two vectors, accumulated in float64."""
    kind = _kind(kind)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    dot = float(x @ y)
    if kind is SimilarityKind.ANGULAR:
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            raise ValueError("angular similarity undefined for a zero-norm operand")
        dot /= nx * ny
    return np.float32(dot)


@dataclass
class SearchStats:
    """Per-query instrumentation.

    ``eval_ids`` lists every item scored, in evaluation order; an item shows
    up at most once per graph stage. ``angular_evals`` is the part of
    ``eval_count`` spent on the angular graph (zero for single-graph search)
    and ``seed_evals`` the part spent scoring the initial pool.
    """

    eval_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    hop_count: int = 0
    angular_evals: int = 0
    seed_evals: int = 0

    @property
    def eval_count(self) -> int:
        return int(self.eval_ids.shape[0])

    @property
    def ip_evals(self) -> int:
        return self.eval_count - self.angular_evals


class GraphFormatError(ValueError):
    pass


_GRAPH_MAGIC = b"NSWG"
_GRAPH_VERSION = 1
_GRAPH_HEADER = struct.Struct("<4sIIIQQ")  # magic, version, kind, M, n, entry


@dataclass(eq=False)
class ProximityGraph:
    """Directed adjacency lists with out-degree <= M and a fixed entry vertex.

    ``adjacency`` is an (n, M) int32 matrix padded with -1; row v holds v's
    out-neighbors ordered by similarity to v (best first).
    """

    adjacency: np.ndarray
    degree: np.ndarray
    M: int
    entry_vertex: int
    kind: SimilarityKind

    def __post_init__(self):
        self.kind = _kind(self.kind)
        self.adjacency = np.ascontiguousarray(self.adjacency, dtype=np.int32)
        self.degree = np.ascontiguousarray(self.degree, dtype=np.int32)

    @property
    def n(self) -> int:
        return self.degree.shape[0]

    def neighbors(self, v: int) -> np.ndarray:
        return self.adjacency[v, :self.degree[v]]

    @property
    def n_edges(self) -> int:
        return int(self.degree.sum())

    def in_degrees(self) -> np.ndarray:
        mask = np.arange(self.M)[None, :] < self.degree[:, None]
        return np.bincount(self.adjacency[mask], minlength=self.n)

    def to_bytes(self) -> bytes:
        parts = [_GRAPH_HEADER.pack(_GRAPH_MAGIC, _GRAPH_VERSION, self.kind.tag,
                                    self.M, self.n, self.entry_vertex)]
        for v in range(self.n):
            nb = self.neighbors(v)
            parts.append(struct.pack("<I", nb.shape[0]))
            parts.append(nb.astype("<u4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ProximityGraph":
        if len(buf) < _GRAPH_HEADER.size:
            raise GraphFormatError("truncated graph header")
        magic, version, tag, M, n, entry = _GRAPH_HEADER.unpack_from(buf, 0)
        if magic != _GRAPH_MAGIC:
            raise GraphFormatError(f"bad graph magic {magic!r}")
        if version != _GRAPH_VERSION:
            raise GraphFormatError(f"unsupported graph version {version}")
        if tag not in (0, 1):
            raise GraphFormatError(f"unknown similarity tag {tag}")
        adj = np.full((n, M), -1, dtype=np.int32)
        deg = np.zeros(n, dtype=np.int32)
        off = _GRAPH_HEADER.size
        for v in range(n):
            if off + 4 > len(buf):
                raise GraphFormatError(f"truncated graph at vertex {v} (byte {off})")
            d = struct.unpack_from("<I", buf, off)[0]
            off += 4
            if d > M:
                raise GraphFormatError(f"vertex {v} degree {d} exceeds M={M}")
            if off + 4 * d > len(buf):
                raise GraphFormatError(f"truncated graph at vertex {v} (byte {off})")
            adj[v, :d] = np.frombuffer(buf, dtype="<u4", count=d, offset=off)
            deg[v] = d
            off += 4 * d
        if off != len(buf):
            raise GraphFormatError(f"trailing bytes after graph (byte {off})")
        return cls(adj, deg, M, entry, SimilarityKind.from_tag(tag))

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ProximityGraph":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def _scale(dataset: Dataset, kind: SimilarityKind) -> np.ndarray:
    if kind is SimilarityKind.INNER_PRODUCT:
        return np.ones(dataset.n, dtype=np.float64)
    if np.any(dataset.norms == 0):
        raise ValueError("angular similarity undefined for a zero-norm item")
    return 1.0 / dataset.norms


def _query(q, dataset: Dataset, kind: SimilarityKind) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != dataset.d:
        raise ValueError(f"query dimension {q.shape[0]} != dataset dimension {dataset.d}")
    if kind is SimilarityKind.ANGULAR:
        nq = np.linalg.norm(q)
        if nq == 0:
            raise ValueError("angular similarity undefined for a zero-norm query")
        q = q / nq
    return q


def graph_search(graph: ProximityGraph, dataset: Dataset, q, entry_set=None,
                 l: int = 10, k: int = 10, backend: str | None = None,
                 return_scores: bool = False):
    """Best-first walk from ``entry_set`` keeping a pool of the ``l`` best.

    Returns (top-k ids, SearchStats), or (ids, scores, stats) when
    ``return_scores`` is set. Fewer than k ids come back only when fewer
    than k items are reachable.
    """
    if k < 1 or l < 1:
        raise ValueError("k and l must be >= 1")
    if k > l:
        raise ValueError(f"k={k} exceeds pool size l={l}")
    if graph.n != dataset.n:
        raise ValueError("graph and dataset sizes differ")
    if entry_set is None:
        entry_set = [graph.entry_vertex]
    entries = np.asarray(entry_set, dtype=np.int64).reshape(-1)
    if entries.size == 0:
        raise ValueError("entry_set is empty")
    if entries.min() < 0 or entries.max() >= dataset.n:
        raise ValueError("entry_set contains an invalid id")
    kern = get_kernels(backend)
    visited = np.zeros(dataset.n, dtype=np.int32)
    evals = np.empty(dataset.n, dtype=np.int32)
    ids, scores, n_eval, hops = kern.search(
        dataset.items, _scale(dataset, graph.kind), _query(q, dataset, graph.kind),
        graph.adjacency, graph.degree, entries, l, visited, 1, evals)
    stats = SearchStats(evals[:n_eval].copy(), hop_count=int(hops),
                        angular_evals=n_eval if graph.kind is SimilarityKind.ANGULAR else 0)
    if return_scores:
        return ids[:k], scores[:k], stats
    return ids[:k], stats


def insertion_order(n: int, shuffle_seed: int | None = None) -> np.ndarray:
    """Id order, or a seeded random permutation when ``shuffle_seed`` is given."""
    if shuffle_seed is None:
        return np.arange(n, dtype=np.int64)
    return np.random.default_rng(shuffle_seed).permutation(n).astype(np.int64)


def _check_build(dataset: Dataset, M: int, l_build: int, order):
    if M < 1:
        raise ValueError("M must be >= 1")
    if l_build < M:
        raise ValueError(f"l_build={l_build} must be >= M={M}")
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (dataset.n,) or not np.array_equal(np.sort(order), np.arange(dataset.n)):
        raise ValueError("insertion order must be a permutation of the ids")
    return order


def build_nsw(dataset: Dataset, kind=SimilarityKind.INNER_PRODUCT, M: int = 16,
              l_build: int = 100, order=None, bidirectional: bool = True,
              backend: str | None = None) -> ProximityGraph:
    """Build an NSW graph by sequential insertion.

    Each item searches the current graph from the entry vertex (the first
    inserted item) and links to the best M items found; while fewer than M
    items exist it links to all of them. With ``bidirectional`` (default)
    every new edge v->u is mirrored as u->v, and u keeps only its M most
    similar out-neighbors. Without it edges only point back to earlier
    insertions, so the entry vertex has out-degree zero.
    """
    kind = _kind(kind)
    order = _check_build(dataset, M, l_build,
                         np.arange(dataset.n) if order is None else order)
    kern = get_kernels(backend)
    adj, deg = kern.build_graph(dataset.items, _scale(dataset, kind), order,
                                M, l_build, bidirectional)
    return ProximityGraph(adj, deg, M, int(order[0]), kind)


def in_degree_stats(graph: ProximityGraph, partition: NormGroupPartition) -> dict:
    """Mean in-degree per norm group plus the global mean."""
    if partition.assignment.shape[0] != graph.n:
        raise ValueError("partition does not cover the graph's vertices")
    indeg = graph.in_degrees().astype(np.float64)
    sums = np.bincount(partition.assignment, weights=indeg, minlength=partition.n_groups)
    sizes = partition.sizes()
    with np.errstate(invalid="ignore", divide="ignore"):
        per_group = np.where(sizes > 0, sums / np.maximum(sizes, 1), np.nan)
    return {"per_group": per_group, "global_mean": float(indeg.mean()),
            "in_degree": indeg}
