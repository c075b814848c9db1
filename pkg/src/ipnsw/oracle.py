"""Exact baselines: brute-force top-k, recall, and two-stage candidate studies."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .simgraph import SimilarityKind, _kind

__all__ = [
    "TopKResult",
    "brute_topk",
    "brute_topk_batch",
    "recall",
    "mean_recall",
    "two_stage_oracle_recall",
    "mips_of_mips_oracle_recall",
    "save_groundtruth",
    "load_groundtruth",
]


@dataclass(frozen=True)
class TopKResult:
    ids: np.ndarray
    scores: np.ndarray


def _score_matrix(dataset: Dataset, Q: np.ndarray, kind: SimilarityKind) -> np.ndarray:
    X = dataset.items.astype(np.float64)
    S = Q @ X.T
    if kind is SimilarityKind.ANGULAR:
        qn = np.linalg.norm(Q, axis=1)
        if np.any(qn == 0) or np.any(dataset.norms == 0):
            raise ValueError("angular similarity undefined for a zero-norm operand")
        S /= qn[:, None] * dataset.norms[None, :]
    return S


def _topk_rows(S: np.ndarray, k: int) -> np.ndarray:
    """Top-k column ids per row by (score desc, id asc), ties kept exact."""
    n = S.shape[1]
    out = np.empty((S.shape[0], k), dtype=np.int64)
    for r, row in enumerate(S):
        if k < n:
            kth = row[np.argpartition(-row, k - 1)[k - 1]]
            cand = np.flatnonzero(row >= kth)
        else:
            cand = np.arange(n)
        # lexsort sorts by last key first: score desc, then id asc
        out[r] = cand[np.lexsort((cand, -row[cand]))][:k]
    return out


def brute_topk_batch(dataset: Dataset, queries, k: int,
                     kind=SimilarityKind.INNER_PRODUCT, chunk: int = 256) -> np.ndarray:
    """(num_queries, k) exact top-k ids by full scan in float64."""
    kind = _kind(kind)
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != dataset.d:
        raise ValueError(f"query dimension {Q.shape[1]} != dataset dimension {dataset.d}")
    if not 1 <= k <= dataset.n:
        raise ValueError(f"k={k} must be in [1, n={dataset.n}]")
    parts = [_topk_rows(_score_matrix(dataset, Q[i:i + chunk], kind), k)
             for i in range(0, Q.shape[0], chunk)]
    return np.concatenate(parts) if parts else np.empty((0, k), dtype=np.int64)


def brute_topk(dataset: Dataset, q, k: int, kind=SimilarityKind.INNER_PRODUCT) -> TopKResult:
    kind = _kind(kind)
    q = np.asarray(q, dtype=np.float64).reshape(1, -1)
    ids = brute_topk_batch(dataset, q, k, kind)[0]
    scores = _score_matrix(dataset, q, kind)[0, ids]
    return TopKResult(ids, scores)


def recall(result, truth) -> float:
    """|result & truth| / |truth| over id sets."""
    truth = set(np.asarray(truth).reshape(-1).tolist())
    if not truth:
        raise ValueError("empty ground truth")
    result = set(np.asarray(result).reshape(-1).tolist())
    return len(result & truth) / len(truth)


def mean_recall(results, truths) -> float:
    return float(np.mean([recall(r, t) for r, t in zip(results, truths)]))


def _aggregate_recall(dataset: Dataset, queries, k: int, first_kind: SimilarityKind) -> float:
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    truth = brute_topk_batch(dataset, Q, k, SimilarityKind.INNER_PRODUCT)
    anchors = brute_topk_batch(dataset, Q, k, first_kind)
    uniq, inverse = np.unique(anchors, return_inverse=True)
    X = dataset.items.astype(np.float64)
    # an anchor's own MIPS list is taken over the full dataset, itself included
    anchor_mips = brute_topk_batch(dataset, X[uniq], k, SimilarityKind.INNER_PRODUCT)
    inverse = inverse.reshape(anchors.shape)
    total = 0.0
    for r in range(Q.shape[0]):
        cand = np.unique(anchor_mips[inverse[r]])
        total += np.intersect1d(cand, truth[r]).size / k
    return total / Q.shape[0]


def two_stage_oracle_recall(dataset: Dataset, queries, k: int = 10) -> float:
    """Mean recall of top-k MIPS within the exact MIPS lists of the exact angular top-k."""
    return _aggregate_recall(dataset, queries, k, SimilarityKind.ANGULAR)


def mips_of_mips_oracle_recall(dataset: Dataset, queries, k: int = 10) -> float:
    """Same as :func:`two_stage_oracle_recall` with MIPS neighbors in stage one."""
    return _aggregate_recall(dataset, queries, k, SimilarityKind.INNER_PRODUCT)


# -- ground-truth files ---------------------------------------------------------

_GT_HEADER = struct.Struct("<II")


def encode_groundtruth(ids: np.ndarray) -> bytes:
    ids = np.asarray(ids)
    nq, k = ids.shape
    return _GT_HEADER.pack(nq, k) + ids.astype("<u4").tobytes()


def decode_groundtruth(buf: bytes) -> np.ndarray:
    if len(buf) < _GT_HEADER.size:
        raise ValueError("truncated ground-truth header")
    nq, k = _GT_HEADER.unpack_from(buf, 0)
    need = _GT_HEADER.size + 4 * nq * k
    if len(buf) != need:
        raise ValueError(f"ground-truth file size {len(buf)} != expected {need}")
    arr = np.frombuffer(buf, dtype="<u4", offset=_GT_HEADER.size, count=nq * k)
    return arr.reshape(nq, k).astype(np.int64)


def save_groundtruth(ids: np.ndarray, path, key: dict | None = None) -> None:
    """Write ids plus a ``<path>.json`` sidecar holding the cache key."""
    path = Path(path)
    path.write_bytes(encode_groundtruth(ids))
    if key is not None:
        Path(str(path) + ".json").write_text(json.dumps(key, indent=2, sort_keys=True))


def load_groundtruth(path) -> tuple[np.ndarray, dict | None]:
    path = Path(path)
    ids = decode_groundtruth(path.read_bytes())
    side = Path(str(path) + ".json")
    key = json.loads(side.read_text()) if side.is_file() else None
    return ids, key
