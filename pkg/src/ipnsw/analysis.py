"""Norm-bias analysis: the two Gaussian results and the dataset pipelines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, NormGroupPartition, partition_by_norm, uniform_sample
from .oracle import brute_topk_batch
from .simgraph import SearchStats, SimilarityKind

__all__ = [
    "adaptive_simpson",
    "theorem1_probability",
    "theorem2_conditional",
    "theorem2_simulate",
    "product_survival",
    "result_norm_occupancy",
    "computation_distribution",
    "cardinality_bias_curve",
    "recall_at_budgets",
    "NormBiasReport",
    "norm_bias_report",
]


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> float:
    """Integrate ``f`` on [a, b] by adaptive Simpson with Richardson correction."""

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(flo, flm, fmid, mid - lo)
        right = simpson(fmid, frm, fhi, hi - mid)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    return total


def theorem1_probability(alpha: float, tol: float = 1e-10) -> float:
    """P[q.x >= q.y | q.x >= 0, q.y >= 0] for x ~ N(0, alpha I), y ~ N(0, I).

    Equals 2 / (pi sqrt(alpha)) * int_0^inf exp(-a^2 / 2 alpha) int_0^a
    exp(-b^2 / 2) db da. The inner integral is sqrt(pi/2) erf(a / sqrt 2);
    the outer one is truncated at 12 standard deviations, where the
    Gaussian tail is below 1e-30.
    """
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    root = math.sqrt(alpha)
    half_pi = math.sqrt(math.pi / 2.0)

    def outer(a):
        return math.exp(-a * a / (2.0 * alpha)) * half_pi * math.erf(a / math.sqrt(2.0))

    const = 2.0 / (math.pi * root)
    integral = adaptive_simpson(outer, 0.0, 12.0 * root, tol=tol / const)
    return const * integral


def theorem2_conditional(x_norm: float, y_norm: float, beta: float,
                         gamma: float) -> tuple[float, float]:
    """Mean and variance of x.z given y.z = gamma, z ~ N(0, I)."""
    if not (x_norm > 0 and y_norm > 0):
        raise ValueError("norms must be > 0")
    if not -1 <= beta <= 1:
        raise ValueError(f"beta must be in [-1, 1], got {beta}")
    return gamma * beta * x_norm / y_norm, x_norm ** 2 * (1.0 - beta ** 2)


def theorem2_simulate(x_norm: float, y_norm: float, beta: float, d: int = 64,
                      n_samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Regress x.z on y.z over Gaussian z; return (slope, residual variance)."""
    if d < 2:
        raise ValueError("need d >= 2 to place two vectors at a given angle")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    e1, e2 = basis[:, 0], basis[:, 1]
    y = y_norm * e1
    x = x_norm * (beta * e1 + math.sqrt(max(0.0, 1.0 - beta ** 2)) * e2)
    z = rng.standard_normal((n_samples, d))
    a, b = z @ x, z @ y
    bc = b - b.mean()
    slope = float(bc @ (a - a.mean()) / (bc @ bc))
    resid = a - a.mean() - slope * bc
    return slope, float(resid @ resid / (n_samples - 2))


def product_survival(p_list) -> float:
    """Probability that an item beats every larger-norm competitor, assuming independence."""
    p = np.asarray(list(p_list), dtype=np.float64)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.prod(p))


def _group_shares(ids: np.ndarray, partition: NormGroupPartition) -> np.ndarray:
    counts = np.bincount(partition.assignment[ids], minlength=partition.n_groups)
    total = counts.sum()
    if total == 0:
        raise ValueError("no ids to distribute over groups")
    return counts / total


def result_norm_occupancy(dataset: Dataset, queries, k: int,
                          partition: NormGroupPartition) -> np.ndarray:
    """Share of the pooled exact top-k results (with duplicates) held by each norm group."""
    if partition.assignment.shape[0] != dataset.n:
        raise ValueError("partition does not match dataset")
    ids = brute_topk_batch(dataset, queries, k, SimilarityKind.INNER_PRODUCT)
    return _group_shares(ids.reshape(-1), partition)


def computation_distribution(stats_list, partition: NormGroupPartition) -> np.ndarray:
    """Share of all similarity evaluations that landed in each norm group."""
    stats_list = list(stats_list)
    if not stats_list:
        raise ValueError("no search stats given")
    ids = np.concatenate([s.eval_ids for s in stats_list]).astype(np.int64)
    if ids.size and ids.max() >= partition.assignment.shape[0]:
        raise ValueError("evaluated id outside the partition")
    return _group_shares(ids, partition)


def cardinality_bias_curve(dataset: Dataset, rates, queries, k: int = 10, seed: int = 0,
                           group_width: float = 5) -> dict[float, float]:
    """Top-group occupancy of exact top-k results after uniform subsampling at each rate."""
    out = {}
    for rate in rates:
        sample = uniform_sample(dataset, rate, seed)
        if sample.n < k:
            raise ValueError(f"rate {rate} leaves {sample.n} items, fewer than k={k}")
        part = partition_by_norm(sample, group_width)
        out[float(rate)] = float(result_norm_occupancy(sample, queries, k, part)[0])
    return out


def recall_at_budgets(evals, recalls, budgets) -> np.ndarray:
    """Linearly interpolate a (mean evals, mean recall) curve at ``budgets``.

    Budgets outside the curve's eval range give NaN; the curve is sorted by
    evals first.
    """
    evals = np.asarray(evals, dtype=np.float64)
    recalls = np.asarray(recalls, dtype=np.float64)
    order = np.argsort(evals, kind="stable")
    evals, recalls = evals[order], recalls[order]
    budgets = np.asarray(budgets, dtype=np.float64)
    out = np.interp(budgets, evals, recalls)
    out[(budgets < evals[0]) | (budgets > evals[-1])] = np.nan
    return out


@dataclass
class NormBiasReport:
    occupancy: np.ndarray
    computation_share: np.ndarray
    in_degree_ratio: np.ndarray


def norm_bias_report(dataset: Dataset, queries, k: int, graph, stats_list,
                     group_width: float = 5) -> NormBiasReport:
    from .simgraph import in_degree_stats

    part = partition_by_norm(dataset, group_width)
    occ = result_norm_occupancy(dataset, queries, k, part)
    comp = computation_distribution(stats_list, part)
    ind = in_degree_stats(graph, part)
    return NormBiasReport(occ, comp, ind["per_group"] / ind["global_mean"])
