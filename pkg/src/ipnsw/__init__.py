"""Proximity-graph maximum inner product search (ip-NSW and ip-NSW+)."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    Dataset,
    NormGroupPartition,
    load_dataset,
    norm_percentile,
    partition_by_norm,
    save_dataset,
    scale_about_mode,
    scale_additive,
    synth_gaussian,
    tailing_factor,
    uniform_sample,
)
from .simgraph import ProximityGraph, SearchStats, SimilarityKind, build_nsw, graph_search  # noqa: E402
from .mips_index import (  # noqa: E402
    IpNswIndex,
    IpNswPlusIndex,
    ipnsw_build,
    ipnsw_query,
    ipnswplus_build,
    ipnswplus_query,
    load_index,
    save_index,
)
from .oracle import brute_topk, recall  # noqa: E402
