"""Command-line harness: synth, build, groundtruth, bench, analyze."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import default_backend
from .dataset import (
    FORMATS,
    Dataset,
    DatasetFormatError,
    load_dataset,
    parse_norm_model,
    partition_by_norm,
    read_vectors,
    save_dataset,
    synth_gaussian,
)
from .mips_index import (
    IndexFormatError,
    IpNswIndex,
    ipnsw_build,
    ipnsw_query,
    ipnswplus_build,
    ipnswplus_query,
    load_index,
    save_index,
)
from .oracle import (
    brute_topk_batch,
    load_groundtruth,
    recall,
    save_groundtruth,
)
from .simgraph import GraphFormatError, SearchStats, SimilarityKind, in_degree_stats
from . import analysis

log = logging.getLogger("ipnsw")

OUT_DIR_ENV = "IPNSW_OUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4
EXIT_MISMATCH = 5


class ChecksumMismatch(RuntimeError):
    pass


def _out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _out_path(arg, default_name: str) -> Path:
    path = Path(arg) if arg else _out_dir() / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def queries_checksum(Q: np.ndarray) -> str:
    return Dataset(Q).checksum()


def provenance_line(config: dict, dataset_checksum: str | None, mode: str | None = None) -> str:
    line = f"# ipnsw {__version__} config={config_hash(config)} dataset={dataset_checksum or '-'}"
    if mode:
        line += f" mode={mode}"
    return line


def write_csv(path: Path, header: list[str], rows, provenance: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(provenance + "\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def write_json(path: Path, payload: dict, config: dict, dataset_checksum: str | None) -> None:
    payload = {"provenance": {"tool": f"ipnsw {__version__}", "config": config_hash(config),
                              "dataset": dataset_checksum}, **payload}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _load_queries(args) -> np.ndarray:
    Q = read_vectors(args.queries, args.format)
    if getattr(args, "num_queries", None):
        Q = Q[:args.num_queries]
    return Q


def _group_rows(part, values):
    return [(*part.bounds(g), float(v)) for g, v in enumerate(values)]


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    model = parse_norm_model(args.norm_model)
    ds = synth_gaussian(args.n, args.d, model, args.seed)
    out = _out_path(args.out, f"synth.{args.format}")
    save_dataset(ds, out, args.format)
    log.info("wrote %d x %d dataset to %s", ds.n, ds.d, out)
    if args.queries:
        qs = synth_gaussian(args.queries, args.d, "iid", args.query_seed)
        qout = _out_path(args.queries_out, f"queries.{args.format}")
        save_dataset(qs, qout, args.format)
        log.info("wrote %d queries to %s", qs.n, qout)
    return EXIT_OK


def cmd_build(args) -> int:
    ds = load_dataset(args.dataset, args.format)
    t0 = time.perf_counter()
    if args.index == "ipnsw":
        index = ipnsw_build(ds, args.M, args.l_build, args.shuffle_seed)
    else:
        index = ipnswplus_build(ds, args.M_a, args.l_a, args.M, args.l_build, args.k_prime,
                                args.seed_include_anchors, args.shuffle_seed)
    wall = time.perf_counter() - t0
    out = _out_path(args.out, f"{args.index}.index")
    save_index(index, out, ds, extra={"build_wall_s": wall, "tool_version": __version__,
                                      "backend": default_backend()})
    log.info("built %s in %.2fs -> %s", args.index, wall, out)
    return EXIT_OK


def groundtruth_key(ds: Dataset, Q: np.ndarray, k: int, kind: str) -> dict:
    return {"dataset_checksum": ds.checksum(), "queries_checksum": queries_checksum(Q),
            "k": k, "kind": kind}


def cmd_groundtruth(args) -> int:
    ds = load_dataset(args.dataset, args.format)
    Q = _load_queries(args)
    key = groundtruth_key(ds, Q, args.k, args.kind)
    out = _out_path(args.out, f"gt-{config_hash(key)}.bin")
    if out.is_file() and not args.force:
        try:
            _, cached = load_groundtruth(out)
        except ValueError:
            cached = None
        if cached == key:
            log.info("cache hit: %s", out)
            print(f"cache hit {out}")
            return EXIT_OK
    ids = brute_topk_batch(ds, Q, args.k, args.kind)
    save_groundtruth(ids, out, key)
    print(f"wrote {out}")
    return EXIT_OK


def _run_one(index, ds, q, l, k, args):
    """One timed query; returns (ids, stats, latency_ns, timings)."""
    timings = {}
    t0 = time.perf_counter_ns()
    if index is None:
        ids = brute_topk_batch(ds, q[None, :], k)[0]
        stats = SearchStats(np.arange(ds.n, dtype=np.int32))
    elif isinstance(index, IpNswIndex):
        ids, stats = ipnsw_query(index, ds, q, l=l, k=k)
    else:
        ids, stats = ipnswplus_query(index, ds, q, k_prime=args.k_prime, l_a=args.l_a, l=l, k=k,
                                     timings=timings)
    return ids, stats, time.perf_counter_ns() - t0, timings


def bench_rows(index, ds: Dataset, Q: np.ndarray, truth: np.ndarray, sweep, k: int, args,
               threads: int = 1) -> list[dict]:
    rows = []
    if len(Q):
        _run_one(index, ds, Q[0], sweep[0], k, args)  # warm-up, untimed
    for l in sweep:
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                res = list(pool.map(lambda q: _run_one(index, ds, q, l, k, args), Q))
        else:
            res = [_run_one(index, ds, q, l, k, args) for q in Q]
        lat = np.array([r[2] for r in res], dtype=np.float64)
        row = {
            "l": l,
            "mean_recall": float(np.mean([recall(r[0], t) for r, t in zip(res, truth)])),
            "mean_eval_count": float(np.mean([r[1].eval_count for r in res])),
            "mean_latency_ns": float(lat.mean()),
            "p50_latency_ns": float(np.percentile(lat, 50)),
            "p95_latency_ns": float(np.percentile(lat, 95)),
        }
        if index is not None and not isinstance(index, IpNswIndex):
            row["mean_angular_evals"] = float(np.mean([r[1].angular_evals for r in res]))
            row["mean_ip_evals"] = float(np.mean([r[1].ip_evals for r in res]))
            row["mean_angular_ns"] = float(np.mean([r[3]["angular_ns"] for r in res]))
            row["mean_ip_ns"] = float(np.mean([r[3]["ip_ns"] for r in res]))
        rows.append(row)
    return rows


def cmd_bench(args) -> int:
    ds = load_dataset(args.dataset, args.format)
    Q = _load_queries(args)
    sweep = _int_list(args.sweep)
    if not sweep or any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise ValueError("--sweep must be strictly increasing")
    if args.k > min(sweep):
        raise ValueError(f"k={args.k} exceeds the smallest pool size in the sweep")
    checksum = ds.checksum()
    if args.index == "brute":
        index = None
    else:
        index = load_index(args.index)
        if index.meta.get("dataset_checksum") not in (None, checksum):
            raise ChecksumMismatch("index was built on a different dataset")
    if args.groundtruth:
        truth, key = load_groundtruth(args.groundtruth)
        if key is not None and key.get("dataset_checksum") != checksum:
            raise ChecksumMismatch("ground truth was computed on a different dataset")
        if truth.shape[0] < Q.shape[0] or truth.shape[1] < args.k:
            raise ValueError("ground truth does not cover the queries / k")
        truth = truth[:Q.shape[0], :args.k]
    else:
        truth = brute_topk_batch(ds, Q, args.k)
    config = {"cmd": "bench", "index": args.index, "sweep": sweep, "k": args.k,
              "num_queries": int(Q.shape[0]), "k_prime": args.k_prime, "l_a": args.l_a,
              "threads": args.threads}
    if index is not None:
        config["params"] = index.params()
    rows = bench_rows(index, ds, Q, truth, sweep, args.k, args, args.threads)
    mode = "single-thread" if args.threads <= 1 else f"parallel({args.threads})"
    out = _out_path(args.out, "bench.csv")
    header = list(rows[0].keys())
    write_csv(out, header, [[r[h] for h in header] for r in rows],
              provenance_line(config, checksum, mode))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    sub = args.what
    config = {k: v for k, v in vars(args).items() if k != "func"}
    checksum = None
    if sub == "theorem1":
        alphas = _float_list(args.alpha)
        rows = [(a, analysis.theorem1_probability(a)) for a in alphas]
        out = _out_path(args.out, "theorem1.csv")
        write_csv(out, ["alpha", "p"], rows, provenance_line(config, None))
    elif sub == "theorem2":
        mean, var = analysis.theorem2_conditional(args.x_norm, args.y_norm, args.beta, args.gamma)
        payload = {"mean": mean, "variance": var}
        if args.simulate:
            slope, resid = analysis.theorem2_simulate(args.x_norm, args.y_norm, args.beta,
                                                      args.d, args.samples, args.seed)
            payload.update({"sim_slope": slope, "sim_residual_variance": resid,
                            "expected_slope": args.beta * args.x_norm / args.y_norm})
        out = _out_path(args.out, "theorem2.json")
        write_json(out, payload, config, None)
    else:
        ds = load_dataset(args.dataset, args.format)
        checksum = ds.checksum()
        if sub == "occupancy":
            part = partition_by_norm(ds, args.group_width)
            occ = analysis.result_norm_occupancy(ds, _load_queries(args), args.k, part)
            rows = _group_rows(part, occ)
        elif sub == "indegree":
            index = load_index(args.index)
            graph = index.graph if isinstance(index, IpNswIndex) else index.ip_graph
            part = partition_by_norm(ds, args.group_width)
            st = in_degree_stats(graph, part)
            rows = _group_rows(part, st["per_group"])
            print(f"global mean in-degree {st['global_mean']:.6f}")
        elif sub == "computation":
            index = load_index(args.index)
            part = partition_by_norm(ds, args.group_width)
            Q = _load_queries(args)
            if isinstance(index, IpNswIndex):
                stats = [ipnsw_query(index, ds, q, l=args.l, k=args.k)[1] for q in Q]
            else:
                stats = [ipnswplus_query(index, ds, q, l=args.l, k=args.k)[1] for q in Q]
            rows = _group_rows(part, analysis.computation_distribution(stats, part))
        elif sub == "cardinality":
            curve = analysis.cardinality_bias_curve(ds, _float_list(args.rates),
                                                    _load_queries(args), args.k, args.seed,
                                                    args.group_width)
            rows = list(curve.items())
        else:
            raise ValueError(f"unknown analysis {sub!r}")
        out = _out_path(args.out, f"{sub}.csv")
        if args.json:
            write_json(out, {"rows": rows}, config, checksum)
        else:
            header = ["rate", "value"] if sub == "cardinality" else \
                ["group_low_pct", "group_high_pct", "value"]
            write_csv(out, header, rows, provenance_line(config, checksum))
    print(f"wrote {out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def _add_io(p, queries=False):
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--format", choices=FORMATS, default="fvecs")
    if queries:
        p.add_argument("--queries", required=True, help="query file (same format)")
        p.add_argument("--num-queries", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipnsw", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic Gaussian dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--norm-model", default="iid",
                   help="iid | lognormal:SIGMA | scaled-top:FRACTION:FACTOR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="fvecs")
    p.add_argument("--out")
    p.add_argument("--queries", type=int, default=0, help="also write this many iid queries")
    p.add_argument("--query-seed", type=int, default=1)
    p.add_argument("--queries-out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build an ip-NSW or ip-NSW+ index")
    _add_io(p)
    p.add_argument("--index", choices=("ipnsw", "ipnswplus"), default="ipnsw")
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--l-build", type=int, default=100)
    p.add_argument("--M-a", type=int, default=10)
    p.add_argument("--l-a", type=int, default=10)
    p.add_argument("--k-prime", type=int, default=10)
    p.add_argument("--seed-include-anchors", action="store_true")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--out", help="index directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("groundtruth", help="exact top-k by linear scan, cached by checksum")
    _add_io(p, queries=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--kind", choices=[k.value for k in SimilarityKind], default="inner-product")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="recompute even on a cache hit")
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("bench", help="recall / evaluations / latency sweep over l")
    _add_io(p, queries=True)
    p.add_argument("--index", required=True, help="index directory or 'brute'")
    p.add_argument("--groundtruth")
    p.add_argument("--sweep", default="10,20,50,100")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--k-prime", type=int, default=None)
    p.add_argument("--l-a", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="norm-bias analyses")
    asub = p.add_subparsers(dest="what", required=True)

    a = asub.add_parser("theorem1")
    a.add_argument("--alpha", default="1,1.35,1.5,2,4,16")
    a.add_argument("--out")
    a = asub.add_parser("theorem2")
    a.add_argument("--x-norm", type=float, required=True)
    a.add_argument("--y-norm", type=float, required=True)
    a.add_argument("--beta", type=float, required=True)
    a.add_argument("--gamma", type=float, default=1.0)
    a.add_argument("--simulate", action="store_true")
    a.add_argument("--d", type=int, default=64)
    a.add_argument("--samples", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    for name in ("occupancy", "indegree", "computation", "cardinality"):
        a = asub.add_parser(name)
        _add_io(a, queries=name != "indegree")
        a.add_argument("--group-width", type=float, default=5)
        a.add_argument("--k", type=int, default=10)
        a.add_argument("--json", action="store_true")
        a.add_argument("--out")
        if name in ("indegree", "computation"):
            a.add_argument("--index", required=True)
        if name == "computation":
            a.add_argument("--l", type=int, default=50)
        if name == "cardinality":
            a.add_argument("--rates", default="0.1,0.3,1.0")
            a.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ChecksumMismatch as e:
        print(f"error[checksum]: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except (DatasetFormatError, GraphFormatError, IndexFormatError) as e:
        print(f"error[format]: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error[io]: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error[invalid]: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
