"""Command-line interface wiring the library together.

Exit codes: 0 on success, 2 on usage errors (bad flags or out-of-range
values caught at parse time), 1 on runtime failures. Every stochastic
command takes a mandatory --seed so runs are replayable; outputs go to
files and stdout carries a single summary line.
"""

from __future__ import annotations

import argparse
import csv
import sys
from contextlib import nullcontext

import numpy as np

from . import bench as bench_mod
from .clustering import DbscanParams, dbscan_sparse, save_assignment
from .data import load_features, load_labels, save_features
from .evaluation import ensemble_distances, evaluate_ranking, save_summary
from .knn import NeighborList, topk_neighbors
from .rerank import FrrParams, SparseRefinedDistances, full_rerank, local_rerank
from .sampling import neighborhood_sample
from .scheduler import KINDS, EpsSchedule, schedule_curve


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _percentage(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 100.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 100], got {value}")
    return value


def _unit_open(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {value}")
    return value


def _unit_closed(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints: {text}") from exc


def _schedule_kind(text: str) -> str:
    kind = text.replace("-", "_")
    if kind not in KINDS:
        raise argparse.ArgumentTypeError(f"unknown kind {text!r}")
    return kind


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="localreid",
        description="Neighborhood re-ranking, density-scheduled clustering, "
        "and retrieval evaluation over feature collections.",
    )
    parser.add_argument(
        "--threads", type=_positive_int, default=None,
        help="worker budget for linear algebra (default: all available cores)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("knn", help="exact top-k neighbor lists")
    p.add_argument("--input", required=True, help="FVEC feature file")
    p.add_argument("--k", type=_positive_int, default=20)
    p.add_argument("--metric", choices=["cosine", "euclidean"], default="euclidean")
    p.add_argument("--out", required=True, help="NNLK output file")

    p = sub.add_parser("rerank", help="refine pairwise distances")
    p.add_argument("--mode", choices=["local", "full"], default="local")
    p.add_argument("--input", required=True, help="FVEC feature file")
    p.add_argument("--k", type=_positive_int, default=20, help="neighbors (local mode)")
    p.add_argument("--k1", type=_positive_int, default=20, help="reciprocal size (full mode)")
    p.add_argument("--k2", type=_positive_int, default=6, help="query expansion (full mode)")
    p.add_argument("--lambda-jaccard", type=_unit_closed, default=0.3)
    p.add_argument("--metric", choices=["cosine", "euclidean"], default="euclidean")
    p.add_argument("--out", required=True, help="SRDM (local) or FVEC table (full)")

    p = sub.add_parser("sample", help="anchor-neighborhood subset selection")
    p.add_argument("--input", required=True, help="FVEC feature file")
    p.add_argument("--p", type=_percentage, default=100.0, help="subset percentage")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metric", choices=["cosine", "euclidean"], default="cosine")
    p.add_argument("--out", required=True, help="one-column CSV of member indices")

    p = sub.add_parser("schedule", help="density-radius schedule as CSV")
    p.add_argument("--kind", type=_schedule_kind, default="noise_robust")
    p.add_argument("--epochs", type=_positive_int, default=40)
    p.add_argument("--eps-lo", type=_unit_open, default=0.5)
    p.add_argument("--eps-hi", type=_unit_open, default=0.7)
    p.add_argument("--eps-steady", type=_unit_open, default=0.6)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="DBSCAN over sparse refined distances")
    p.add_argument("--input", required=True, help="SRDM file")
    p.add_argument("--epsilon", type=_unit_open, required=True)
    p.add_argument("--min-samples", type=_positive_int, default=4)
    p.add_argument("--out", required=True, help="CSV of index,label")

    p = sub.add_parser("eval", help="mAP and CMC ranks from distance tables")
    p.add_argument(
        "--dist", action="append", required=True,
        help="FVEC query-by-gallery distance table (repeat to ensemble-average)",
    )
    p.add_argument("--query-labels", required=True, help="labels CSV")
    p.add_argument("--gallery-labels", required=True, help="labels CSV")
    p.add_argument("--ranks", type=_int_list, default=[1, 5, 10])
    p.add_argument("--out", required=True, help="summary CSV")

    p = sub.add_parser("bench", help="time both re-ranking methods on synthetic data")
    p.add_argument("--sizes", type=_int_list, required=True, help="ascending point counts")
    p.add_argument("--k", type=_positive_int, default=20)
    p.add_argument("--d", type=_positive_int, default=64)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--frr-max-n", type=_positive_int, default=30_000)
    p.add_argument("--out", required=True, help="report CSV")

    p = sub.add_parser("pipeline", help="multi-view clustering pipeline simulation")
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--seed", type=int, help="mandatory here or in the config file")
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--p", type=_percentage, default=None)
    p.add_argument("--k", type=_positive_int, default=None)
    p.add_argument("--metric", choices=["cosine", "euclidean"], default=None)
    p.add_argument("--schedule-kind", type=_schedule_kind, default=None)
    p.add_argument("--eps-lo", type=_unit_open, default=None)
    p.add_argument("--eps-hi", type=_unit_open, default=None)
    p.add_argument("--eps-steady", type=_unit_open, default=None)
    p.add_argument("--min-samples", type=_positive_int, default=None)
    p.add_argument("--tau", type=_positive_float, default=None)
    p.add_argument("--lambda-hard", type=float, default=None)
    p.add_argument("--batch-clusters", type=_positive_int, default=None)
    p.add_argument("--batch-per-cluster", type=_positive_int, default=None)
    p.add_argument("--views", type=_positive_int, default=None)
    p.add_argument("--cadence", type=_positive_int, default=None)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--d", type=_positive_int, default=None)
    p.add_argument("--classes", type=_positive_int, default=None)
    p.add_argument("--cameras", type=_positive_int, default=None)
    p.add_argument("--sigma", type=_positive_float, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--out", required=True, help="report CSV")
    return parser


_PIPELINE_KEYS = (
    "seed", "epochs", "p", "k", "metric", "schedule_kind", "eps_lo", "eps_hi",
    "eps_steady", "min_samples", "tau", "lambda_hard", "batch_clusters",
    "batch_per_cluster", "views", "cadence", "n", "d", "classes", "cameras",
    "sigma", "separation",
)


def _cmd_knn(args) -> str:
    F = load_features(args.input)
    nn = topk_neighbors(F, args.k, args.metric)
    nn.save(args.out)
    return f"knn: wrote {nn.n}x{nn.k} neighbor lists to {args.out}"


def _cmd_rerank(args) -> str:
    F = load_features(args.input)
    if args.mode == "local":
        R = local_rerank(F, args.k, args.metric)
        R.save(args.out)
        return f"rerank: wrote {R.n}x{R.k} sparse refined distances to {args.out}"
    table = full_rerank(F, FrrParams(args.k1, args.k2, args.lambda_jaccard), args.metric)
    save_features(table, args.out)
    return f"rerank: wrote {table.shape[0]}x{table.shape[1]} dense refined table to {args.out}"


def _cmd_sample(args) -> str:
    F = load_features(args.input)
    sample = neighborhood_sample(F, args.p, args.seed, args.metric)
    with open(args.out, "w", newline="") as f:
        f.write("index\n")
        for i in sample.members:
            f.write(f"{int(i)}\n")
    return (
        f"sample: anchor {sample.anchor}, {sample.members.size} of {F.shape[0]} "
        f"points to {args.out}"
    )


def _cmd_schedule(args) -> str:
    s = EpsSchedule(args.kind, args.eps_lo, args.eps_hi, args.eps_steady, args.epochs)
    curve = schedule_curve(s)
    with open(args.out, "w", newline="") as f:
        f.write("epoch,epsilon\n")
        for t, eps in enumerate(curve):
            f.write(f"{t},{eps!r}\n")
    return f"schedule: wrote {curve.size} epochs of {args.kind} to {args.out}"


def _cmd_cluster(args) -> str:
    R = SparseRefinedDistances.load(args.input)
    assignment = dbscan_sparse(R, DbscanParams(args.epsilon, args.min_samples))
    save_assignment(assignment, args.out)
    noise = int((assignment.labels == -1).sum())
    return (
        f"cluster: {assignment.num_clusters} clusters, {noise} noise points "
        f"to {args.out}"
    )


def _cmd_eval(args) -> str:
    tables = [load_features(path).astype(np.float64) for path in args.dist]
    dist = ensemble_distances(tables)
    result = evaluate_ranking(dist, load_labels(args.query_labels), load_labels(args.gallery_labels), args.ranks)
    save_summary(result, args.out, args.ranks)
    parts = ", ".join(f"{k}={v:.4f}" for k, v in result.summary(args.ranks).items())
    return f"eval: {parts}, excluded={result.excluded_queries} to {args.out}"


def _cmd_bench(args) -> str:
    report = bench_mod.time_rerank(
        args.sizes, k=args.k, d=args.d, rng_seed=args.seed,
        repeats=args.repeats, frr_max_n=args.frr_max_n,
    )
    report.save_csv(args.out)
    last = report.rows[-1]
    return (
        f"bench: n={last.n} speedup={last.speedup:.2f}x "
        f"({len(report.rows)} sizes) to {args.out}"
    )


def _cmd_pipeline(args) -> str:
    overrides = {key: getattr(args, key) for key in _PIPELINE_KEYS}
    if args.config:
        cfg = bench_mod.PipelineConfig.from_file(args.config, **overrides)
    else:
        if args.seed is None:
            raise ValueError("--seed is required when no config file is given")
        cfg = bench_mod.PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
    report = bench_mod.run_pipeline(cfg)
    report.save_csv(args.out)
    last = report.rows[-1]
    return (
        f"pipeline: {len(report.rows)} epochs, final ari={last.ari_vs_truth:.4f} "
        f"loss={last.final_loss:.4f} to {args.out}"
    )


_COMMANDS = {
    "knn": _cmd_knn,
    "rerank": _cmd_rerank,
    "sample": _cmd_sample,
    "schedule": _cmd_schedule,
    "cluster": _cmd_cluster,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "pipeline": _cmd_pipeline,
}


def _thread_limiter(threads):
    if threads is None:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=threads)
    except ImportError:  # pragma: no cover - threadpoolctl ships with sklearn
        return nullcontext()


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _thread_limiter(args.threads):
            summary = _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - boundary: report and signal failure
        print(f"localreid {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main(argv=None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
