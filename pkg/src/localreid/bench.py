"""Synthetic data, the timing/memory harness for the two re-ranking methods,
and an end-to-end pipeline simulation over multiple noisy views.

Reports are plain CSV with fixed headers (see BENCH_HEADER and
PIPELINE_HEADER); float cells use repr formatting so files parse back to
exactly the values written.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import time
import tracemalloc
from dataclasses import dataclass
from statistics import median

import numpy as np
from numpy.typing import NDArray

from .clustering import ClusterAssignment, DbscanParams, adjusted_rand_index, dbscan_sparse
from .cotrain import LabelBundle, permute_labels
from .data import LabelTable
from .knn import topk_neighbors
from .losses import (
    Batch,
    LossHyper,
    combined_loss,
    hard_loss,
    make_proxies,
    pk_sample_batches,
    proxy_loss,
)
from .rerank import FrrParams, full_rerank, local_rerank, refine_distances
from .sampling import neighborhood_sample, resample_epochs, subset_size
from .scheduler import EpsSchedule, epsilon_at


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-blob collection: ``classes`` centers at pairwise distance
    >= separation*sigma, points scattered around them with std sigma."""

    n: int
    d: int
    classes: int
    cameras: int = 2
    sigma: float = 1.0
    separation: float = 6.0
    rng_seed: int = 0
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if not 1 <= self.classes <= self.n:
            raise ValueError("need 1 <= classes <= n")
        if self.cameras < 1:
            raise ValueError("cameras must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")


def _place_centers(spec: SyntheticSpec, rng: np.random.Generator) -> NDArray[np.float64]:
    """Rejection-sample class centers at pairwise distance >= separation*sigma."""
    min_dist = spec.separation * spec.sigma
    scale = max(min_dist, spec.sigma) * max(1.0, spec.classes ** (1.0 / spec.d))
    for _ in range(8):  # widen the sampling box if placement stalls
        centers: list[NDArray[np.float64]] = []
        retries = 0
        while len(centers) < spec.classes and retries < 200 * spec.classes:
            cand = rng.normal(0.0, scale, size=spec.d)
            if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
                centers.append(cand)
            else:
                retries += 1
        if len(centers) == spec.classes:
            return np.stack(centers)
        scale *= 2.0
    raise RuntimeError(
        f"could not place {spec.classes} centers at separation {spec.separation} in {spec.d}-D"
    )


def gen_synthetic(
    spec: SyntheticSpec,
) -> tuple[NDArray[np.float32], LabelTable, NDArray[np.int64]]:
    """Features, a label table, and the ground-truth class per point.

    Class of point i is i % classes; cameras cycle round-robin within each
    class. Deterministic per seed.
    """
    rng = np.random.default_rng(spec.rng_seed)
    centers = _place_centers(spec, rng)
    truth = np.arange(spec.n, dtype=np.int64) % spec.classes
    points = centers[truth] + spec.sigma * rng.standard_normal((spec.n, spec.d))
    if spec.normalize:
        norms = np.linalg.norm(points, axis=1)
        norms[norms == 0] = 1.0
        points = points / norms[:, None]
    camera = np.empty(spec.n, dtype=np.int64)
    for c in range(spec.classes):
        members = np.flatnonzero(truth == c)
        camera[members] = np.arange(members.size) % spec.cameras
    table = LabelTable.from_codes(truth, camera)
    return points.astype(np.float32), table, truth


def lrr_storage_bytes(n: int, k: int) -> int:
    """Refined-matrix storage: n*k float32 values plus n*k u64 indices."""
    return n * k * (4 + 8)


def frr_storage_bytes(n: int) -> int:
    """The dense baseline's n*n float32 table."""
    return 4 * n * n


BENCH_HEADER = [
    "n",
    "k",
    "lrr_wall_ms",
    "frr_wall_ms",
    "lrr_bytes",
    "frr_bytes",
    "speedup",
    "frr_estimated",
    "threads",
]


@dataclass(frozen=True)
class BenchRow:
    n: int
    k: int
    lrr_wall_ms: float
    frr_wall_ms: float
    lrr_bytes: int
    frr_bytes: int
    speedup: float
    frr_estimated: bool


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    threads: int

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(BENCH_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.n,
                        r.k,
                        repr(r.lrr_wall_ms),
                        repr(r.frr_wall_ms),
                        r.lrr_bytes,
                        r.frr_bytes,
                        repr(r.speedup),
                        int(r.frr_estimated),
                        self.threads,
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "BenchReport":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != BENCH_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = []
            threads = 0
            for rec in reader:
                rows.append(
                    BenchRow(
                        n=int(rec[0]),
                        k=int(rec[1]),
                        lrr_wall_ms=float(rec[2]),
                        frr_wall_ms=float(rec[3]),
                        lrr_bytes=int(rec[4]),
                        frr_bytes=int(rec[5]),
                        speedup=float(rec[6]),
                        frr_estimated=bool(int(rec[7])),
                    )
                )
                threads = int(rec[8])
        return cls(tuple(rows), threads)


def _worker_count() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _timed_ms(fn, *args, **kwargs) -> float:
    t0 = time.perf_counter()
    fn(*args, **kwargs)
    return (time.perf_counter() - t0) * 1e3


def time_rerank(
    sizes,
    k: int = 20,
    d: int = 64,
    rng_seed: int = 0,
    repeats: int = 3,
    frr_max_n: int = 30_000,
    frr_params: FrrParams | None = None,
) -> BenchReport:
    """Median wall time of both re-ranking methods on shared synthetic data.

    Runs are serialized and preceded by a small warmup so caches and thread
    pools are hot. Beyond ``frr_max_n`` the dense baseline is skipped (its
    table alone would exceed desk memory) and its time extrapolated from the
    measured sizes with a log-log fit, flagged via ``frr_estimated``.
    """
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if repeats < 3:
        raise ValueError("need at least 3 timed runs per size")
    params = frr_params or FrrParams()

    warm = gen_synthetic(SyntheticSpec(n=256, d=d, classes=4, rng_seed=rng_seed))[0]
    local_rerank(warm, min(k, 255))
    full_rerank(warm, params)

    rows = []
    measured: list[tuple[int, float]] = []
    for n in sizes:
        spec = SyntheticSpec(
            n=n, d=d, classes=max(2, n // 64), cameras=2, sigma=1.0, separation=6.0,
            rng_seed=rng_seed,
        )
        F, _, _ = gen_synthetic(spec)
        lrr_ms = median(_timed_ms(local_rerank, F, k) for _ in range(repeats))
        if n <= frr_max_n:
            frr_ms = median(_timed_ms(full_rerank, F, params) for _ in range(repeats))
            estimated = False
            measured.append((n, frr_ms))
        else:
            if not measured:
                raise ValueError("cannot extrapolate the baseline without one measured size")
            estimated = True
            frr_ms = _extrapolate_loglog(measured, n)
        rows.append(
            BenchRow(
                n=n,
                k=k,
                lrr_wall_ms=lrr_ms,
                frr_wall_ms=frr_ms,
                lrr_bytes=lrr_storage_bytes(n, k),
                frr_bytes=frr_storage_bytes(n),
                speedup=frr_ms / lrr_ms,
                frr_estimated=estimated,
            )
        )
    return BenchReport(tuple(rows), _worker_count())


def _extrapolate_loglog(measured: list[tuple[int, float]], n: int) -> float:
    xs = np.log([m for m, _ in measured])
    ys = np.log([t for _, t in measured])
    if xs.size == 1:
        slope, intercept = 2.0, ys[0] - 2.0 * xs[0]
    else:
        slope, intercept = np.polyfit(xs, ys, 1)
    return float(np.exp(intercept + slope * np.log(n)))


def loglog_slope(ns, ys) -> tuple[float, float]:
    """Least-squares slope and R^2 of log(y) against log(n)."""
    xs = np.log(np.asarray(ns, dtype=np.float64))
    ys = np.log(np.asarray(ys, dtype=np.float64))
    slope, intercept = np.polyfit(xs, ys, 1)
    fit = intercept + slope * xs
    ss_res = ((ys - fit) ** 2).sum()
    ss_tot = ((ys - ys.mean()) ** 2).sum()
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


def measure_lrr_alloc(sizes, k: int = 20, d: int = 16, rng_seed: int = 0) -> list[tuple[int, int]]:
    """Peak traced allocation of one local re-ranking run per size."""
    out = []
    for n in sizes:
        spec = SyntheticSpec(n=int(n), d=d, classes=max(2, int(n) // 64), rng_seed=rng_seed)
        F, _, _ = gen_synthetic(spec)
        nn = topk_neighbors(F, k)  # warm the code path before tracing
        del nn
        tracemalloc.start()
        local_rerank(F, k)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        out.append((int(n), int(peak)))
    return out


# ---------------------------------------------------------------------------
# pipeline simulation


PIPELINE_HEADER = [
    "epoch",
    "epsilon",
    "sample_size",
    "num_clusters",
    "noise_count",
    "ari_vs_truth",
    "proxy_loss",
    "hard_loss",
    "final_loss",
]


@dataclass(frozen=True)
class PipelineRow:
    epoch: int
    epsilon: float
    sample_size: int
    num_clusters: float
    noise_count: float
    ari_vs_truth: float
    proxy_loss: float
    hard_loss: float
    final_loss: float


@dataclass(frozen=True)
class PipelineReport:
    rows: tuple[PipelineRow, ...]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(PIPELINE_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.epoch,
                        repr(r.epsilon),
                        r.sample_size,
                        repr(r.num_clusters),
                        repr(r.noise_count),
                        repr(r.ari_vs_truth),
                        repr(r.proxy_loss),
                        repr(r.hard_loss),
                        repr(r.final_loss),
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "PipelineReport":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != PIPELINE_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [
                PipelineRow(
                    epoch=int(rec[0]),
                    epsilon=float(rec[1]),
                    sample_size=int(rec[2]),
                    num_clusters=float(rec[3]),
                    noise_count=float(rec[4]),
                    ari_vs_truth=float(rec[5]),
                    proxy_loss=float(rec[6]),
                    hard_loss=float(rec[7]),
                    final_loss=float(rec[8]),
                )
                for rec in reader
            ]
        return cls(tuple(rows))


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the multi-view pipeline simulation needs, in one place.

    ``views`` independent noisy draws around shared class centers stand in
    for differently-initialized feature extractors; no weights are updated.
    """

    seed: int
    epochs: int = 8
    p: float = 100.0
    k: int = 20
    metric: str = "cosine"
    schedule_kind: str = "noise_robust"
    eps_lo: float = 0.5
    eps_hi: float = 0.7
    eps_steady: float = 0.6
    min_samples: int = 4
    tau: float = 0.04
    lambda_hard: float = 0.5
    batch_clusters: int = 16
    batch_per_cluster: int = 12
    batch_repeats: int = 1
    views: int = 2
    cadence: int = 3
    n: int = 500
    d: int = 16
    classes: int = 10
    cameras: int = 2
    sigma: float = 1.0
    separation: float = 8.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.views < 2:
            raise ValueError("need at least 2 views for co-training")
        if not 0.0 < self.p <= 100.0:
            raise ValueError("p must lie in (0, 100]")

    def schedule(self) -> EpsSchedule:
        total = max(self.epochs, 4)
        return EpsSchedule(
            self.schedule_kind, self.eps_lo, self.eps_hi, self.eps_steady, total
        )

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        """Parse a key=value config file; keyword arguments win over the file."""
        values: dict[str, str] = {}
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                values[key] = val
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict = {}
        for key, raw in values.items():
            if key not in fields:
                raise ValueError(f"{path}: unknown config key {key!r}")
            kwargs[key] = _convert(fields[key].type, raw)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        if "seed" not in kwargs:
            raise ValueError("config must provide a seed")
        return cls(**kwargs)


def _convert(type_name: str, raw: str):
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    return raw


def _unit(X: NDArray[np.float64]) -> NDArray[np.float64]:
    norms = np.linalg.norm(X, axis=1)
    norms[norms == 0] = 1.0
    return X / norms[:, None]


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """One re-clustering epoch loop over M noisy views of the same truth.

    Per epoch: (re)sample the working subset from a randomly chosen view,
    refine distances per view, cluster with the scheduled radius, permute
    the label sets across views, and evaluate the losses on PK batches with
    freshly drawn proxies. Deterministic given ``cfg.seed``.
    """
    root = np.random.SeedSequence(cfg.seed)
    seed_centers, seed_views, seed_anchor, seed_perm, seed_proxy, seed_batch = (
        s.generate_state(1)[0] for s in root.spawn(6)
    )

    spec = SyntheticSpec(
        n=cfg.n, d=cfg.d, classes=cfg.classes, cameras=cfg.cameras,
        sigma=cfg.sigma, separation=cfg.separation, rng_seed=int(seed_centers),
    )
    centers = _place_centers(spec, np.random.default_rng(spec.rng_seed))
    truth = np.arange(cfg.n, dtype=np.int64) % cfg.classes
    view_rng = np.random.default_rng(int(seed_views))
    # each view is an independent noisy draw around the shared centers,
    # L2-normalized like the feature vectors the losses expect
    views = [
        _unit(centers[truth] + cfg.sigma * view_rng.standard_normal((cfg.n, cfg.d))).astype(
            np.float32
        )
        for _ in range(cfg.views)
    ]

    schedule = cfg.schedule()
    resample_at = set(resample_epochs(cfg.epochs, cfg.cadence).tolist())
    anchor_rng = np.random.default_rng(int(seed_anchor))
    hyper = LossHyper(tau=cfg.tau, lambda_hard=cfg.lambda_hard)

    members = np.arange(cfg.n, dtype=np.int64)
    rows = []
    for epoch in range(cfg.epochs):
        eps = epsilon_at(schedule, epoch)
        if epoch in resample_at:
            view_choice = int(anchor_rng.integers(cfg.views))
            sample = neighborhood_sample(
                views[view_choice], cfg.p, int(anchor_rng.integers(2**32)), cfg.metric
            )
            members = np.sort(sample.members)
        sub_truth = truth[members]
        n_sub = members.size

        assignments = []
        for v in range(cfg.views):
            Fsub = views[v][members]
            k_eff = min(cfg.k, n_sub - 1)
            R = local_rerank(Fsub, k_eff, cfg.metric)
            assignments.append(dbscan_sparse(R, DbscanParams(eps, cfg.min_samples)))

        permuted = permute_labels(
            LabelBundle(tuple(assignments)), int(seed_perm) + epoch
        ).assignments

        aris, proxies_vals, hard_vals, final_vals = [], [], [], []
        clusters, noise = [], []
        for v in range(cfg.views):
            a = permuted[v]
            aris.append(adjusted_rand_index(assignments[v], sub_truth))
            clusters.append(assignments[v].num_clusters)
            noise.append(int((assignments[v].labels == -1).sum()))
            if a.num_clusters == 0:
                continue
            unit_sub = views[v][members].astype(np.float64)
            proxies = make_proxies(unit_sub, a, int(seed_proxy) + epoch * cfg.views + v)
            batches = pk_sample_batches(
                a, cfg.batch_clusters, cfg.batch_per_cluster, cfg.batch_repeats,
                int(seed_batch) + epoch * cfg.views + v,
            )
            for idx in batches:
                batch = Batch(unit_sub[idx], a.labels[idx])
                try:
                    pv, _ = proxy_loss(batch, proxies, hyper)
                    hv, _ = hard_loss(batch, hyper)
                except ValueError:
                    continue  # degenerate batch (single cluster in play)
                proxies_vals.append(pv)
                hard_vals.append(hv)
                final_vals.append(pv + cfg.lambda_hard * hv)

        rows.append(
            PipelineRow(
                epoch=epoch,
                epsilon=eps,
                sample_size=n_sub,
                num_clusters=float(np.mean(clusters)),
                noise_count=float(np.mean(noise)),
                ari_vs_truth=float(np.mean(aris)),
                proxy_loss=float(np.mean(proxies_vals)) if proxies_vals else float("nan"),
                hard_loss=float(np.mean(hard_vals)) if hard_vals else float("nan"),
                final_loss=float(np.mean(final_vals)) if final_vals else float("nan"),
            )
        )
    return PipelineReport(tuple(rows))
