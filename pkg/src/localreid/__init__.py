"""Scalable neighborhood-based re-ranking, scheduled-density clustering, and
retrieval evaluation for re-identification feature collections."""

from .clustering import (
    ClusterAssignment,
    ClusterStats,
    DbscanParams,
    adjusted_rand_index,
    cluster_stats,
    dbscan_sparse,
)
from .cotrain import LabelBundle, permute_labels, random_derangement
from .data import LabelTable, load_features, load_labels, save_features, save_labels
from .estimators import LocalReRanker, SparseDBSCAN
from .evaluation import RankingResult, ensemble_distances, evaluate_ranking
from .knn import NeighborList, pairwise_distances, topk_neighbors
from .losses import (
    Batch,
    LossHyper,
    ProxySet,
    barlow_twins_loss,
    combined_loss,
    ema_update,
    hard_loss,
    make_proxies,
    pk_sample_batches,
    proxy_loss,
)
from .rerank import (
    FrrParams,
    SparseRefinedDistances,
    full_rerank,
    inclusion_exclusion,
    iou_affinity,
    local_distances,
    local_rerank,
    refine_distances,
)
from .sampling import SampleSet, neighborhood_sample, resample_epochs
from .scheduler import EpsSchedule, epsilon_at, fixed_sweep, schedule_curve

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ClusterAssignment",
    "ClusterStats",
    "DbscanParams",
    "EpsSchedule",
    "FrrParams",
    "LabelBundle",
    "LabelTable",
    "LocalReRanker",
    "LossHyper",
    "NeighborList",
    "ProxySet",
    "RankingResult",
    "SampleSet",
    "SparseDBSCAN",
    "SparseRefinedDistances",
    "adjusted_rand_index",
    "barlow_twins_loss",
    "cluster_stats",
    "combined_loss",
    "dbscan_sparse",
    "ema_update",
    "ensemble_distances",
    "epsilon_at",
    "evaluate_ranking",
    "fixed_sweep",
    "full_rerank",
    "hard_loss",
    "inclusion_exclusion",
    "iou_affinity",
    "load_features",
    "load_labels",
    "local_distances",
    "local_rerank",
    "make_proxies",
    "neighborhood_sample",
    "pairwise_distances",
    "permute_labels",
    "pk_sample_batches",
    "proxy_loss",
    "random_derangement",
    "refine_distances",
    "resample_epochs",
    "save_features",
    "save_labels",
    "schedule_curve",
    "topk_neighbors",
]
