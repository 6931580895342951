"""scikit-learn style wrappers around the core algorithms.

``LocalReRanker`` is transform-shaped (features in, sparse refined distances
out) and ``SparseDBSCAN`` is a clusterer over those distances, so the two
compose in a ``sklearn.pipeline.Pipeline`` and expose get_params/set_params
for search and cloning.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .clustering import DbscanParams, dbscan_sparse
from .rerank import SparseRefinedDistances, local_rerank
from .validation import check_feature_matrix


class LocalReRanker(TransformerMixin, BaseEstimator):
    """Refine each point's distances to its k nearest neighbors.

    ``transform`` returns a :class:`SparseRefinedDistances` (n*k storage,
    unstored pairs implicitly at distance 1), ready for ``SparseDBSCAN``.
    """

    def __init__(self, k: int = 20, metric: str = "euclidean"):
        self.k = k
        self.metric = metric

    def fit(self, X, y=None):
        X = check_feature_matrix(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> SparseRefinedDistances:
        X = check_feature_matrix(X)
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return local_rerank(X, self.k, self.metric)


class SparseDBSCAN(ClusterMixin, BaseEstimator):
    """Density clustering over sparse refined distances.

    ``fit`` accepts a :class:`SparseRefinedDistances`; after fitting,
    ``labels_`` holds -1 for noise and dense cluster ids otherwise.
    """

    def __init__(self, eps: float = 0.5, min_samples: int = 4):
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        if not isinstance(X, SparseRefinedDistances):
            raise TypeError(
                "SparseDBSCAN expects SparseRefinedDistances "
                "(e.g. the output of LocalReRanker.transform)"
            )
        assignment = dbscan_sparse(X, DbscanParams(self.eps, self.min_samples))
        self.labels_ = assignment.labels
        self.n_clusters_ = assignment.num_clusters
        self.core_sample_count_ = int(np.sum(assignment.labels >= 0))
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
