"""Statistical usage-profile anomaly scorers.

Both scorers follow the scikit-learn estimator protocol: ``fit`` learns a
per-component location and scale from a baseline matrix (rows are usage
profiles), ``score_samples`` returns the largest per-component deviation in
scale units, and ``predict`` flags rows whose score exceeds ``z_threshold``.

The scale of component ``c`` is ``max(spread_c, sigma_floor_c)`` with
``sigma_floor_c = max(sigma_floor_fraction * |location_c|, sigma_floor_min)``.
The floor keeps constant histories from producing infinite scores.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import defaults
from .errors import InsufficientHistory, InsufficientPeers

MAD_TO_SIGMA = 1.4826


def _as_matrix(rows) -> np.ndarray:
    if len(rows) and hasattr(rows[0], "vector"):
        rows = [r.vector for r in rows]
    return np.asarray(rows, dtype=float)


def _max_deviation(X: np.ndarray, location: np.ndarray, scale: np.ndarray) -> np.ndarray:
    diff = np.abs(X - location)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff > 0, np.inf, 0.0))
    return z.max(axis=1) if z.shape[1] else np.zeros(len(z))


class _FlooredScorer(BaseEstimator):
    def _floor(self, location: np.ndarray) -> np.ndarray:
        return np.maximum(self.sigma_floor_fraction * np.abs(location), self.sigma_floor_min)

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "scale_")
        X = check_array(_as_matrix(X), ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} components, got {X.shape[1]}")
        return _max_deviation(X, self.location_, self.scale_)

    def component_scores(self, x) -> np.ndarray:
        """Per-component deviation of a single profile, in scale units."""
        check_is_fitted(self, "scale_")
        x = np.asarray(getattr(x, "vector", x), dtype=float)
        diff = np.abs(x - self.location_)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.scale_ > 0, diff / np.where(self.scale_ > 0, self.scale_, 1.0),
                            np.where(diff > 0, np.inf, 0.0))

    def decision_function(self, X) -> np.ndarray:
        return self.score_samples(X) - self.z_threshold

    def predict(self, X) -> np.ndarray:
        return self.score_samples(X) > self.z_threshold


class SelfAnomalyScorer(_FlooredScorer):
    """Z-score of a tenant's current profile against its own history.

    Location is the history mean, spread the population standard deviation.
    """

    def __init__(
        self,
        z_threshold: float = defaults.SELF_ANOMALY_Z,
        min_history: int = defaults.SELF_ANOMALY_MIN_HISTORY,
        sigma_floor_fraction: float = defaults.SIGMA_FLOOR_FRACTION,
        sigma_floor_min: float = defaults.SIGMA_FLOOR_MIN,
    ) -> None:
        self.z_threshold = z_threshold
        self.min_history = min_history
        self.sigma_floor_fraction = sigma_floor_fraction
        self.sigma_floor_min = sigma_floor_min

    def fit(self, X, y=None) -> SelfAnomalyScorer:
        X = _as_matrix(X)
        if X.ndim != 2 or len(X) < self.min_history:
            raise InsufficientHistory(self.min_history, len(X))
        X = check_array(X, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        self.location_ = X.mean(axis=0)
        self.spread_ = X.std(axis=0)
        self.scale_ = np.maximum(self.spread_, self._floor(self.location_))
        return self


class PeerAnomalyScorer(_FlooredScorer):
    """Robust z-score of a profile against a peer population (median / MAD)."""

    def __init__(
        self,
        z_threshold: float = defaults.PEER_ANOMALY_Z,
        min_peers: int = defaults.PEER_ANOMALY_MIN_PEERS,
        sigma_floor_fraction: float = defaults.SIGMA_FLOOR_FRACTION,
        sigma_floor_min: float = defaults.SIGMA_FLOOR_MIN,
    ) -> None:
        self.z_threshold = z_threshold
        self.min_peers = min_peers
        self.sigma_floor_fraction = sigma_floor_fraction
        self.sigma_floor_min = sigma_floor_min

    def fit(self, X, y=None) -> PeerAnomalyScorer:
        X = _as_matrix(X)
        if X.ndim != 2 or len(X) < self.min_peers:
            raise InsufficientPeers(self.min_peers, len(X))
        X = check_array(X, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        self.location_ = np.median(X, axis=0)
        self.spread_ = MAD_TO_SIGMA * np.median(np.abs(X - self.location_), axis=0)
        self.scale_ = np.maximum(self.spread_, self._floor(self.location_))
        return self


def self_anomaly_score(history: Sequence, current, **params) -> float:
    """Largest per-component z-score of ``current`` against ``history``."""
    scorer = SelfAnomalyScorer(**params).fit(history)
    return float(scorer.score_samples([getattr(current, "vector", current)])[0])


def peer_anomaly_score(profiles: Mapping[str, object], tenant: str, **params) -> float:
    """Robust z-score of ``tenant`` against every other tenant in ``profiles``."""
    peers = [p for t, p in sorted(profiles.items()) if t != tenant]
    scorer = PeerAnomalyScorer(**params).fit(peers)
    current = profiles[tenant]
    return float(scorer.score_samples([getattr(current, "vector", current)])[0])
