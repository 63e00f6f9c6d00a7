"""Distances between feature vectors: summed symmetric KLD for GGD features
and Euclidean distance for any method."""

from __future__ import annotations

import numpy as np

from .errors import IncompatibleFeaturesError, MetricError
from .features import ENERGY, GGD_METHODS, FeatureVector
from .ggd import skld_arrays

KLD, ED = "KLD", "ED"
METRICS = (KLD, ED)


def default_metric(method: str) -> str:
    """KLD for GGD features, ED for energy features."""
    return ED if method == ENERGY else KLD


def check_compatible(q: FeatureVector, t: FeatureVector) -> None:
    if q.method != t.method or q.layout != t.layout:
        raise IncompatibleFeaturesError(
            f"cannot compare {q.method} vector with {len(q.layout)} subbands "
            f"to {t.method} vector with {len(t.layout)} subbands")


def check_metric(method: str, metric: str) -> None:
    if metric not in METRICS:
        raise MetricError(f"unknown metric {metric!r}")
    if metric == KLD and method not in GGD_METHODS:
        raise MetricError(f"KLD metric needs GGD features, got {method}")


def _approx_mask(layout, include_approx: bool) -> np.ndarray:
    keep = np.ones(len(layout), dtype=bool)
    if not include_approx:
        keep &= np.array([scale != 0 for scale, _ in layout])
    return keep


def distances(query: FeatureVector, candidates: np.ndarray, metric: str,
              include_approx: bool = True) -> np.ndarray:
    """Distances from ``query`` to each row of ``candidates`` (same layout).

    With ``include_approx=False`` the approximation subband is left out of
    the sum, for both metrics.
    """
    check_metric(query.method, metric)
    cand = np.asarray(candidates, dtype=np.float64)
    if cand.ndim == 1:
        cand = cand[None, :]
    if cand.shape[1] != query.values.size:
        raise IncompatibleFeaturesError(
            f"candidate width {cand.shape[1]} does not match query width {query.values.size}")
    keep = _approx_mask(query.layout, include_approx)
    q = query.pairs()[keep]
    c = cand.reshape(cand.shape[0], -1, 2)[:, keep, :]
    if metric == KLD:
        per_band = skld_arrays(q[None, :, 0], q[None, :, 1], c[:, :, 0], c[:, :, 1])
        return per_band.sum(axis=1)
    diff = c - q[None, :, :]
    return np.sqrt(np.sum(diff.reshape(diff.shape[0], -1) ** 2, axis=1))


def distance(q: FeatureVector, t: FeatureVector, metric: str | None = None,
             include_approx: bool = True) -> float:
    """Distance between two feature vectors of the same method and layout."""
    check_compatible(q, t)
    metric = metric or default_metric(q.method)
    return float(distances(q, t.values, metric, include_approx)[0])
