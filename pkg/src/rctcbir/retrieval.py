"""Traditional (rank everything) and classify-then-rank retrieval."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classify import Model
from .errors import ConfigError
from .features import FeatureVector, LabeledIndex
from .similarity import check_compatible, default_metric, distances

log = logging.getLogger(__name__)


@dataclass
class RetrievalResult:
    query_id: str
    ranked: list[tuple[str, float]]
    N: int
    predicted_class: str | None = None
    pool_size: int = 0
    distance_evaluations: int = 0
    labels: dict[str, str] = field(default_factory=dict, repr=False)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.ranked]


def _rank(index: LabeledIndex, rows: list[int], query: FeatureVector, query_id: str, N: int,
          metric: str, include_self: bool) -> tuple[list[tuple[str, float]], int, int]:
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    ids = index.ids
    if not include_self:
        rows = [i for i in rows if ids[i] != query_id]
    if not rows:
        return [], 0, 0
    d = distances(query, index.matrix()[rows], metric)
    order = sorted(range(len(rows)), key=lambda j: (d[j], ids[rows[j]]))[:N]
    return [(ids[rows[j]], float(d[j])) for j in order], len(rows), len(rows)


def _prepare(index: LabeledIndex, query: FeatureVector, metric: str | None) -> str:
    if index.entries:
        check_compatible(query, index.entries[0][2])
    return metric or default_metric(index.method)


def query_traditional(index: LabeledIndex, query: FeatureVector, query_id: str, N: int = 15,
                      metric: str | None = None, include_self: bool = False) -> RetrievalResult:
    """Rank the whole index (minus the query's own id) and keep the N nearest."""
    metric = _prepare(index, query, metric)
    ranked, pool, evals = _rank(index, list(range(len(index))), query, query_id, N, metric, include_self)
    return RetrievalResult(query_id, ranked, N, None, pool, evals, dict(zip(index.ids, index.labels)))


def query_ml(model: Model, index: LabeledIndex, query: FeatureVector, query_id: str, N: int = 15,
             metric: str | None = None, include_self: bool = False) -> RetrievalResult:
    """Predict the query class, then rank only index entries of that class."""
    metric = _prepare(index, query, metric)
    predicted = model.predict(query)
    rows = [i for i, lab in enumerate(index.labels) if lab == predicted]
    ranked, pool, evals = _rank(index, rows, query, query_id, N, metric, include_self)
    if not ranked:
        log.warning("query %s: predicted class %r has no candidates", query_id, predicted)
    return RetrievalResult(query_id, ranked, N, predicted, pool, evals, dict(zip(index.ids, index.labels)))


def format_result(result: RetrievalResult) -> str:
    """CLI text form: optional ``#predicted_class=`` line, then
    ``<rank>\\t<id>\\t<class>\\t<distance>`` rows."""
    lines = []
    if result.predicted_class is not None:
        lines.append(f"#predicted_class={result.predicted_class}")
    for rank, (image_id, dist) in enumerate(result.ranked, start=1):
        lines.append(f"{rank}\t{image_id}\t{result.labels.get(image_id, '')}\t{dist:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


def ranked_distances(result: RetrievalResult) -> np.ndarray:
    return np.array([d for _, d in result.ranked])
