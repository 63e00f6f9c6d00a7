"""Retrieval-rate evaluation (AR%), false-prediction counts and scheme
comparison tables."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classify import cross_validate, train_knn, train_svm_linear
from .errors import ComparisonError, ConfigError
from .features import LabeledIndex
from .retrieval import RetrievalResult, query_ml, query_traditional

TRADITIONAL, KNN_CBIR, SVM_CBIR = "traditional", "kNN-CBIR", "SVM-CBIR"
SCHEMES = (TRADITIONAL, KNN_CBIR, SVM_CBIR)
SCHEME_ALIASES = {"trad": TRADITIONAL, "traditional": TRADITIONAL,
                  "knn": KNN_CBIR, "kNN-CBIR": KNN_CBIR,
                  "svm": SVM_CBIR, "SVM-CBIR": SVM_CBIR}


def resolve_scheme(name: str) -> str:
    try:
        return SCHEME_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown scheme {name!r}") from None


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    true_class: str
    predicted_class: str | None
    relevant: int
    n_used: int

    @property
    def rate(self) -> float:
        return self.relevant / self.n_used if self.n_used else 0.0


@dataclass
class EvalReport:
    scheme: str
    method: str
    AR_percent: float
    false_predictions: int | None
    records: list[QueryRecord] = field(repr=False)
    N: int = 15
    accuracy: float | None = None
    dataset: str = ""

    @property
    def n_queries(self) -> int:
        return len(self.records)


def retrieval_rate(result: RetrievalResult, true_class: str, index: LabeledIndex | None = None) -> float:
    """Share of ranked entries in ``true_class`` over min(N, pool size)."""
    rel, used = _relevant(result, true_class, index)
    return rel / used if used else 0.0


def _relevant(result: RetrievalResult, true_class: str, index: LabeledIndex | None) -> tuple[int, int]:
    labels = dict(zip(index.ids, index.labels)) if index is not None else result.labels
    rel = sum(labels[i] == true_class for i in result.ids)
    used = min(result.N, result.pool_size) if result.pool_size else len(result.ranked)
    return rel, used


def training_split(index: LabeledIndex, per_class: int | None, seed: int) -> list[int]:
    """Row numbers of a seeded per-class training sample (all rows when ``per_class`` is None)."""
    if per_class is None:
        return list(range(len(index)))
    if per_class < 1:
        raise ConfigError(f"train_per_class must be positive, got {per_class}")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[int]] = defaultdict(list)
    for i in sorted(range(len(index)), key=lambda i: index.entries[i][0]):
        by_class[index.entries[i][1]].append(i)
    keep = []
    for label in sorted(by_class):
        members = by_class[label]
        pick = rng.permutation(len(members))[:per_class]
        keep.extend(members[j] for j in pick)
    return sorted(keep)


def evaluate(index: LabeledIndex, scheme: str, N: int = 15, *, k: int = 1, C: float = 1.0,
             epochs: int = 200, seed: int = 0, train_per_class: int | None = None,
             heldout_only: bool = False, pool: str = "full", cv_folds: int | None = None,
             metric: str | None = None, include_self: bool = False, dataset: str = "") -> EvalReport:
    """Run every evaluation-set image of ``index`` as a query.

    ML schemes train on a seeded ``train_per_class`` sample per class (the
    whole index when None). ``pool`` selects the retrieval pool ("full" or
    "train"); ``heldout_only`` restricts queries to images outside the
    training sample; ``cv_folds`` adds a cross-validated accuracy.
    """
    scheme = resolve_scheme(scheme)
    if pool not in ("full", "train"):
        raise ConfigError(f"pool must be 'full' or 'train', got {pool!r}")
    train_rows = training_split(index, train_per_class, seed)
    train_index = index.subset(train_rows)
    search = train_index if pool == "train" else index
    train_set = set(train_rows)
    queries = [i for i in range(len(index)) if not (heldout_only and i in train_set)]

    model = None
    acc = None
    if scheme == KNN_CBIR:
        model = train_knn(train_index, k, metric)
        if cv_folds:
            acc = cross_validate(train_index, "knn", cv_folds, seed, k=k, metric=metric).mean_accuracy
    elif scheme == SVM_CBIR:
        model = train_svm_linear(train_index, C, epochs, seed)
        if cv_folds:
            acc = cross_validate(train_index, "svm", cv_folds, seed, C=C,
                                 epochs=epochs).mean_accuracy

    records = []
    false_predictions = 0
    for i in queries:
        qid, true_class, fv = index.entries[i]
        if model is None:
            result = query_traditional(search, fv, qid, N, metric, include_self)
        else:
            result = query_ml(model, search, fv, qid, N, metric, include_self)
            false_predictions += result.predicted_class != true_class
        rel, used = _relevant(result, true_class, None)
        records.append(QueryRecord(qid, true_class, result.predicted_class, rel, used))
    ar = 100.0 * math.fsum(r.rate for r in records) / len(records) if records else 0.0
    return EvalReport(scheme, index.method, ar, None if model is None else false_predictions,
                      records, N, acc, dataset)


# --------------------------------------------------------------------------- reports

REPORT_COLUMNS = ("scheme", "method", "AR_percent", "false_predictions", "accuracy", "n_queries")


def _num(v, fmt="{:.4f}") -> str:
    return "" if v is None else fmt.format(v)


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        writer.writerow([r.scheme, r.method, _num(r.AR_percent),
                         "" if r.false_predictions is None else r.false_predictions,
                         _num(r.accuracy), r.n_queries])
    return buf.getvalue()


def records_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scheme", "method", "query_id", "true_class", "predicted_class", "relevant", "n_used"])
    for r in reports:
        for q in r.records:
            writer.writerow([r.scheme, r.method, q.query_id, q.true_class, q.predicted_class or "",
                             q.relevant, q.n_used])
    return buf.getvalue()


def summary_table(reports: Sequence[EvalReport]) -> str:
    head = f"{'scheme':<12} {'method':<6} {'AR%':>8} {'false':>6} {'accuracy':>9} {'queries':>8}"
    lines = [head, "-" * len(head)]
    for r in reports:
        fp = "-" if r.false_predictions is None else str(r.false_predictions)
        acc = "-" if r.accuracy is None else f"{100 * r.accuracy:.2f}"
        lines.append(f"{r.scheme:<12} {r.method:<6} {r.AR_percent:>8.2f} {fp:>6} {acc:>9} {r.n_queries:>8}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    scheme: str
    baseline: str
    ar: float
    ar_baseline: float

    @property
    def difference(self) -> float:
        return round(self.ar - self.ar_baseline, 10)


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "scheme", "AR_percent", "baseline", "AR_percent_baseline", "Difference%"])
        for r in self.rows:
            writer.writerow([r.method, r.scheme, f"{r.ar:.2f}", r.baseline, f"{r.ar_baseline:.2f}",
                             f"{r.difference:+.2f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'method':<6} {'AR% (scheme)':>14} {'AR% (baseline)':>15} {'Difference%':>12}  scheme"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.method:<6} {r.ar:>14.2f} {r.ar_baseline:>15.2f} {r.difference:>+12.2f}  "
                         f"{r.scheme} vs {r.baseline}")
        return "\n".join(lines) + "\n"


def compare_schemes(reports: Sequence[EvalReport], baseline: str = TRADITIONAL) -> ComparisonTable:
    """Pair every non-baseline report with the baseline report of the same method.

    All reports must come from the same dataset and N.
    """
    if not reports:
        raise ComparisonError("no reports to compare")
    baseline = resolve_scheme(baseline)
    if len({r.dataset for r in reports}) > 1 or len({r.N for r in reports}) > 1:
        raise ComparisonError("reports differ in dataset or N")
    base = {}
    for r in reports:
        if r.scheme == baseline:
            if r.method in base:
                raise ComparisonError(f"two {baseline} reports for method {r.method}")
            base[r.method] = r
    rows = []
    for r in reports:
        if r.scheme == baseline:
            continue
        if r.method not in base:
            raise ComparisonError(f"no {baseline} report for method {r.method}")
        rows.append(ComparisonRow(r.method, r.scheme, baseline, r.AR_percent, base[r.method].AR_percent))
    if not rows:
        raise ComparisonError("nothing to compare against the baseline")
    return ComparisonTable(rows)
