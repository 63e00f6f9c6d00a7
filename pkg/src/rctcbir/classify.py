"""Query classifiers (kNN, one-vs-rest linear SVM), stratified n-fold
cross-validation and accuracy measures."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError, IncompatibleFeaturesError, IndexFormatError, UndefinedMeasureError
from .features import FeatureVector, LabeledIndex, load_index
from .similarity import check_metric, default_metric, distances

log = logging.getLogger(__name__)


def _check_layout(method: str, layout, fv: FeatureVector) -> None:
    if fv.method != method or fv.layout != tuple(layout):
        raise IncompatibleFeaturesError(
            f"query vector ({fv.method}, {len(fv.layout)} subbands) does not match "
            f"model training features ({method}, {len(layout)} subbands)")


# --------------------------------------------------------------------------- kNN

@dataclass
class KnnModel:
    k: int
    metric: str
    index: LabeledIndex

    @property
    def method(self) -> str:
        return self.index.method

    @property
    def layout(self):
        return self.index.layout

    def predict(self, fv: FeatureVector) -> str:
        return predict_knn(self, fv)


def train_knn(index: LabeledIndex, k: int = 1, metric: str | None = None) -> KnnModel:
    """Store the training entries; the metric defaults to the feature method's own."""
    if len(index) == 0:
        raise ConfigError("cannot train kNN on an empty index")
    if k < 1 or k > len(index):
        raise ConfigError(f"k={k} must lie in 1..{len(index)} (training set size)")
    metric = metric or default_metric(index.method)
    check_metric(index.method, metric)
    return KnnModel(k, metric, LabeledIndex(index.method, index.config, list(index.entries)))


def vote(dists: np.ndarray, labels: Sequence[str], ids: Sequence[str], k: int) -> str:
    """Majority vote among the ``k`` nearest entries.

    Neighbours are ordered by (distance, image id). Vote ties go to the class
    with the smaller summed neighbour distance, then to the smaller label.
    """
    order = sorted(range(len(dists)), key=lambda i: (dists[i], ids[i]))[:k]
    count: dict[str, int] = defaultdict(int)
    total: dict[str, float] = defaultdict(float)
    for i in order:
        count[labels[i]] += 1
        total[labels[i]] += float(dists[i])
    return min(count, key=lambda c: (-count[c], total[c], c))


def predict_knn(model: KnnModel, fv: FeatureVector) -> str:
    _check_layout(model.method, model.layout, fv)
    d = distances(fv, model.index.matrix(), model.metric)
    return vote(d, model.index.labels, model.index.ids, model.k)


# --------------------------------------------------------------------------- SVM

@dataclass
class LinearSvmModel:
    """One-vs-rest linear classifiers on z-scored features.

    ``weights`` has one row per class; its last column is the bias, learnt
    as the weight of a constant input feature.
    """

    classes: list[str]
    weights: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    C: float
    epochs: int
    seed: int
    method: str
    layout: tuple
    loss_history: list[float] = field(default_factory=list, repr=False)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def scores(self, fv: FeatureVector) -> np.ndarray:
        _check_layout(self.method, self.layout, fv)
        z = self.standardize(fv.values)
        return self.weights[:, :-1] @ z + self.weights[:, -1]

    def predict(self, fv: FeatureVector) -> str:
        return predict_svm(self, fv)


def standardization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and std; zero-std columns pass through (mean 0, std 1)."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    flat = ~(std > 0)
    mean = np.where(flat, 0.0, mean)
    std = np.where(flat, 1.0, std)
    return mean, std


def hinge_objective(w: np.ndarray, x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """``lam/2 * |w|^2 + mean(max(0, 1 - y * x.w))`` per row of ``w`` (rows of ``y``)."""
    w = np.atleast_2d(w)
    y = np.atleast_2d(y)
    margins = y * (w @ x.T)
    return 0.5 * lam * np.sum(w * w, axis=1) + np.mean(np.maximum(0.0, 1.0 - margins), axis=1)


def _pegasos(x: np.ndarray, y: np.ndarray, lam: float, orders) -> tuple[np.ndarray, list[float]]:
    """Run all binary problems (rows of ``y``) in lockstep over the same sample order.

    The returned weights are the running average of the iterates, which
    smooths the epoch-to-epoch objective of plain last-iterate Pegasos.
    The history holds the class-averaged objective of that average after
    each epoch.
    """
    n_problems = y.shape[0]
    w = np.zeros((n_problems, x.shape[1]))
    avg = np.zeros_like(w)
    radius = 1.0 / np.sqrt(lam)
    t = 0
    history = []
    for order in orders:
        for i in order:
            t += 1
            eta = 1.0 / (lam * t)
            yi = y[:, i]
            active = yi * (w @ x[i]) < 1.0
            w *= 1.0 - eta * lam
            w[active] += (eta * yi[active])[:, None] * x[i][None, :]
            norms = np.sqrt(np.sum(w * w, axis=1))
            over = norms > radius
            if over.any():
                w[over] *= (radius / norms[over])[:, None]
            avg += (w - avg) / t
        history.append(float(np.mean(hinge_objective(avg, x, y, lam))))
    return avg, history


def train_svm_linear(index: LabeledIndex, C: float = 1.0, epochs: int = 200, seed: int = 0) -> LinearSvmModel:
    """Deterministic Pegasos-style one-vs-rest training.

    Features are z-scored with training statistics; each binary problem
    minimises ``lam/2 |w|^2 + mean hinge`` with ``lam = 1/(C*n)``, visiting
    the samples in one seeded shuffle per epoch (shared by all classes).
    """
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    classes = index.classes
    if len(classes) < 2:
        raise ConfigError("SVM training needs at least two classes")
    # canonical entry order keeps training independent of index ordering
    index = index.subset(sorted(range(len(index)), key=lambda i: index.entries[i][0]))
    raw = index.matrix()
    if not np.all(np.isfinite(raw)):
        raise ConfigError("training features contain non-finite values")
    mean, std = standardization(raw)
    z = (raw - mean) / std
    x = np.hstack([z, np.ones((z.shape[0], 1))])
    n = x.shape[0]
    lam = 1.0 / (C * n)
    rng = np.random.default_rng(seed)
    orders = [rng.permutation(n) for _ in range(epochs)]
    labels = np.array(index.labels)
    y = np.stack([np.where(labels == label, 1.0, -1.0) for label in classes])
    weights, history = _pegasos(x, y, lam, orders)
    return LinearSvmModel(classes, weights, mean, std, float(C), int(epochs), int(seed),
                          index.method, tuple(index.layout), history)


def predict_svm(model: LinearSvmModel, fv: FeatureVector) -> str:
    s = model.scores(fv)
    best = s.max()
    return min(c for c, v in zip(model.classes, s) if v == best)


Model = Union[KnnModel, LinearSvmModel]


# --------------------------------------------------------------------------- model files

def _fmt(values) -> str:
    return ",".join(format(float(v), ".17g") for v in np.ravel(values))


def save_model(model: Model, path, index_path=None) -> None:
    """Write a text model file. kNN models only reference ``index_path``."""
    if isinstance(model, KnnModel):
        if index_path is None:
            raise ValueError("kNN model files reference an index file; pass index_path")
        lines = ["#knn", f"index={index_path}", f"k={model.k}", f"metric={model.metric}"]
    else:
        lines = [
            "#svm",
            f"C={format(model.C, '.17g')}",
            f"epochs={model.epochs}",
            f"seed={model.seed}",
            f"method={model.method}",
            "layout=" + ",".join(f"{s}.{d}" for s, d in model.layout),
            f"mean={_fmt(model.mean)}",
            f"std={_fmt(model.std)}",
        ]
        for label, w in zip(model.classes, model.weights):
            lines.append(f"w\t{label}\t{_fmt(w)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> Model:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] not in ("#knn", "#svm"):
        raise IndexFormatError(f"{path}:1: expected '#knn' or '#svm' header")
    kv: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("w\t"):
            parts = line.split("\t")
            if len(parts) != 3:
                raise IndexFormatError(f"{path}:{lineno}: malformed weight line")
            rows.append((lineno, parts[1], parts[2]))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise IndexFormatError(f"{path}:{lineno}: expected key=value")
        kv[key] = value
    try:
        if lines[0] == "#knn":
            index_file = Path(kv["index"])
            if not index_file.is_absolute():
                index_file = path.parent / index_file
            return train_knn(load_index(index_file), int(kv["k"]), kv["metric"])
        layout = tuple(tuple(int(p) for p in item.split(".")) for item in kv["layout"].split(","))
        mean = np.array([float(v) for v in kv["mean"].split(",")])
        std = np.array([float(v) for v in kv["std"].split(",")])
        classes, weights = [], []
        for lineno, label, raw in rows:
            w = np.array([float(v) for v in raw.split(",")])
            if w.size != mean.size + 1:
                raise IndexFormatError(f"{path}:{lineno}: expected {mean.size + 1} weights")
            classes.append(label)
            weights.append(w)
        if len(classes) < 2:
            raise IndexFormatError(f"{path}: SVM model needs at least two class weight lines")
        return LinearSvmModel(classes, np.array(weights), mean, std, float(kv["C"]), int(kv["epochs"]),
                              int(kv["seed"]), kv["method"], layout)
    except KeyError as exc:
        raise IndexFormatError(f"{path}: missing field {exc}") from None
    except ValueError as exc:
        raise IndexFormatError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------- evaluation of classifiers

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_counts(y_true: Sequence[str], y_pred: Sequence[str],
                     classes: Sequence[str] | None = None) -> list[ConfusionCounts]:
    """One-vs-rest counts per class (sorted class order unless given)."""
    if len(y_true) != len(y_pred):
        raise ValueError("prediction and truth lists differ in length")
    classes = sorted(set(y_true) | set(y_pred)) if classes is None else list(classes)
    out = []
    for c in classes:
        tp = sum(t == c and p == c for t, p in zip(y_true, y_pred))
        fp = sum(t != c and p == c for t, p in zip(y_true, y_pred))
        fn = sum(t == c and p != c for t, p in zip(y_true, y_pred))
        out.append(ConfusionCounts(tp, fp, len(y_true) - tp - fp - fn, fn))
    return out


def accuracy(counts: Sequence[ConfusionCounts]) -> float:
    """(tp + tn) / (tp + fp + tn + fn), pooled over the given one-vs-rest counts."""
    total = sum(c.total for c in counts)
    if total == 0:
        raise UndefinedMeasureError("accuracy over zero predictions")
    return sum(c.tp + c.tn for c in counts) / total


def multiclass_accuracy(counts: Sequence[ConfusionCounts]) -> float:
    """Correct predictions over all predictions, from a full per-class count set."""
    if not counts or counts[0].total == 0:
        raise UndefinedMeasureError("accuracy over zero predictions")
    n = counts[0].total
    if any(c.total != n for c in counts):
        raise ValueError("inconsistent prediction totals across classes")
    return sum(c.tp for c in counts) / n


Trainer = Callable[[LabeledIndex], object]


def make_trainer(algorithm: str | Trainer, **params) -> Trainer:
    """Resolve ``"knn"``/``"svm"`` (plus keyword params) or pass a callable through.

    A callable receives a training index and returns an object with ``predict(fv)``.
    """
    if callable(algorithm):
        return algorithm
    if algorithm == "knn":
        return lambda idx: train_knn(idx, params.get("k", 1), params.get("metric"))
    if algorithm == "svm":
        return lambda idx: train_svm_linear(idx, params.get("C", 1.0), params.get("epochs", 200),
                                            params.get("seed", 0))
    raise ConfigError(f"unknown algorithm {algorithm!r}")


@dataclass
class CrossValidationResult:
    fold_accuracies: list[float]
    folds: list[int]  # fold number per index entry
    stratified: bool
    eq6_accuracies: list[float] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


def assign_folds(labels: Sequence[str], n_folds: int, seed: int,
                 ids: Sequence[str] | None = None) -> tuple[list[int], bool]:
    """Seeded fold numbers per entry; stratified when every class has >= n_folds members.

    With ``ids`` the assignment does not depend on the order of the entries.
    """
    rng = np.random.default_rng(seed)
    n = len(labels)
    ids = list(ids) if ids is not None else [f"{i:012d}" for i in range(n)]
    by_class: dict[str, list[int]] = defaultdict(list)
    for i in sorted(range(n), key=lambda i: ids[i]):
        by_class[labels[i]].append(i)
    stratified = all(len(v) >= n_folds for v in by_class.values())
    folds = [0] * n
    if stratified:
        offset = 0
        for lab in sorted(by_class):
            members = by_class[lab]
            for pos, j in enumerate(rng.permutation(len(members))):
                folds[members[j]] = (offset + pos) % n_folds
            offset += len(members)
    else:
        log.warning("a class has fewer than %d members; using an unstratified split", n_folds)
        canonical = sorted(range(n), key=lambda i: ids[i])
        for pos, j in enumerate(rng.permutation(n)):
            folds[canonical[j]] = pos % n_folds
    return folds, stratified


def cross_validate(index: LabeledIndex, algorithm: str | Trainer = "knn", n_folds: int = 10,
                   seed: int = 0, **params) -> CrossValidationResult:
    """n-fold cross-validation; per-fold multiclass accuracy and its mean.

    ``seed`` drives both the fold split and, for "svm", the training shuffle.
    """
    if n_folds < 2:
        raise ConfigError(f"cross-validation needs at least 2 folds, got {n_folds}")
    if n_folds > len(index):
        raise ConfigError(f"{n_folds} folds exceed index size {len(index)}")
    trainer = make_trainer(algorithm, seed=seed, **params)
    folds, stratified = assign_folds(index.labels, n_folds, seed, index.ids)
    accs, eq6 = [], []
    classes = index.classes
    for f in range(n_folds):
        train = index.subset(i for i in range(len(index)) if folds[i] != f)
        test = [index.entries[i] for i in range(len(index)) if folds[i] == f]
        model = trainer(train)
        y_true = [lab for _, lab, _ in test]
        y_pred = [model.predict(fv) for _, _, fv in test]
        counts = confusion_counts(y_true, y_pred, classes)
        accs.append(multiclass_accuracy(counts))
        eq6.append(accuracy(counts))
    return CrossValidationResult(accs, folds, stratified, eq6)
