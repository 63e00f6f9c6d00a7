"""Subband feature vectors (GGD parameters or energy moments) and the
labeled feature index."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import ggd
from .errors import ConfigError, DegenerateSamplesError, IndexFormatError, InvariantError
from .transform import RctPlusConfig, RctPlusDecomposition, rct_plus

GGD1, GGD2, ENERGY = "GGD1", "GGD2", "E"
METHODS = (GGD1, GGD2, ENERGY)
GGD_METHODS = (GGD1, GGD2)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Two values per subband in canonical layout: (alpha, beta) for GGD
    methods, (E, F) for the energy method."""

    method: str
    layout: tuple[tuple[int, int], ...]
    values: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown feature method {self.method!r}")
        values = np.asarray(self.values, dtype=np.float64).ravel()
        layout = tuple((int(s), int(d)) for s, d in self.layout)
        if values.size != 2 * len(layout):
            raise InvariantError(f"{values.size} values for {len(layout)} subbands")
        if not np.all(np.isfinite(values)):
            raise InvariantError("feature values must be finite")
        if self.method in GGD_METHODS and np.any(values <= 0):
            raise InvariantError("GGD parameters must be positive")
        if self.method == ENERGY and np.any(values < 0):
            raise InvariantError("energy moments must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)

    def pairs(self) -> np.ndarray:
        """Values reshaped to (subbands, 2)."""
        return self.values.reshape(-1, 2)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.method == other.method and self.layout == other.layout
                and bool(np.array_equal(self.values, other.values)))

    __hash__ = None


@dataclass
class LabeledIndex:
    method: str
    config: RctPlusConfig
    entries: list[tuple[str, str, FeatureVector]] = field(default_factory=list)

    def __post_init__(self):
        self._matrix = None

    def __len__(self):
        return len(self.entries)

    @property
    def layout(self):
        return self.config.layout()

    @property
    def ids(self) -> list[str]:
        return [e[0] for e in self.entries]

    @property
    def labels(self) -> list[str]:
        return [e[1] for e in self.entries]

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))

    def matrix(self) -> np.ndarray:
        """Stacked feature values, one row per entry (cached)."""
        if self._matrix is None or self._matrix.shape[0] != len(self.entries):
            if not self.entries:
                return np.zeros((0, 2 * self.config.subband_count))
            self._matrix = np.stack([fv.values for _, _, fv in self.entries])
        return self._matrix

    def validate(self) -> None:
        layout = self.layout
        seen = set()
        for image_id, _, fv in self.entries:
            if fv.method != self.method:
                raise InvariantError(f"entry {image_id!r} has method {fv.method}, index has {self.method}")
            if fv.layout != layout:
                raise InvariantError(f"entry {image_id!r} layout does not match the index config")
            if image_id in seen:
                raise InvariantError(f"duplicate image id {image_id!r}")
            seen.add(image_id)

    def subset(self, keep: Iterable[int]) -> "LabeledIndex":
        return LabeledIndex(self.method, self.config, [self.entries[i] for i in keep])


def _fit_subband(coeffs: np.ndarray, estimator, center: bool) -> tuple[float, float]:
    x = coeffs.ravel()
    if center:
        x = x - x.mean()
    try:
        p = estimator(x)
    except DegenerateSamplesError:
        return ggd.DEGENERATE_PARAMS
    return p.alpha, p.beta


def extract_ggd_features(decomp: RctPlusDecomposition, estimator: str = "MME") -> FeatureVector:
    """Fit one GGD per subband. ``estimator`` is ``"MME"`` (GGD1) or ``"MLE"`` (GGD2).

    The approximation subband is mean-centred before fitting; degenerate
    subbands get ``(1e-8, 2)``.
    """
    if not decomp.subbands:
        raise ValueError("empty decomposition")
    if estimator == "MME":
        fit, method = ggd.fit_mme, GGD1
    elif estimator == "MLE":
        fit, method = ggd.fit_mle, GGD2
    else:
        raise ValueError(f"estimator must be 'MME' or 'MLE', got {estimator!r}")
    values = []
    for sb in decomp.subbands:
        values.extend(_fit_subband(sb.coefficients, fit, center=sb.is_approximation))
    return FeatureVector(method, decomp.layout(), np.array(values))


def energy_moments(coeffs: np.ndarray) -> tuple[float, float]:
    """Mean absolute value and root mean square of a subband."""
    c = np.asarray(coeffs, dtype=np.float64)
    return float(np.mean(np.abs(c))), float(np.sqrt(np.mean(c * c)))


def extract_energy_features(decomp: RctPlusDecomposition) -> FeatureVector:
    if not decomp.subbands:
        raise ValueError("empty decomposition")
    values = []
    for sb in decomp.subbands:
        values.extend(energy_moments(sb.coefficients))
    return FeatureVector(ENERGY, decomp.layout(), np.array(values))


def extract_features(decomp: RctPlusDecomposition, method: str) -> FeatureVector:
    if method == GGD1:
        return extract_ggd_features(decomp, "MME")
    if method == GGD2:
        return extract_ggd_features(decomp, "MLE")
    if method == ENERGY:
        return extract_energy_features(decomp)
    raise ValueError(f"unknown feature method {method!r}")


def image_features(img, method: str, config: RctPlusConfig = RctPlusConfig()) -> FeatureVector:
    return extract_features(rct_plus(img, config), method)


def _image_features_job(args):
    img, method, config = args
    return image_features(img, method, config)


def build_index(dataset, method: str, config: RctPlusConfig = RctPlusConfig(), jobs: int = 1) -> LabeledIndex:
    """Extract features for every dataset image, preserving dataset order."""
    work = [(img, method, config) for _, _, img in dataset.images]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            vectors = list(pool.map(_image_features_job, work, chunksize=8))
    else:
        vectors = [_image_features_job(w) for w in work]
    entries = [(image_id, label, fv) for (image_id, label, _), fv in zip(dataset.images, vectors)]
    index = LabeledIndex(method, config, entries)
    index.validate()
    return index


def _format_value(v: float) -> str:
    return format(float(v), ".17g")


def save_index(index: LabeledIndex, path) -> None:
    """Write the line-oriented index file (17 significant digits per value)."""
    index.validate()
    cfg = index.config
    lines = [
        f"#method={index.method}",
        f"#L={cfg.levels}",
        "#D=" + ",".join(str(d) for d in cfg.directions),
        f"#sampled={int(cfg.critically_sampled)}",
    ]
    if cfg.sigma0 != 1.0:
        lines.append(f"#sigma0={_format_value(cfg.sigma0)}")
    for image_id, label, fv in index.entries:
        if "\t" in image_id or "\t" in label or "\n" in image_id + label:
            raise InvariantError(f"image id/label may not contain tabs or newlines: {image_id!r}")
        lines.append(f"{image_id}\t{label}\t" + ",".join(_format_value(v) for v in fv.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_REQUIRED_HEADERS = ("method", "L", "D", "sampled")


def load_index(path) -> LabeledIndex:
    """Parse an index file written by :func:`save_index`."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.endswith("\n"):
        raise IndexFormatError(f"{path}: file is truncated (no final newline)")
    header: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(text.split("\n")[:-1], start=1):
        if line.startswith("#"):
            if rows:
                raise IndexFormatError(f"{path}:{lineno}: header after entries")
            key, sep, value = line[1:].partition("=")
            if not sep or key not in _REQUIRED_HEADERS + ("sigma0",):
                raise IndexFormatError(f"{path}:{lineno}: unknown header {line!r}")
            header[key] = value
            continue
        rows.append((lineno, line))
    missing = [k for k in _REQUIRED_HEADERS if k not in header]
    if missing:
        raise IndexFormatError(f"{path}: missing header(s) {missing}")
    method = header["method"]
    if method not in METHODS:
        raise IndexFormatError(f"{path}: unsupported method {method!r}")
    if header["sampled"] not in ("0", "1"):
        raise IndexFormatError(f"{path}: #sampled must be 0 or 1")
    try:
        config = RctPlusConfig(
            levels=int(header["L"]),
            directions=tuple(int(d) for d in header["D"].split(",")),
            sigma0=float(header.get("sigma0", "1")),
            critically_sampled=header["sampled"] == "1",
        )
    except (ValueError, ConfigError) as exc:
        raise IndexFormatError(f"{path}: bad configuration header: {exc}") from exc
    layout = config.layout()
    width = 2 * len(layout)
    entries = []
    for lineno, line in rows:
        parts = line.split("\t")
        if len(parts) != 3:
            raise IndexFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        image_id, label, raw = parts
        try:
            values = np.array([float(v) for v in raw.split(",")])
        except ValueError:
            raise IndexFormatError(f"{path}:{lineno}: unparsable feature value") from None
        if values.size != width:
            raise IndexFormatError(f"{path}:{lineno}: expected {width} values, found {values.size}")
        entries.append((image_id, label, FeatureVector(method, layout, values)))
    index = LabeledIndex(method, config, entries)
    try:
        index.validate()
    except InvariantError as exc:
        raise IndexFormatError(f"{path}: {exc}") from exc
    return index
