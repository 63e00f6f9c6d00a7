"""Image loading, tiling, manifest-driven dataset construction and synthetic
grating datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, ImageFormatError, ManifestError

MIN_DECOMPOSITION_SIZE = 32

_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """2D float64 intensity matrix.

    Pixels are kept as reals; no re-quantization happens after load.
    """

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.size == 0:
            raise DimensionError(f"expected a non-empty 2D matrix, got shape {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    label: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    tile_size: int | None = None


@dataclass
class Dataset:
    """Labeled images sharing one size. ``images`` holds (id, label, image)."""

    images: list[tuple[str, str, GrayImage]]
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            self.classes = sorted({label for _, label, _ in self.images})
        known = set(self.classes)
        shapes = set()
        for image_id, label, img in self.images:
            if label not in known:
                raise ManifestError(f"image {image_id!r} has unknown class {label!r}")
            shapes.add(img.shape)
        if len(shapes) > 1:
            raise DimensionError(f"dataset mixes image sizes: {sorted(shapes)}")

    def __len__(self):
        return len(self.images)

    def class_sizes(self) -> dict[str, int]:
        sizes = dict.fromkeys(self.classes, 0)
        for _, label, _ in self.images:
            sizes[label] += 1
        return sizes


def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luminance of an (..., 3) array, rounded half-up to integers."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = rgb[..., 0] * _LUMA_WEIGHTS[0] + rgb[..., 1] * _LUMA_WEIGHTS[1] + rgb[..., 2] * _LUMA_WEIGHTS[2]
    return np.floor(y + 0.5)


def load_image(path) -> GrayImage:
    """Read an 8-bit grayscale or RGB PGM/PNG file.

    Raises
    ------
    OSError
        The file is missing or unreadable.
    ImageFormatError
        The file is not an image, or is not 8-bit gray/RGB.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise ImageFormatError(f"{path}: unsupported image mode {mode!r} (need 8-bit gray or RGB)")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a recognised image file") from exc
    if mode == "RGB":
        return GrayImage(luminance(arr))
    return GrayImage(arr.astype(np.float64))


def save_pgm(img: GrayImage, path) -> None:
    """Write an 8-bit binary PGM; pixels are rounded and clipped to [0, 255]."""
    data = np.clip(np.floor(img.pixels + 0.5), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def tile_image(img: GrayImage, tile_size: int) -> list[GrayImage]:
    """Split into non-overlapping square tiles in row-major grid order."""
    if tile_size <= 0:
        raise DimensionError(f"tile size must be positive, got {tile_size}")
    h, w = img.shape
    if h % tile_size or w % tile_size:
        raise DimensionError(f"tile size {tile_size} does not divide image size {h}x{w}")
    tiles = []
    for r in range(h // tile_size):
        for c in range(w // tile_size):
            block = img.pixels[r * tile_size:(r + 1) * tile_size, c * tile_size:(c + 1) * tile_size]
            tiles.append(GrayImage(block.copy()))
    return tiles


def assemble_tiles(tiles: Sequence[GrayImage], rows: int, cols: int) -> GrayImage:
    """Inverse of :func:`tile_image` for a ``rows`` x ``cols`` grid."""
    if len(tiles) != rows * cols:
        raise DimensionError(f"need {rows * cols} tiles, got {len(tiles)}")
    grid = [[tiles[r * cols + c].pixels for c in range(cols)] for r in range(rows)]
    return GrayImage(np.block(grid))


def parse_manifest(text: str, base_dir=None) -> DatasetManifest:
    """Parse manifest text: ``<id>\\t<label>\\t<path>`` lines, optional ``#tile=<N>`` first line.

    Relative paths are resolved against ``base_dir`` when given.
    """
    lines = text.splitlines()
    tile_size = None
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            if lineno == 1 and line.startswith("#tile="):
                try:
                    tile_size = int(line[len("#tile="):])
                except ValueError:
                    raise ManifestError(f"line {lineno}: bad tile size {line!r}") from None
                if tile_size <= 0:
                    raise ManifestError(f"line {lineno}: tile size must be positive")
                continue
            raise ManifestError(f"line {lineno}: unexpected header {line!r}")
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise ManifestError(f"line {lineno}: expected <image_id>\\t<class_label>\\t<path>")
        image_id, label, path = parts
        if base_dir is not None and not Path(path).is_absolute():
            path = str(Path(base_dir) / path)
        entries.append(ManifestEntry(image_id, path, label))
    ids = [e.image_id for e in entries]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ManifestError(f"duplicate image id {dup!r}")
    return DatasetManifest(tuple(entries), tile_size)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)


def build_dataset(manifest: DatasetManifest) -> Dataset:
    """Load (and optionally tile) every manifest entry.

    Tiles get ids ``<image id>#<row>_<col>`` and inherit the parent's label.
    """
    if not manifest.entries:
        raise ManifestError("manifest is empty")
    images = []
    for entry in manifest.entries:
        img = load_image(entry.path)  # errors carry the offending path
        if manifest.tile_size is None:
            images.append((entry.image_id, entry.label, img))
            continue
        tiles = tile_image(img, manifest.tile_size)
        cols = img.width // manifest.tile_size
        for i, tile in enumerate(tiles):
            r, c = divmod(i, cols)
            images.append((f"{entry.image_id}#{r}_{c}", entry.label, tile))
    classes = list(dict.fromkeys(label for _, label, _ in images))
    dataset = Dataset(images, classes)
    small = [label for label, n in dataset.class_sizes().items() if n < 2]
    if small:
        raise ManifestError(f"classes with fewer than 2 images: {small}")
    return dataset


def grating(size: int, theta: float, freq: float, phase: float,
            amplitude: float = 60.0, mean: float = 128.0) -> np.ndarray:
    """Noise-free sinusoidal grating; ``theta`` is the angle of the wave vector
    measured from the column axis towards the row axis."""
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    arg = 2.0 * math.pi * freq * (cols * math.cos(theta) + rows * math.sin(theta)) + phase
    return mean + amplitude * np.cos(arg)


def generate_synthetic_dataset(num_classes: int, tiles_per_class: int, tile_size: int,
                               seed: int) -> Dataset:
    """Oriented-grating texture classes for desk-scale experiments.

    Class ``c`` uses orientation ``c*pi/num_classes`` and frequency
    ``0.08 + 0.02*(c mod 4)`` cycles/pixel, amplitude 60 around 128, with a
    random phase and uniform noise in [-20, 20] drawn per tile.
    """
    if not 1 <= num_classes <= 16:
        raise ValueError(f"num_classes must be in 1..16, got {num_classes}")
    if tiles_per_class < 1 or tile_size < 1:
        raise ValueError("tiles_per_class and tile_size must be positive")
    rng = np.random.default_rng(seed)
    images = []
    classes = [f"grating{c:02d}" for c in range(num_classes)]
    for c, label in enumerate(classes):
        theta = c * math.pi / num_classes
        freq = 0.08 + 0.02 * (c % 4)
        for t in range(tiles_per_class):
            phase = rng.uniform(0.0, 2.0 * math.pi)
            noise = rng.uniform(-20.0, 20.0, size=(tile_size, tile_size))
            pixels = grating(tile_size, theta, freq, phase) + noise
            images.append((f"{label}_{t:03d}", label, GrayImage(pixels)))
    return Dataset(images, classes)


DATASET_LISTING = "dataset.tsv"


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write ``images/<n>.npy`` plus a ``dataset.tsv`` listing (id, class, file)."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for n, (image_id, label, img) in enumerate(dataset.images):
        rel = f"images/{n:06d}.npy"
        np.save(out_dir / rel, img.pixels, allow_pickle=False)
        lines.append(f"{image_id}\t{label}\t{rel}")
    listing = out_dir / DATASET_LISTING
    listing.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return listing


def load_array_or_image(path) -> GrayImage:
    path = Path(path)
    if path.suffix == ".npy":
        return GrayImage(np.load(path, allow_pickle=False))
    return load_image(path)


def load_dataset(path) -> Dataset:
    """Read a directory written by :func:`save_dataset` (or its listing file)."""
    path = Path(path)
    listing = path / DATASET_LISTING if path.is_dir() else path
    manifest = parse_manifest(listing.read_text(encoding="utf-8"), base_dir=listing.parent)
    images = [(e.image_id, e.label, load_array_or_image(e.path)) for e in manifest.entries]
    if not images:
        raise ManifestError(f"{listing}: dataset is empty")
    return Dataset(images, list(dict.fromkeys(label for _, label, _ in images)))
