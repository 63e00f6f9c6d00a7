"""RCT-Plus decomposition: an undecimated pseudo-Gaussian Laplacian pyramid
followed by a per-level directional filter bank.

The directional stage is realised with brick-wall angular wedge masks in the
DFT domain. Wedge ``w`` (0-based) of a ``D``-band bank keeps the frequencies
whose angle, folded into ``[0, pi)``, lies in ``[pi*w/D, pi*(w+1)/D)``;
folding makes every mask point-symmetric, so outputs are real.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DimensionError
from .ingest import GrayImage

ALLOWED_DIRECTIONS = (2, 4, 8, 16)
APPROX = 0  # scale index used for the approximation subband

# relative slack when deciding that a bin sits exactly on a wedge boundary
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class RctPlusConfig:
    levels: int = 3
    directions: tuple[int, ...] = (8, 8, 8)
    sigma0: float = 1.0
    critically_sampled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "directions", tuple(int(d) for d in self.directions))
        if self.levels < 1:
            raise ConfigError(f"number of scale levels must be >= 1, got {self.levels}")
        if len(self.directions) != self.levels:
            raise ConfigError(
                f"need one direction count per level: {self.levels} levels, "
                f"{len(self.directions)} direction counts")
        for d in self.directions:
            if d not in ALLOWED_DIRECTIONS:
                raise ConfigError(f"direction count {d} not in {ALLOWED_DIRECTIONS}")
        if not self.sigma0 > 0:
            raise ConfigError(f"sigma0 must be positive, got {self.sigma0}")

    @property
    def subband_count(self) -> int:
        return sum(self.directions) + 1

    def layout(self) -> tuple[tuple[int, int], ...]:
        """Canonical (scale, direction) order; the approximation is ``(APPROX, 0)``, last."""
        keys = [(lvl, d) for lvl, n in enumerate(self.directions, start=1) for d in range(1, n + 1)]
        keys.append((APPROX, 0))
        return tuple(keys)


@dataclass(frozen=True, eq=False)
class RlpPyramid:
    details: list[np.ndarray]
    approximation: np.ndarray


@dataclass(frozen=True, eq=False)
class Subband:
    scale: int
    direction: int
    coefficients: np.ndarray

    @property
    def is_approximation(self) -> bool:
        return self.scale == APPROX


@dataclass(frozen=True, eq=False)
class RctPlusDecomposition:
    config: RctPlusConfig
    subbands: list[Subband]

    def layout(self) -> tuple[tuple[int, int], ...]:
        return tuple((s.scale, s.direction) for s in self.subbands)


def pseudo_gaussian_kernel(level: int, sigma0: float = 1.0) -> np.ndarray:
    """Truncated, unit-sum Gaussian with sigma = sigma0 * 2**(level-1) and
    radius ceil(4*sigma)."""
    if level < 1:
        raise ConfigError(f"level must be >= 1, got {level}")
    sigma = sigma0 * 2.0 ** (level - 1)
    radius = math.ceil(4.0 * sigma)
    i = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (i / sigma) ** 2)
    k /= k.sum()
    # enforce exact mirror symmetry after normalisation
    return 0.5 * (k + k[::-1])


def smooth(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable filtering (rows, then columns) with half-sample mirror extension."""
    y = ndimage.correlate1d(x, kernel, axis=1, mode="reflect")
    return ndimage.correlate1d(y, kernel, axis=0, mode="reflect")


def rlp_decompose(img: GrayImage | np.ndarray, levels: int, sigma0: float = 1.0) -> RlpPyramid:
    """Redundant (non-decimated) Laplacian pyramid.

    ``details[l-1] = C_{l-1} - C_l`` with ``C_0 = img`` and ``C_l`` the level-l
    smoothing of ``C_{l-1}``; the pyramid telescopes back to the input.
    """
    if levels < 1:
        raise ConfigError(f"number of scale levels must be >= 1, got {levels}")
    current = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    support = 2 * math.ceil(4.0 * sigma0 * 2.0 ** (levels - 1)) + 1
    if min(current.shape) < support:
        warnings.warn(
            f"image {current.shape} smaller than the level-{levels} kernel support ({support}); "
            "boundary extension dominates", RuntimeWarning, stacklevel=2)
    details = []
    for level in range(1, levels + 1):
        smoothed = smooth(current, pseudo_gaussian_kernel(level, sigma0))
        details.append(current - smoothed)
        current = smoothed
    return RlpPyramid(details, current)


def _fold_angle(fy: np.ndarray, fx: np.ndarray) -> np.ndarray:
    """Angle of (fx, fy) folded into [0, pi): antipodal frequencies share a value."""
    flip = (fy < 0) | ((fy == 0) & (fx < 0))
    fy = np.where(flip, -fy, fy)
    fx = np.where(flip, -fx, fx)
    return np.arctan2(fy, fx)


@lru_cache(maxsize=64)
def _wedge_index(shape: tuple[int, int], n_dirs: int) -> np.ndarray:
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None] * np.ones((1, w))
    fx = np.fft.fftfreq(w)[None, :] * np.ones((h, 1))
    t = _fold_angle(fy, fx) * (n_dirs / math.pi)
    nearest = np.rint(t)
    on_boundary = np.abs(t - nearest) <= _BOUNDARY_TOL * max(1.0, n_dirs)
    # boundary bins go to the lower-indexed neighbouring wedge
    idx = np.where(on_boundary, nearest - 1, np.floor(t)).astype(np.int64)
    idx = np.clip(idx, 0, n_dirs - 1)
    idx[0, 0] = 0
    if h % 2 == 0:
        idx[h // 2, :] = 0
    if w % 2 == 0:
        idx[:, w // 2] = 0
    idx.setflags(write=False)
    return idx


def wedge_masks(shape: tuple[int, int], n_dirs: int) -> np.ndarray:
    """Boolean masks of shape (n_dirs, h, w) in unshifted FFT layout."""
    if n_dirs not in ALLOWED_DIRECTIONS:
        raise ConfigError(f"direction count {n_dirs} not in {ALLOWED_DIRECTIONS}")
    idx = _wedge_index(tuple(shape), n_dirs)
    return np.stack([idx == w for w in range(n_dirs)])


def decimation_factors(wedge: int, n_dirs: int) -> tuple[int, int]:
    """(row step, column step) for critically sampling wedge ``wedge`` (0-based).

    Wedges centred within pi/4 of the vertical frequency axis are decimated
    D/2 along rows and 2 along columns; the rest the other way round. For
    D=2 both wedges centre exactly pi/4 off the axis and take the second
    branch, i.e. rows are halved.
    """
    center = math.pi * (wedge + 0.5) / n_dirs
    if abs(center - math.pi / 2) < math.pi / 4 - 1e-12:
        return (n_dirs // 2, 2)
    return (2, n_dirs // 2)


def dfb_decompose(detail: np.ndarray, n_dirs: int, critically_sampled: bool = True) -> list[np.ndarray]:
    """Split ``detail`` into ``n_dirs`` orientation subbands by DFT wedge masking."""
    if n_dirs not in ALLOWED_DIRECTIONS:
        raise ConfigError(f"direction count {n_dirs} not in {ALLOWED_DIRECTIONS}")
    detail = np.asarray(detail, dtype=np.float64)
    if critically_sampled:
        for w in range(n_dirs):
            rs, cs = decimation_factors(w, n_dirs)
            if detail.shape[0] % rs or detail.shape[1] % cs:
                raise DimensionError(
                    f"detail of shape {detail.shape} cannot be decimated by ({rs}, {cs}) for D={n_dirs}")
    idx = _wedge_index(detail.shape, n_dirs)
    spectrum = np.fft.fft2(detail)
    out = []
    for w in range(n_dirs):
        band = np.fft.ifft2(np.where(idx == w, spectrum, 0.0)).real
        if critically_sampled:
            rs, cs = decimation_factors(w, n_dirs)
            band = np.ascontiguousarray(band[::rs, ::cs])
        out.append(band)
    return out


def rct_plus(img: GrayImage | np.ndarray, config: RctPlusConfig = RctPlusConfig()) -> RctPlusDecomposition:
    """Full decomposition with subbands in canonical order, approximation last."""
    pyramid = rlp_decompose(img, config.levels, config.sigma0)
    subbands = []
    for level, (detail, n_dirs) in enumerate(zip(pyramid.details, config.directions), start=1):
        bands = dfb_decompose(detail, n_dirs, config.critically_sampled)
        subbands.extend(Subband(level, d, b) for d, b in enumerate(bands, start=1))
    subbands.append(Subband(APPROX, 0, pyramid.approximation))
    return RctPlusDecomposition(config, subbands)


def dump_decomposition(decomp: RctPlusDecomposition, out_dir) -> list[Path]:
    """Write one ``RCTP1`` debug file per subband; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sb in decomp.subbands:
        k, m = sb.coefficients.shape
        name = "approx.rctp" if sb.is_approximation else f"s{sb.scale}_d{sb.direction:02d}.rctp"
        header = f"RCTP1 {sb.scale} {sb.direction} {k} {m}\n".encode("ascii")
        path = out_dir / name
        path.write_bytes(header + sb.coefficients.astype("<f8").tobytes(order="C"))
        paths.append(path)
    return paths


def read_subband_dump(path) -> Subband:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    magic, scale, direction, k, m = head.decode("ascii").split()
    if magic != "RCTP1":
        raise ValueError(f"{path}: not an RCTP1 dump")
    k, m = int(k), int(m)
    expected = 8 * k * m
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    coeffs = np.frombuffer(body, dtype="<f8").reshape(k, m).astype(np.float64)
    return Subband(int(scale), int(direction), coeffs)


def total_directional_coefficients(decomp: RctPlusDecomposition, level: int) -> int:
    return sum(sb.coefficients.size for sb in decomp.subbands if sb.scale == level)


def directional_energies(bands: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([float(np.sum(b * b)) for b in bands])
