"""Saliency rasters: ingestion, normalization, and per-fixation extraction.

Rasters are precomputed upstream (one H x W grid per video frame) and may be
lower resolution than the screen; fixation coordinates are rescaled into
raster cells through the screen geometry. The saliency value of a fixation
is the inner product of the min-max normalized map with a Gaussian
extraction mask centered on the fixation cell, which models parafoveal
intake around the fixation center.

Raster file format (``.salr``, bit-exact): magic ``SALR1\\n``, ASCII header
``frame_index H W\\n``, then ``H * W`` little-endian IEEE-754 float32 values
in row-major order. Files live under ``saliency/<video_id>/frame_<i>.salr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ScreenGeometry, deg_to_px
from .types import Fixation

SALR_MAGIC = b"SALR1\n"

#: Gaussian support truncated at +/- 4 sigma before renormalization; the
#: discarded mass is below 1e-4.
MASK_TRUNCATION_SIGMAS = 4.0


@dataclass(frozen=True)
class SaliencyMap:
    """Per-frame saliency raster; ``normalized`` is set by min-max scaling."""

    frame_index: int
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"saliency raster must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("saliency raster contains non-finite values")
        if np.any(v < 0):
            raise ValueError("saliency raster contains negative values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ExtractionMaskSpec:
    """Gaussian extraction mask width in degrees of visual angle."""

    sigma_deg: float = 1.5

    def __post_init__(self):
        if self.sigma_deg <= 0:
            raise ValueError("sigma_deg must be positive")


def minmax_normalize(m: SaliencyMap) -> SaliencyMap:
    """Rescale raster values to [0, 1]; constant rasters map to all zeros.

    A constant map carries no spatial information, so zero is the neutral
    choice for the downstream z-scored channel.
    """
    v = m.values
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        out = np.zeros_like(v, dtype=float)
    else:
        out = (v - lo) / (hi - lo)
    return SaliencyMap(m.frame_index, out, normalized=True)


def _fixation_cell(
    fix: Fixation, dims: tuple[int, int], geom: ScreenGeometry
) -> tuple[int, int]:
    """Raster cell under a fixation, clamped onto the raster."""
    h, w = dims
    px_x = deg_to_px(fix.x_deg, "x", geom)
    px_y = deg_to_px(fix.y_deg, "y", geom)
    col = int(math.floor(px_x * w / geom.screen_width_px))
    row = int(math.floor(px_y * h / geom.screen_height_px))
    return min(max(row, 0), h - 1), min(max(col, 0), w - 1)


def sigma_in_cells(
    dims: tuple[int, int], geom: ScreenGeometry, spec: ExtractionMaskSpec
) -> tuple[float, float]:
    """Convert the mask sigma from degrees to raster cells, per axis."""
    h, w = dims
    sigma_cm = geom.viewing_distance_cm * math.tan(math.radians(spec.sigma_deg))
    sigma_px_x = sigma_cm / geom.cm_per_px("x")
    sigma_px_y = sigma_cm / geom.cm_per_px("y")
    return sigma_px_y * h / geom.screen_height_px, sigma_px_x * w / geom.screen_width_px


def build_extraction_mask(
    fix: Fixation,
    dims: tuple[int, int],
    geom: ScreenGeometry,
    spec: ExtractionMaskSpec = ExtractionMaskSpec(),
) -> np.ndarray:
    """Discretized Gaussian centered on the fixation cell, summing to 1.

    The support is truncated at +/- 4 sigma and renormalized, so masks near
    raster borders keep unit mass over their truncated support.
    """
    h, w = dims
    sigma_rows, sigma_cols = sigma_in_cells(dims, geom, spec)
    if min(sigma_rows, sigma_cols) < 0.5:
        raise ValueError(
            f"mask sigma is {min(sigma_rows, sigma_cols):.3f} cells; increase "
            f"the raster resolution so that sigma spans at least half a cell"
        )
    row0, col0 = _fixation_cell(fix, dims, geom)

    r_lo = max(0, row0 - math.ceil(MASK_TRUNCATION_SIGMAS * sigma_rows))
    r_hi = min(h - 1, row0 + math.ceil(MASK_TRUNCATION_SIGMAS * sigma_rows))
    c_lo = max(0, col0 - math.ceil(MASK_TRUNCATION_SIGMAS * sigma_cols))
    c_hi = min(w - 1, col0 + math.ceil(MASK_TRUNCATION_SIGMAS * sigma_cols))

    rows = np.arange(r_lo, r_hi + 1)
    cols = np.arange(c_lo, c_hi + 1)
    rr = ((rows - row0) / sigma_rows) ** 2
    cc = ((cols - col0) / sigma_cols) ** 2
    patch = np.exp(-0.5 * (rr[:, None] + cc[None, :]))

    mask = np.zeros((h, w), dtype=float)
    mask[r_lo : r_hi + 1, c_lo : c_hi + 1] = patch
    mask /= mask.sum()
    return mask


def extract_saliency(fix: Fixation, m: SaliencyMap, mask: np.ndarray) -> float:
    """Saliency value of one fixation: sum of the masked normalized raster."""
    if mask.shape != m.values.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match raster shape {m.values.shape}"
        )
    if not m.normalized:
        raise ValueError("saliency raster must be min-max normalized before extraction")
    value = float(np.sum(mask * m.values))
    # Unit-mass mask on a [0, 1] raster; clip float residue at the ends.
    value = min(max(value, 0.0), 1.0)
    assert 0.0 <= value <= 1.0
    return value


# ---------------------------------------------------------------------------
# Raster files
# ---------------------------------------------------------------------------


def save_salr(path: str | Path, m: SaliencyMap) -> None:
    header = SALR_MAGIC + f"{m.frame_index} {m.height} {m.width}\n".encode("ascii")
    data = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + data)


def load_salr(path: str | Path) -> SaliencyMap:
    path = Path(path)
    blob = path.read_bytes()
    if not blob.startswith(SALR_MAGIC):
        raise ValueError(f"{path}: bad magic, not a SALR1 raster")
    nl = blob.index(b"\n", len(SALR_MAGIC))
    frame_index, h, w = (int(tok) for tok in blob[len(SALR_MAGIC) : nl].split())
    data = np.frombuffer(blob[nl + 1 :], dtype="<f4")
    if data.size != h * w:
        raise ValueError(f"{path}: expected {h * w} values, found {data.size}")
    return SaliencyMap(frame_index, data.reshape(h, w).astype(float))


def frame_path(saliency_dir: str | Path, frame_index: int) -> Path:
    return Path(saliency_dir) / f"frame_{frame_index}.salr"


class SaliencyStore:
    """Loads and caches normalized rasters for one video's saliency directory."""

    def __init__(self, saliency_dir: str | Path, cache_size: int = 64):
        self.saliency_dir = Path(saliency_dir)
        self.cache_size = cache_size
        self._cache: dict[int, SaliencyMap] = {}

    def get(self, frame_index: int) -> SaliencyMap:
        if frame_index in self._cache:
            return self._cache[frame_index]
        path = frame_path(self.saliency_dir, frame_index)
        if not path.exists():
            raise FileNotFoundError(
                f"missing saliency raster for frame {frame_index}: {path}"
            )
        m = minmax_normalize(load_salr(path))
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[frame_index] = m
        return m
