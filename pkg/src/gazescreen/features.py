"""Per-fixation feature channels: saliency, location, duration.

Channel order is fixed as ``[saliency, x_deg, y_deg, duration_ms]``. Channels
are z-scored with statistics pooled over the *training* sequences only; the
fitted-on split identifier travels with the statistics so that downstream
code can assert the absence of train/test leakage. Sequences are then
zero-padded (zero equals the channel mean after z-scoring) or truncated to
the fixed model length.

Feature cache file (``.feat``): magic ``FEAT1\\n``, ASCII header
``subject video 4 L true_length\\n``, then ``4 * L`` little-endian float32
values, channel-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ScreenGeometry
from .saliency import ExtractionMaskSpec, SaliencyStore, build_extraction_mask, extract_saliency
from .types import Scanpath

FEAT_MAGIC = b"FEAT1\n"

N_CHANNELS = 4
CHANNEL_NAMES = ("saliency", "x", "y", "duration")

#: Channel standard deviations are floored here so constant channels do not
#: blow up the z-score.
STD_FLOOR = 1e-8

#: Default fixed model length in fixations.
DEFAULT_MODEL_LENGTH = 256


class LeakageError(RuntimeError):
    """Raised when normalization statistics come from the wrong split."""


@dataclass(frozen=True)
class FeatureSequence:
    """Unnormalized 4 x M channel matrix for one scanpath."""

    subject_id: str
    video_id: str
    channels: np.ndarray

    def __post_init__(self):
        if self.channels.ndim != 2 or self.channels.shape[0] != N_CHANNELS:
            raise ValueError(
                f"channels must be {N_CHANNELS} x M, got shape {self.channels.shape}"
            )
        sal = self.channels[0]
        if np.any(sal < 0) or np.any(sal > 1):
            raise ValueError("raw saliency channel must lie in [0, 1]")

    @property
    def length(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population std, tied to the split they were fit on."""

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str

    def __post_init__(self):
        if self.mean.shape != (N_CHANNELS,) or self.std.shape != (N_CHANNELS,):
            raise ValueError("stats must hold one mean/std per channel")
        if np.any(self.std <= 0):
            raise ValueError("stds must be strictly positive (epsilon-guarded)")


def assemble(
    sp: Scanpath,
    store: SaliencyStore,
    geom: ScreenGeometry,
    mask_spec: ExtractionMaskSpec = ExtractionMaskSpec(),
) -> FeatureSequence:
    """Build the 4 x M feature matrix for one scanpath.

    Every fixation must carry a center frame index with an available raster;
    a missing raster raises with the offending frame named.
    """
    if len(sp) == 0:
        raise ValueError(f"scanpath {sp.subject_id}/{sp.video_id} has no fixations")
    cols = np.empty((N_CHANNELS, len(sp)), dtype=float)
    for m, fix in enumerate(sp.fixations):
        if fix.center_frame_index < 0:
            raise ValueError(
                f"fixation {m} of {sp.subject_id}/{sp.video_id} has no frame alignment"
            )
        raster = store.get(fix.center_frame_index)
        mask = build_extraction_mask(fix, (raster.height, raster.width), geom, mask_spec)
        cols[0, m] = extract_saliency(fix, raster, mask)
        cols[1, m] = fix.x_deg
        cols[2, m] = fix.y_deg
        cols[3, m] = fix.t_ms
    return FeatureSequence(sp.subject_id, sp.video_id, cols)


def fit_stats(train: list[FeatureSequence], fitted_on: str) -> ChannelStats:
    """Pool all fixations of the training sequences; population std."""
    if not train:
        raise ValueError("cannot fit channel statistics on an empty training set")
    pooled = np.concatenate([f.channels for f in train], axis=1)
    mean = pooled.mean(axis=1)
    std = np.maximum(pooled.std(axis=1), STD_FLOOR)
    return ChannelStats(mean=mean, std=std, fitted_on=fitted_on)


def require_fit_split(stats: ChannelStats, split_id: str) -> None:
    """Leakage guard: statistics must come from the expected training split."""
    if stats.fitted_on != split_id:
        raise LeakageError(
            f"channel statistics were fitted on {stats.fitted_on!r}, "
            f"expected training split {split_id!r}"
        )


def normalize_and_fit_length(
    f: FeatureSequence, stats: ChannelStats, length: int = DEFAULT_MODEL_LENGTH
) -> tuple[np.ndarray, int]:
    """Z-score each channel, then right-pad with zeros or truncate to ``length``.

    Returns the 4 x length array and the true (pre-padding) length.
    """
    if length < 1:
        raise ValueError(f"model length must be >= 1, got {length}")
    z = (f.channels - stats.mean[:, None]) / stats.std[:, None]
    true_length = min(f.length, length)
    out = np.zeros((N_CHANNELS, length), dtype=float)
    out[:, :true_length] = z[:, :true_length]
    return out, true_length


# ---------------------------------------------------------------------------
# Feature cache files
# ---------------------------------------------------------------------------


def save_feat(
    path: str | Path, subject_id: str, video_id: str, array: np.ndarray, true_length: int
) -> None:
    if array.ndim != 2 or array.shape[0] != N_CHANNELS:
        raise ValueError(f"expected {N_CHANNELS} x L array, got shape {array.shape}")
    for ident in (subject_id, video_id):
        if any(ch.isspace() for ch in ident):
            raise ValueError(f"identifier {ident!r} may not contain whitespace")
    header = FEAT_MAGIC + (
        f"{subject_id} {video_id} {N_CHANNELS} {array.shape[1]} {true_length}\n".encode("ascii")
    )
    Path(path).write_bytes(header + np.ascontiguousarray(array, dtype="<f4").tobytes())


def save_stats(path: str | Path, stats: ChannelStats) -> None:
    lines = [f"fitted_on={stats.fitted_on}", "channel,mean,std"]
    for i, name in enumerate(CHANNEL_NAMES):
        lines.append(f"{name},{float(stats.mean[i])!r},{float(stats.std[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_stats(path: str | Path) -> ChannelStats:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) != 2 + N_CHANNELS or not lines[0].startswith("fitted_on="):
        raise ValueError(f"{path}: malformed channel statistics file")
    fitted_on = lines[0].partition("=")[2]
    mean = np.empty(N_CHANNELS)
    std = np.empty(N_CHANNELS)
    for i, line in enumerate(lines[2:]):
        name, m, s = line.split(",")
        if name != CHANNEL_NAMES[i]:
            raise ValueError(f"{path}: unexpected channel order ({name!r})")
        mean[i] = float(m)
        std[i] = float(s)
    return ChannelStats(mean=mean, std=std, fitted_on=fitted_on)


def load_feat(path: str | Path) -> tuple[str, str, np.ndarray, int]:
    path = Path(path)
    blob = path.read_bytes()
    if not blob.startswith(FEAT_MAGIC):
        raise ValueError(f"{path}: bad magic, not a FEAT1 cache")
    nl = blob.index(b"\n", len(FEAT_MAGIC))
    subject, video, n_channels, length, true_length = blob[len(FEAT_MAGIC) : nl].split()
    if int(n_channels) != N_CHANNELS:
        raise ValueError(f"{path}: expected {N_CHANNELS} channels, got {n_channels!r}")
    data = np.frombuffer(blob[nl + 1 :], dtype="<f4")
    if data.size != N_CHANNELS * int(length):
        raise ValueError(f"{path}: truncated feature data")
    array = data.reshape(N_CHANNELS, int(length)).astype(float)
    return subject.decode("ascii"), video.decode("ascii"), array, int(true_length)
