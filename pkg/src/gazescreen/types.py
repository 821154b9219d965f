"""Core domain types: gaze recordings, fixations, scanpaths, video metadata.

File formats owned by this module (all UTF-8, LF, comma-separated):

* gaze sample file -- header ``timestamp_ms,x_px,y_px,valid``, one sample
  per row; ``valid`` is 0 or 1.
* label file -- header ``subject_id,video_id,adhd_label,swan_score`` with an
  empty field for absent values.
* fixation file -- header ``onset_ms,duration_ms,x_deg,y_deg,center_frame``;
  the interchange format between CLI stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

#: Valid samples further apart than this are treated as separate segments so
#: that dispersion windows never span blinks or tracker dropouts.
MAX_SEGMENT_GAP_MS = 75.0

#: Recordings losing more than this fraction of samples are rejected by the
#: loader's quality filter.
MAX_TRACKER_LOSS = 0.10

#: Tolerated relative deviation of consecutive timestamp gaps from the
#: nominal sample period.
SAMPLE_PERIOD_TOLERANCE = 0.10


@dataclass(frozen=True)
class GazeSample:
    timestamp_ms: float
    x_px: float
    y_px: float
    valid: bool


@dataclass(frozen=True)
class GazeRecording:
    """Raw timestamped gaze samples in screen pixels for one subject/video."""

    subject_id: str
    video_id: str
    sampling_rate_hz: float
    samples: tuple[GazeSample, ...]

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling_rate_hz must be positive")
        period = 1000.0 / self.sampling_rate_hz
        prev = None
        for s in self.samples:
            if prev is not None:
                gap = s.timestamp_ms - prev
                if gap <= 0:
                    raise ValueError(
                        f"timestamps must be strictly increasing "
                        f"(gap {gap:g} ms at t={s.timestamp_ms:g})"
                    )
                if abs(gap - period) > SAMPLE_PERIOD_TOLERANCE * period:
                    raise ValueError(
                        f"timestamp gap {gap:g} ms deviates more than "
                        f"{SAMPLE_PERIOD_TOLERANCE:.0%} from the nominal "
                        f"period {period:g} ms"
                    )
            prev = s.timestamp_ms

    @property
    def sample_period_ms(self) -> float:
        return 1000.0 / self.sampling_rate_hz

    @property
    def loss_fraction(self) -> float:
        """Fraction of invalid (tracker-loss) samples."""
        if not self.samples:
            return 0.0
        n_bad = sum(1 for s in self.samples if not s.valid)
        return n_bad / len(self.samples)

    def valid_segments(self, max_gap_ms: float = MAX_SEGMENT_GAP_MS) -> list[list[GazeSample]]:
        """Drop invalid samples and split at gaps longer than ``max_gap_ms``.

        Each returned segment is a maximal run of valid samples whose
        consecutive timestamps are at most ``max_gap_ms`` apart.
        """
        segments: list[list[GazeSample]] = []
        current: list[GazeSample] = []
        for s in self.samples:
            if not s.valid:
                continue
            if current and s.timestamp_ms - current[-1].timestamp_ms > max_gap_ms:
                segments.append(current)
                current = []
            current.append(s)
        if current:
            segments.append(current)
        return segments


@dataclass(frozen=True)
class Fixation:
    """One detected fixation; location in degrees of visual angle.

    ``center_frame_index`` is -1 until the fixation has been aligned to a
    video (see :func:`align_fixation_to_frame`).
    """

    x_deg: float
    y_deg: float
    t_ms: float
    onset_ms: float
    center_frame_index: int = -1

    def __post_init__(self):
        if not (self.t_ms > 0):
            raise ValueError(f"fixation duration must be positive, got {self.t_ms!r}")
        if not (math.isfinite(self.x_deg) and math.isfinite(self.y_deg)):
            raise ValueError("fixation location must be finite")


@dataclass(frozen=True)
class Scanpath:
    """Ordered fixation sequence of one subject on one video."""

    subject_id: str
    video_id: str
    fixations: tuple[Fixation, ...]

    def __post_init__(self):
        onsets = [f.onset_ms for f in self.fixations]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("fixation onsets must be strictly increasing")

    def __len__(self) -> int:
        return len(self.fixations)

    @property
    def usable(self) -> bool:
        """Scanpaths admitted to training must contain at least one fixation."""
        return len(self.fixations) >= 1


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    frame_rate_hz: float
    frame_count: int
    frame_width_px: int
    frame_height_px: int

    def __post_init__(self):
        if self.frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be positive")
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")


@dataclass(frozen=True)
class SubjectLabel:
    subject_id: str
    adhd_label: Optional[int] = None
    swan_score: Optional[float] = None

    def __post_init__(self):
        if self.adhd_label is not None and self.adhd_label not in (0, 1):
            raise ValueError(f"adhd_label must be 0 or 1, got {self.adhd_label!r}")


def align_fixation_to_frame(onset_ms: float, duration_ms: float, video: VideoMeta) -> int:
    """Map a fixation to the video frame under its temporal center.

    Frames outside the video span are clamped to the nearest valid index so
    edge fixations are kept rather than discarded.
    """
    center_s = (onset_ms + duration_ms / 2.0) / 1000.0
    frame = math.floor(center_s * video.frame_rate_hz)
    return min(max(frame, 0), video.frame_count - 1)


def align_scanpath(sp: Scanpath, video: VideoMeta) -> Scanpath:
    """Return a copy of ``sp`` with every fixation's center frame filled in."""
    fixations = tuple(
        Fixation(
            x_deg=f.x_deg,
            y_deg=f.y_deg,
            t_ms=f.t_ms,
            onset_ms=f.onset_ms,
            center_frame_index=align_fixation_to_frame(f.onset_ms, f.t_ms, video),
        )
        for f in sp.fixations
    )
    return Scanpath(sp.subject_id, sp.video_id, fixations)


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

GAZE_HEADER = "timestamp_ms,x_px,y_px,valid"
LABEL_HEADER = "subject_id,video_id,adhd_label,swan_score"
FIXATION_HEADER = "onset_ms,duration_ms,x_deg,y_deg,center_frame"


class QualityError(ValueError):
    """Raised when a recording fails the tracker-loss quality filter."""


def load_gaze_file(
    path: str | Path,
    subject_id: str,
    video_id: str,
    sampling_rate_hz: float,
    max_loss_fraction: Optional[float] = MAX_TRACKER_LOSS,
) -> GazeRecording:
    """Read a gaze sample file; reject recordings with too much tracker loss.

    Pass ``max_loss_fraction=None`` to disable the quality filter.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != GAZE_HEADER:
        raise ValueError(f"{path}: expected header {GAZE_HEADER!r}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        t, x, y, valid = parts
        samples.append(
            GazeSample(
                timestamp_ms=float(t),
                x_px=float(x),
                y_px=float(y),
                valid=valid.strip() == "1",
            )
        )
    rec = GazeRecording(subject_id, video_id, sampling_rate_hz, tuple(samples))
    if max_loss_fraction is not None and rec.loss_fraction > max_loss_fraction:
        raise QualityError(
            f"{path}: tracker loss {rec.loss_fraction:.1%} exceeds "
            f"{max_loss_fraction:.0%}"
        )
    return rec


def save_gaze_file(path: str | Path, samples: Iterable[GazeSample]) -> None:
    rows = [GAZE_HEADER]
    for s in samples:
        rows.append(f"{s.timestamp_ms:.3f},{s.x_px:.3f},{s.y_px:.3f},{1 if s.valid else 0}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_label_file(path: str | Path) -> dict[tuple[str, str], SubjectLabel]:
    """Read labels keyed by ``(subject_id, video_id)``."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != LABEL_HEADER:
        raise ValueError(f"{path}: expected header {LABEL_HEADER!r}")
    labels: dict[tuple[str, str], SubjectLabel] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        subject, video, adhd, swan = (p.strip() for p in parts)
        labels[(subject, video)] = SubjectLabel(
            subject_id=subject,
            adhd_label=int(adhd) if adhd else None,
            swan_score=float(swan) if swan else None,
        )
    return labels


def save_label_file(path: str | Path, rows: Sequence[tuple[str, str, SubjectLabel]]) -> None:
    lines = [LABEL_HEADER]
    for subject, video, label in rows:
        adhd = "" if label.adhd_label is None else str(label.adhd_label)
        swan = "" if label.swan_score is None else f"{label.swan_score:.6f}"
        lines.append(f"{subject},{video},{adhd},{swan}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_fixation_file(path: str | Path, sp: Scanpath) -> None:
    lines = [FIXATION_HEADER]
    for f in sp.fixations:
        lines.append(
            f"{f.onset_ms:.6f},{f.t_ms:.6f},{f.x_deg:.9f},{f.y_deg:.9f},{f.center_frame_index}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_fixation_file(path: str | Path, subject_id: str, video_id: str) -> Scanpath:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != FIXATION_HEADER:
        raise ValueError(f"{path}: expected header {FIXATION_HEADER!r}")
    fixations = []
    for line in lines[1:]:
        if not line.strip():
            continue
        onset, dur, x, y, frame = line.split(",")
        fixations.append(
            Fixation(
                x_deg=float(x),
                y_deg=float(y),
                t_ms=float(dur),
                onset_ms=float(onset),
                center_frame_index=int(frame),
            )
        )
    return Scanpath(subject_id, video_id, tuple(fixations))
