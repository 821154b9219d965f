"""Dispersion-threshold (I-DT) fixation detection.

A window of consecutive samples is a fixation candidate when it spans at
least the minimum duration and its dispersion ``(max x - min x) +
(max y - min y)``, measured in degrees, stays at or below the threshold.
Candidate windows are extended sample by sample; when no candidate can be
opened at a sample, the window start advances by one (the standard skip
rule). Detection runs independently per valid segment of the recording, so
windows never span blinks or tracker dropouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ScreenGeometry, px_to_deg
from .types import Fixation, GazeRecording, Scanpath


@dataclass(frozen=True)
class IdtConfig:
    """I-DT parameters; defaults are conventional, not study-specific."""

    dispersion_threshold_deg: float = 1.0
    min_duration_ms: float = 100.0

    def __post_init__(self):
        if self.dispersion_threshold_deg <= 0:
            raise ValueError("dispersion_threshold_deg must be positive")
        if self.min_duration_ms <= 0:
            raise ValueError("min_duration_ms must be positive")


def detect_fixations_deg(
    t_ms: np.ndarray,
    x_deg: np.ndarray,
    y_deg: np.ndarray,
    config: IdtConfig,
) -> list[tuple[float, float, float, float]]:
    """Run I-DT on one segment already converted to degrees.

    Returns ``(onset_ms, duration_ms, centroid_x_deg, centroid_y_deg)``
    tuples ordered by onset. The segment is assumed gap-free; callers split
    at blinks beforehand.
    """
    t = np.asarray(t_ms, dtype=float)
    x = np.asarray(x_deg, dtype=float)
    y = np.asarray(y_deg, dtype=float)
    n = len(t)
    events: list[tuple[float, float, float, float]] = []

    i = 0
    while i < n:
        # Smallest window starting at i that spans the minimum duration.
        j = i
        while j < n and t[j] - t[i] < config.min_duration_ms:
            j += 1
        if j >= n:
            break  # remaining tail is too short for any fixation

        max_x = float(np.max(x[i : j + 1]))
        min_x = float(np.min(x[i : j + 1]))
        max_y = float(np.max(y[i : j + 1]))
        min_y = float(np.min(y[i : j + 1]))
        if (max_x - min_x) + (max_y - min_y) > config.dispersion_threshold_deg:
            i += 1
            continue

        while j + 1 < n:
            nx, ny = x[j + 1], y[j + 1]
            ex_max_x, ex_min_x = max(max_x, nx), min(min_x, nx)
            ex_max_y, ex_min_y = max(max_y, ny), min(min_y, ny)
            if (ex_max_x - ex_min_x) + (ex_max_y - ex_min_y) > config.dispersion_threshold_deg:
                break
            max_x, min_x, max_y, min_y = ex_max_x, ex_min_x, ex_max_y, ex_min_y
            j += 1

        events.append(
            (
                float(t[i]),
                float(t[j] - t[i]),
                float(np.mean(x[i : j + 1])),
                float(np.mean(y[i : j + 1])),
            )
        )
        i = j + 1

    return events


def detect_fixations(
    recording: GazeRecording,
    geom: ScreenGeometry,
    config: IdtConfig,
) -> Scanpath:
    """Detect fixations in a raw recording; returns a Scanpath in degrees.

    Recordings without any usable segment yield an empty Scanpath whose
    ``usable`` flag is False. Frame alignment is a separate step (see
    :func:`gazescreen.types.align_scanpath`).
    """
    if config.min_duration_ms < 2 * recording.sample_period_ms:
        raise ValueError(
            f"min_duration_ms {config.min_duration_ms:g} is below two sample "
            f"periods ({2 * recording.sample_period_ms:g} ms) at "
            f"{recording.sampling_rate_hz:g} Hz"
        )

    fixations: list[Fixation] = []
    for segment in recording.valid_segments():
        if len(segment) < 2:
            continue
        t = np.array([s.timestamp_ms for s in segment])
        x = np.array([px_to_deg(s.x_px, "x", geom) for s in segment])
        y = np.array([px_to_deg(s.y_px, "y", geom) for s in segment])
        for onset, duration, cx, cy in detect_fixations_deg(t, x, y, config):
            fixations.append(Fixation(x_deg=cx, y_deg=cy, t_ms=duration, onset_ms=onset))

    return Scanpath(recording.subject_id, recording.video_id, tuple(fixations))
