"""Synthetic dataset generator: planted fixations, rasters, labels, manifest.

Gaze is rendered as a fixation-saccade process on the sample grid:
stationary clusters with small isotropic jitter, joined by fast linear
sweeps, occasionally interrupted by blink gaps of invalid samples placed
between fixations. The planted events are therefore recoverable by the
dispersion-threshold detector, and the generator records its bookkeeping so
pipelines can audit recovered fixation counts.

Group differences are injected on two channels, in standard-deviation units
of the respective sampling distribution: affected subjects draw shorter
fixation durations and fixate cells with lower normalized saliency values.
Classification subjects carry a binary label (severity 0 or 1); pretraining
subjects carry a continuous severity in [0, 1] surfaced as a SWAN-like
score, so both tasks share the same underlying signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ScreenGeometry, DEFAULT_SCREEN
from .manifest import Manifest, RecordingEntry, VideoEntry, save_manifest
from .saliency import SaliencyMap, minmax_normalize, save_salr
from .types import GazeSample, SubjectLabel, VideoMeta, save_gaze_file, save_label_file


@dataclass(frozen=True)
class SynthSpec:
    n_adhd: int
    n_control: int
    n_pretrain: int = 0
    effect_duration_sd: float = 0.0
    effect_saliency_sd: float = 0.0
    video_duration_s: float = 30.0
    sampling_rate_hz: float = 60.0
    frame_rate_hz: float = 10.0
    raster_width: int = 64
    raster_height: int = 36
    video_id: str = "synthvid"
    seed: int = 0

    def __post_init__(self):
        if self.n_adhd < 1 or self.n_control < 1:
            raise ValueError("both classification groups must be nonempty")
        if self.n_pretrain < 0:
            raise ValueError("n_pretrain must be nonnegative")
        if self.effect_duration_sd < 0 or self.effect_saliency_sd < 0:
            raise ValueError("effect sizes must be nonnegative")
        if self.video_duration_s <= 0 or self.sampling_rate_hz <= 0 or self.frame_rate_hz <= 0:
            raise ValueError("durations and rates must be positive")


# Fixation-level sampling distributions (ms / normalized saliency units).
DURATION_MEAN_MS = 320.0
DURATION_SD_MS = 80.0
DURATION_FLOOR_MS = 120.0
SALIENCY_MEAN = 0.60
SALIENCY_SD = 0.15
#: Idiosyncratic per-subject offsets, in units of the channel sd.
SUBJECT_SD = 0.3

SACCADE_GAP_RANGE_MS = (40.0, 80.0)
BLINK_GAP_RANGE_MS = (100.0, 160.0)
BLINKS_PER_SUBJECT = 2
JITTER_PX = 4.0
MIN_JUMP_DEG = 3.0
SCENE_DURATION_S = 3.0
CANDIDATE_CELLS = 200


def _scene_maps(
    spec: SynthSpec, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray], int]:
    """Raw blob maps per scene plus their normalized versions."""
    n_scenes = max(1, math.ceil(spec.video_duration_s / SCENE_DURATION_S))
    h, w = spec.raster_height, spec.raster_width
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    raw_maps, norm_maps = [], []
    for _ in range(n_scenes):
        n_blobs = int(rng.integers(3, 7))
        grid = rng.uniform(0.0, 0.05, size=(h, w))
        for _ in range(n_blobs):
            cy = rng.uniform(0, h)
            cx = rng.uniform(0, w)
            sigma = rng.uniform(2.5, 6.0)
            amp = rng.uniform(0.3, 1.0)
            grid = grid + amp * np.exp(
                -((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * sigma**2)
            )
        raw_maps.append(grid)
        norm_maps.append(minmax_normalize(SaliencyMap(0, grid)).values)
    return raw_maps, norm_maps, n_scenes


def _cell_to_px(
    row: int, col: int, spec: SynthSpec, geom: ScreenGeometry
) -> tuple[float, float]:
    x = (col + 0.5) * geom.screen_width_px / spec.raster_width
    y = (row + 0.5) * geom.screen_height_px / spec.raster_height
    return x, y


def _pick_fixation_cell(
    norm_map: np.ndarray,
    target_value: float,
    prev_px: tuple[float, float] | None,
    min_jump_px: float,
    spec: SynthSpec,
    geom: ScreenGeometry,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Random cell whose normalized value is closest to the target, at least
    one saccade length away from the previous fixation."""
    h, w = norm_map.shape
    rows = rng.integers(0, h, size=CANDIDATE_CELLS)
    cols = rng.integers(0, w, size=CANDIDATE_CELLS)
    if prev_px is not None:
        keep = []
        for r, c in zip(rows, cols):
            x, y = _cell_to_px(int(r), int(c), spec, geom)
            if math.hypot(x - prev_px[0], y - prev_px[1]) >= min_jump_px:
                keep.append((r, c))
        if keep:
            rows = np.array([k[0] for k in keep])
            cols = np.array([k[1] for k in keep])
    errors = np.abs(norm_map[rows, cols] - target_value)
    best = int(np.argmin(errors))
    return int(rows[best]), int(cols[best])


def _render_subject(
    spec: SynthSpec,
    geom: ScreenGeometry,
    severity: float,
    norm_maps: list[np.ndarray],
    frames_per_scene: int,
    rng: np.random.Generator,
) -> tuple[list[GazeSample], int]:
    """Sample stream for one subject; returns (samples, planted fixations)."""
    period = 1000.0 / spec.sampling_rate_hz
    total_samples = int(spec.video_duration_s * 1000.0 / period)
    min_jump_px = (
        geom.viewing_distance_cm * math.tan(math.radians(MIN_JUMP_DEG)) / geom.cm_per_px("x")
    )

    dur_offset = SUBJECT_SD * rng.normal() - severity * spec.effect_duration_sd
    sal_offset = SUBJECT_SD * rng.normal() - severity * spec.effect_saliency_sd

    blink_slots = set(rng.integers(2, 60, size=BLINKS_PER_SUBJECT).tolist())

    samples: list[GazeSample] = []
    planted = 0
    prev_px: tuple[float, float] | None = None
    k = 0  # sample index on the grid
    fixation_index = 0
    while True:
        duration = max(
            DURATION_FLOOR_MS,
            DURATION_MEAN_MS + DURATION_SD_MS * (dur_offset + rng.normal()),
        )
        n_fix = max(2, round(duration / period))
        if k + n_fix > total_samples:
            break

        # Scene under the fixation's temporal center chooses the map.
        center_ms = (k + n_fix / 2.0) * period
        frame = min(
            int(center_ms / 1000.0 * spec.frame_rate_hz),
            int(spec.video_duration_s * spec.frame_rate_hz) - 1,
        )
        scene = min(frame // frames_per_scene, len(norm_maps) - 1)

        target = float(
            np.clip(
                SALIENCY_MEAN + SALIENCY_SD * (sal_offset + 0.5 * rng.normal()),
                0.02,
                0.98,
            )
        )
        row, col = _pick_fixation_cell(
            norm_maps[scene], target, prev_px, min_jump_px, spec, geom, rng
        )
        fx, fy = _cell_to_px(row, col, spec, geom)

        for _ in range(n_fix):
            samples.append(
                GazeSample(
                    timestamp_ms=k * period,
                    x_px=fx + JITTER_PX * rng.normal(),
                    y_px=fy + JITTER_PX * rng.normal(),
                    valid=True,
                )
            )
            k += 1
        planted += 1
        fixation_index += 1

        # Inter-fixation gap: a fast sweep, or a blink of invalid samples.
        if fixation_index in blink_slots:
            gap = rng.uniform(*BLINK_GAP_RANGE_MS)
            n_gap = max(1, round(gap / period))
            for _ in range(n_gap):
                if k >= total_samples:
                    break
                samples.append(GazeSample(k * period, 0.0, 0.0, valid=False))
                k += 1
        else:
            gap = rng.uniform(*SACCADE_GAP_RANGE_MS)
            n_gap = max(2, round(gap / period))
            # Target of the sweep is the next fixation; sample a placeholder
            # endpoint so the sweep is fast even before the next draw.
            ex = float(np.clip(fx + rng.uniform(-1, 1) * 6 * min_jump_px, 0, geom.screen_width_px))
            ey = float(np.clip(fy + rng.uniform(-1, 1) * 4 * min_jump_px, 0, geom.screen_height_px))
            for j in range(n_gap):
                if k >= total_samples:
                    break
                frac = (j + 1) / (n_gap + 1)
                samples.append(
                    GazeSample(
                        timestamp_ms=k * period,
                        x_px=fx + frac * (ex - fx),
                        y_px=fy + frac * (ey - fy),
                        valid=True,
                    )
                )
                k += 1
        prev_px = (fx, fy)
        if k >= total_samples:
            break

    return samples, planted


def generate_synthetic(
    spec: SynthSpec, out_dir: str | Path, geom: ScreenGeometry = DEFAULT_SCREEN
) -> Path:
    """Write a complete synthetic dataset; returns the manifest path.

    Layout under ``out_dir``: ``gaze/`` sample files, ``saliency/<video>/``
    rasters, ``labels.csv``, ``planted.csv`` (generator bookkeeping), and
    ``manifest.json``. Byte-identical for identical specs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gaze").mkdir(exist_ok=True)
    sal_dir = out / "saliency" / spec.video_id
    sal_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    raw_maps, norm_maps, n_scenes = _scene_maps(spec, rng)

    frame_count = int(spec.video_duration_s * spec.frame_rate_hz)
    frames_per_scene = max(1, math.ceil(frame_count / n_scenes))
    for frame in range(frame_count):
        scene = min(frame // frames_per_scene, n_scenes - 1)
        save_salr(sal_dir / f"frame_{frame}.salr", SaliencyMap(frame, raw_maps[scene]))

    video = VideoMeta(
        video_id=spec.video_id,
        frame_rate_hz=spec.frame_rate_hz,
        frame_count=frame_count,
        frame_width_px=geom.screen_width_px,
        frame_height_px=geom.screen_height_px,
    )

    subjects: list[tuple[str, float, SubjectLabel]] = []
    for i in range(spec.n_adhd):
        sid = f"adhd{i:04d}"
        subjects.append((sid, 1.0, SubjectLabel(sid, adhd_label=1)))
    for i in range(spec.n_control):
        sid = f"ctrl{i:04d}"
        subjects.append((sid, 0.0, SubjectLabel(sid, adhd_label=0)))
    for i in range(spec.n_pretrain):
        sid = f"pre{i:04d}"
        severity = float(rng.uniform(0.0, 1.0))
        swan = 2.0 * severity - 1.0 + 0.15 * float(rng.normal())
        subjects.append((sid, severity, SubjectLabel(sid, swan_score=swan)))

    label_rows = []
    planted_rows = ["subject_id,video_id,planted_fixations"]
    recordings = []
    for sid, severity, label in subjects:
        samples, planted = _render_subject(
            spec, geom, severity, norm_maps, frames_per_scene, rng
        )
        gaze_file = f"gaze/{sid}_{spec.video_id}.csv"
        save_gaze_file(out / gaze_file, samples)
        label_rows.append((sid, spec.video_id, label))
        planted_rows.append(f"{sid},{spec.video_id},{planted}")
        recordings.append(
            RecordingEntry(
                subject_id=sid,
                video_id=spec.video_id,
                gaze_file=Path(gaze_file),
                sampling_rate_hz=spec.sampling_rate_hz,
            )
        )

    save_label_file(out / "labels.csv", label_rows)
    (out / "planted.csv").write_text("\n".join(planted_rows) + "\n", encoding="utf-8")

    manifest = Manifest(
        root=out,
        videos={
            spec.video_id: VideoEntry(
                meta=video, saliency_dir=Path("saliency") / spec.video_id
            )
        },
        recordings=recordings,
        labels_file=Path("labels.csv"),
    )
    manifest_path = out / "manifest.json"
    save_manifest(manifest_path, manifest)
    return manifest_path
