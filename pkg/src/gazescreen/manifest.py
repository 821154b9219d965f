"""Dataset manifests, run configuration, run logs, and workspace locking.

A manifest (JSON) names every input of a pipeline run: per-video metadata
and saliency directories, per-subject gaze files, and the label file. All
paths are relative to the manifest's directory. Run configuration is a
line-based ``key=value`` file plus command-line overrides; every command
logs its resolved configuration and seed so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .types import SubjectLabel, VideoMeta, load_label_file


@dataclass(frozen=True)
class VideoEntry:
    meta: VideoMeta
    saliency_dir: Path


@dataclass(frozen=True)
class RecordingEntry:
    subject_id: str
    video_id: str
    gaze_file: Path
    sampling_rate_hz: float


@dataclass(frozen=True)
class Manifest:
    root: Path
    videos: dict[str, VideoEntry]
    recordings: list[RecordingEntry]
    labels_file: Path

    def gaze_path(self, rec: RecordingEntry) -> Path:
        return self.root / rec.gaze_file

    def saliency_path(self, video_id: str) -> Path:
        return self.root / self.videos[video_id].saliency_dir

    def labels(self) -> dict[tuple[str, str], SubjectLabel]:
        return load_label_file(self.root / self.labels_file)

    def recordings_for(self, video_id: str) -> list[RecordingEntry]:
        return [r for r in self.recordings if r.video_id == video_id]

    def classification_set(self, video_id: str) -> list[tuple[RecordingEntry, int]]:
        """Recordings with a binary diagnosis label."""
        labels = self.labels()
        out = []
        for rec in self.recordings_for(video_id):
            label = labels.get((rec.subject_id, rec.video_id))
            if label is not None and label.adhd_label is not None:
                out.append((rec, label.adhd_label))
        return out

    def pretraining_set(self, video_id: str) -> list[tuple[RecordingEntry, float]]:
        """Recordings with a severity score and no diagnosis label (disjoint
        from the classification set by construction)."""
        labels = self.labels()
        out = []
        for rec in self.recordings_for(video_id):
            label = labels.get((rec.subject_id, rec.video_id))
            if label is not None and label.adhd_label is None and label.swan_score is not None:
                out.append((rec, label.swan_score))
        return out


def save_manifest(path: str | Path, manifest: Manifest) -> None:
    doc = {
        "videos": {
            vid: {
                "frame_rate_hz": e.meta.frame_rate_hz,
                "frame_count": e.meta.frame_count,
                "frame_width_px": e.meta.frame_width_px,
                "frame_height_px": e.meta.frame_height_px,
                "saliency_dir": str(e.saliency_dir),
            }
            for vid, e in manifest.videos.items()
        },
        "recordings": [
            {
                "subject_id": r.subject_id,
                "video_id": r.video_id,
                "gaze_file": str(r.gaze_file),
                "sampling_rate_hz": r.sampling_rate_hz,
            }
            for r in manifest.recordings
        ],
        "labels_file": str(manifest.labels_file),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate: referenced files must exist, subject ids be unique."""
    path = Path(path)
    root = path.parent
    doc = json.loads(path.read_text(encoding="utf-8"))

    videos = {}
    for vid, entry in doc["videos"].items():
        videos[vid] = VideoEntry(
            meta=VideoMeta(
                video_id=vid,
                frame_rate_hz=float(entry["frame_rate_hz"]),
                frame_count=int(entry["frame_count"]),
                frame_width_px=int(entry["frame_width_px"]),
                frame_height_px=int(entry["frame_height_px"]),
            ),
            saliency_dir=Path(entry["saliency_dir"]),
        )
        if not (root / entry["saliency_dir"]).is_dir():
            raise FileNotFoundError(f"saliency directory missing for {vid}: {entry['saliency_dir']}")

    recordings = []
    seen: set[tuple[str, str]] = set()
    for entry in doc["recordings"]:
        rec = RecordingEntry(
            subject_id=entry["subject_id"],
            video_id=entry["video_id"],
            gaze_file=Path(entry["gaze_file"]),
            sampling_rate_hz=float(entry["sampling_rate_hz"]),
        )
        key = (rec.subject_id, rec.video_id)
        if key in seen:
            raise ValueError(f"duplicate recording for subject {key}")
        seen.add(key)
        if rec.video_id not in videos:
            raise ValueError(f"recording references unknown video {rec.video_id!r}")
        if not (root / rec.gaze_file).is_file():
            raise FileNotFoundError(f"gaze file missing: {rec.gaze_file}")
        recordings.append(rec)

    labels_file = Path(doc["labels_file"])
    if not (root / labels_file).is_file():
        raise FileNotFoundError(f"label file missing: {labels_file}")
    manifest = Manifest(root=root, videos=videos, recordings=recordings, labels_file=labels_file)

    for key, label in manifest.labels().items():
        if label.adhd_label is not None and label.swan_score is not None:
            raise ValueError(
                f"subject {key[0]} carries both a diagnosis label and a severity "
                f"score; classification and pretraining sets must be disjoint"
            )
    return manifest


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict[str, str]:
    """Line-based ``key=value`` file; later CLI overrides win."""
    cfg: dict[str, str] = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, _, value = item.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def config_hash(cfg: dict[str, str]) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def write_runlog(out_dir: str | Path, command: str, cfg: dict[str, str], seed: int) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}", f"seed={seed}", f"config_hash={config_hash(cfg)}"]
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    path = out_dir / f"{command}.runlog"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class WorkspaceLock:
    """Marker-file lock: one command at a time per workspace."""

    def __init__(self, workspace: str | Path):
        self.path = Path(workspace) / ".gazescreen.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"workspace is locked by another command ({self.path}); "
                f"remove the marker file if that command crashed"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False
