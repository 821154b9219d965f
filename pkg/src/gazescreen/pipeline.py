"""Pipeline stages shared by the CLI and the experiment scripts.

Every stage reads its inputs from files written by earlier stages (see the
module docstrings for the formats) and writes its outputs plus nothing
else, so stages are idempotent given identical inputs and seeds. All
randomness is derived from one master seed per run.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import network
from .baselines import (
    FEATURE_NAMES,
    RoiGrid,
    encode_scanpath,
    extract_engineered_features,
    levenshtein_classify,
    svm_rfe_train,
)
from .attribution import (
    aggregate_channel_relevance,
    deeplift_attribute,
    normalize_instance,
    save_attribution,
    save_summaries,
)
from .evaluation import (
    CvPlan,
    EvalResult,
    auc,
    make_cv_plan,
    roc_points,
    save_fold_dump,
    save_results,
    save_roc_file,
    summarize,
    test_vs_chance,
)
from .features import (
    ChannelStats,
    FeatureSequence,
    fit_stats,
    load_feat,
    load_stats,
    normalize_and_fit_length,
    require_fit_split,
    save_feat,
    save_stats,
)
from .geometry import DEFAULT_SCREEN, ScreenGeometry
from .idt import IdtConfig, detect_fixations
from .manifest import Manifest
from .saliency import ExtractionMaskSpec, SaliencyStore, build_extraction_mask, extract_saliency
from .training import TrainConfig, train
from .types import (
    QualityError,
    Scanpath,
    align_scanpath,
    load_fixation_file,
    load_gaze_file,
    save_fixation_file,
)

CNN_MODELS = ("cnn_scratch", "cnn_pretrain")
ALL_MODELS = CNN_MODELS + ("levenshtein", "svm")

#: Channel indices zeroed by each ablation variant; location covers both
#: positional channels.
ABLATION_CHANNELS = {
    "saliency": (0,),
    "location": (1, 2),
    "duration": (3,),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved run configuration; every field has a key=value counterpart."""

    screen: ScreenGeometry = DEFAULT_SCREEN
    dispersion_deg: float = 1.0
    min_duration_ms: float = 100.0
    mask_sigma_deg: float = 1.5
    model_length: int = 256
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    cv_resamplings: int = 10
    cv_folds: int = 10
    permutations: int = 1000
    roi_rows: int = 4
    roi_cols: int = 4

    @classmethod
    def from_mapping(cls, cfg: dict[str, str]) -> "PipelineConfig":
        base = cls()
        screen = ScreenGeometry(
            screen_width_px=int(cfg.get("screen_width_px", base.screen.screen_width_px)),
            screen_height_px=int(cfg.get("screen_height_px", base.screen.screen_height_px)),
            screen_width_cm=float(cfg.get("screen_width_cm", base.screen.screen_width_cm)),
            screen_height_cm=float(cfg.get("screen_height_cm", base.screen.screen_height_cm)),
            viewing_distance_cm=float(
                cfg.get("viewing_distance_cm", base.screen.viewing_distance_cm)
            ),
        )
        def pick(key, caster):
            return caster(cfg[key]) if key in cfg else getattr(base, key)

        return cls(
            screen=screen,
            dispersion_deg=pick("dispersion_deg", float),
            min_duration_ms=pick("min_duration_ms", float),
            mask_sigma_deg=pick("mask_sigma_deg", float),
            model_length=pick("model_length", int),
            learning_rate=pick("learning_rate", float),
            batch_size=pick("batch_size", int),
            epochs=pick("epochs", int),
            patience=pick("patience", int),
            cv_resamplings=pick("cv_resamplings", int),
            cv_folds=pick("cv_folds", int),
            permutations=pick("permutations", int),
            roi_rows=pick("roi_rows", int),
            roi_cols=pick("roi_cols", int),
        )

    def idt_config(self) -> IdtConfig:
        return IdtConfig(self.dispersion_deg, self.min_duration_ms)

    def mask_spec(self) -> ExtractionMaskSpec:
        return ExtractionMaskSpec(self.mask_sigma_deg)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            patience=self.patience,
            seed=seed,
        )


def derive_seed(master: int, *tags) -> int:
    """Stable per-task seed from the master seed and a tag path."""
    canon = "|".join([str(master), *(str(t) for t in tags)])
    digest = hashlib.sha256(canon.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


class MissingStageError(RuntimeError):
    """An upstream pipeline stage has not produced its artifacts yet."""


def _rec_key(subject_id: str, video_id: str) -> str:
    return f"{subject_id}_{video_id}"


# ---------------------------------------------------------------------------
# Stage: detect
# ---------------------------------------------------------------------------


def run_detect(manifest: Manifest, out_dir: str | Path, pcfg: PipelineConfig) -> dict:
    """Fixation files for every recording passing the quality filter.

    Returns a summary dict with detected counts and skipped recordings
    (tracker loss above threshold, or no usable fixations).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    idt_cfg = pcfg.idt_config()
    detected: dict[str, int] = {}
    skipped: list[tuple[str, str, str]] = []
    for rec in manifest.recordings:
        try:
            recording = load_gaze_file(
                manifest.gaze_path(rec), rec.subject_id, rec.video_id, rec.sampling_rate_hz
            )
        except QualityError as exc:
            skipped.append((rec.subject_id, rec.video_id, str(exc)))
            continue
        sp = detect_fixations(recording, pcfg.screen, idt_cfg)
        if not sp.usable:
            skipped.append((rec.subject_id, rec.video_id, "no fixations detected"))
            continue
        sp = align_scanpath(sp, manifest.videos[rec.video_id].meta)
        save_fixation_file(out / f"{_rec_key(rec.subject_id, rec.video_id)}.csv", sp)
        detected[_rec_key(rec.subject_id, rec.video_id)] = len(sp)
    lines = ["subject_id,video_id,reason"] + [",".join(s) for s in skipped]
    (out / "skipped.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"detected": detected, "skipped": skipped}


def _load_scanpath(
    fixations_dir: str | Path, subject_id: str, video_id: str
) -> Scanpath:
    path = Path(fixations_dir) / f"{_rec_key(subject_id, video_id)}.csv"
    if not path.is_file():
        raise MissingStageError(
            f"no fixation file for {subject_id}/{video_id}; run the detect stage first"
        )
    return load_fixation_file(path, subject_id, video_id)


# ---------------------------------------------------------------------------
# Stage: saliency-extract
# ---------------------------------------------------------------------------


def run_saliency_extract(
    manifest: Manifest,
    fixations_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
) -> None:
    """Per-fixation saliency values as ``fixation_index,saliency`` files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mask_spec = pcfg.mask_spec()
    for video_id in sorted(manifest.videos):
        store = SaliencyStore(manifest.saliency_path(video_id))
        for rec in manifest.recordings_for(video_id):
            key = _rec_key(rec.subject_id, rec.video_id)
            if not (Path(fixations_dir) / f"{key}.csv").is_file():
                continue  # recording was skipped upstream
            sp = _load_scanpath(fixations_dir, rec.subject_id, rec.video_id)
            lines = ["fixation_index,saliency"]
            for i, fix in enumerate(sp.fixations):
                raster = store.get(fix.center_frame_index)
                mask = build_extraction_mask(
                    fix, (raster.height, raster.width), pcfg.screen, mask_spec
                )
                lines.append(f"{i},{extract_saliency(fix, raster, mask):.12g}")
            (out / f"{key}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_saliency_values(
    saliency_values_dir: str | Path, subject_id: str, video_id: str
) -> np.ndarray:
    path = Path(saliency_values_dir) / f"{_rec_key(subject_id, video_id)}.csv"
    if not path.is_file():
        raise MissingStageError(
            f"no saliency values for {subject_id}/{video_id}; "
            f"run the saliency-extract stage first"
        )
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    return np.array([float(line.split(",")[1]) for line in lines if line.strip()])


# ---------------------------------------------------------------------------
# Stage: features
# ---------------------------------------------------------------------------


def run_features(
    manifest: Manifest,
    fixations_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
) -> None:
    """Raw (unnormalized, variable-length) feature caches per recording.

    Normalization happens later with training-fold statistics, so the cache
    stores the raw 4 x M channels with true_length = M.
    """
    from .features import assemble

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mask_spec = pcfg.mask_spec()
    for video_id in sorted(manifest.videos):
        store = SaliencyStore(manifest.saliency_path(video_id))
        for rec in manifest.recordings_for(video_id):
            key = _rec_key(rec.subject_id, rec.video_id)
            if not (Path(fixations_dir) / f"{key}.csv").is_file():
                continue
            sp = _load_scanpath(fixations_dir, rec.subject_id, rec.video_id)
            seq = assemble(sp, store, pcfg.screen, mask_spec)
            save_feat(out / f"{key}.feat", rec.subject_id, rec.video_id, seq.channels, seq.length)


def load_feature_sequences(
    features_dir: str | Path, video_id: str
) -> dict[str, FeatureSequence]:
    """All cached raw sequences of one video, keyed by subject."""
    features_dir = Path(features_dir)
    if not features_dir.is_dir():
        raise MissingStageError(
            f"feature directory {features_dir} does not exist; run the features stage first"
        )
    out: dict[str, FeatureSequence] = {}
    for path in sorted(features_dir.glob("*.feat")):
        subject, video, array, _true_length = load_feat(path)
        if video == video_id:
            out[subject] = FeatureSequence(subject, video, array)
    return out


def _require_features(
    seqs: dict[str, FeatureSequence], subjects: list[str], video_id: str
) -> None:
    missing = [s for s in subjects if s not in seqs]
    if missing:
        raise MissingStageError(
            f"missing feature caches for {len(missing)} subject(s) of {video_id} "
            f"(e.g. {missing[0]}); run the features stage first"
        )


# ---------------------------------------------------------------------------
# CNN training helpers
# ---------------------------------------------------------------------------


def _normalize_set(
    seqs: dict[str, FeatureSequence],
    subjects: list[str],
    stats: ChannelStats,
    split_id: str,
    length: int,
    ablate_channels: tuple[int, ...] = (),
) -> np.ndarray:
    require_fit_split(stats, split_id)
    x = np.stack(
        [normalize_and_fit_length(seqs[s], stats, length)[0] for s in subjects]
    )
    for ch in ablate_channels:
        x[:, ch, :] = 0.0
    return x


def _resolve_arch(
    arch_path: str | Path | None, head: str, pcfg: PipelineConfig
) -> network.ModelSpec:
    if arch_path is None:
        return network.default_model_spec(head=head, input_length=pcfg.model_length)
    spec = network.load_spec_text(arch_path)
    if spec.input_length != pcfg.model_length:
        raise ValueError(
            f"architecture file expects input length {spec.input_length}, "
            f"configuration says {pcfg.model_length}"
        )
    return replace(spec, head=head)


def run_pretrain(
    manifest: Manifest,
    features_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
    seed: int,
    arch_path: str | Path | None = None,
) -> dict[str, Path]:
    """Train the severity-score regression model per video; save checkpoints.

    Regression targets are standardized over the pretraining set. Channel
    statistics are fitted on the pretraining set only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoints = {}
    for video_id in sorted(manifest.videos):
        pretrain_set = manifest.pretraining_set(video_id)
        if not pretrain_set:
            continue
        seqs = load_feature_sequences(features_dir, video_id)
        subjects = sorted(r.subject_id for r, _ in pretrain_set)
        _require_features(seqs, subjects, video_id)
        swan = {r.subject_id: score for r, score in pretrain_set}

        split_id = f"{video_id}:pretrain"
        stats = fit_stats([seqs[s] for s in subjects], split_id)
        x = _normalize_set(seqs, subjects, stats, split_id, pcfg.model_length)
        y = np.array([swan[s] for s in subjects])
        y = (y - y.mean()) / max(y.std(), 1e-8)

        spec = _resolve_arch(arch_path, "linear", pcfg)
        params, _history = train(
            spec, x, y, pcfg.train_config(derive_seed(seed, "pretrain", video_id)),
            objective="mse",
        )
        path = out / f"pretrained_{video_id}.ckpt"
        network.save_checkpoint(path, spec, params)
        save_stats(out / f"pretrained_{video_id}.stats", stats)
        checkpoints[video_id] = path
    if not checkpoints:
        raise ValueError("manifest has no pretraining subjects (severity scores)")
    return checkpoints


def _load_pretrained(
    pretrained_dir: str | Path | None, video_id: str
) -> tuple[network.ModelSpec, network.ModelParams]:
    if pretrained_dir is None:
        raise MissingStageError(
            "fine-tuning needs a pretrained checkpoint; run the pretrain stage "
            "and pass its output directory"
        )
    path = Path(pretrained_dir) / f"pretrained_{video_id}.ckpt"
    if not path.is_file():
        raise MissingStageError(
            f"no pretrained checkpoint for {video_id} at {path}; "
            f"run the pretrain stage first"
        )
    return network.load_checkpoint(path)


def _train_final_classifier(
    manifest: Manifest,
    features_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
    seed: int,
    model_id: str,
    arch_path: str | Path | None = None,
    pretrained_dir: str | Path | None = None,
) -> dict[str, Path]:
    """Shared body of train-scratch and finetune: one model per video on the
    full classification set, for downstream attribution."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoints = {}
    for video_id in sorted(manifest.videos):
        cls_set = manifest.classification_set(video_id)
        if not cls_set:
            continue
        seqs = load_feature_sequences(features_dir, video_id)
        subjects = sorted(r.subject_id for r, _ in cls_set)
        _require_features(seqs, subjects, video_id)
        labels = {r.subject_id: lab for r, lab in cls_set}

        split_id = f"{video_id}:final"
        stats = fit_stats([seqs[s] for s in subjects], split_id)
        x = _normalize_set(seqs, subjects, stats, split_id, pcfg.model_length)
        y = np.array([labels[s] for s in subjects], dtype=float)

        if model_id == "cnn_pretrain":
            base_spec, base_params = _load_pretrained(pretrained_dir, video_id)
            spec, warm, _report = network.transfer_head(base_params, base_spec, head="sigmoid")
        else:
            spec = _resolve_arch(arch_path, "sigmoid", pcfg)
            warm = None
        params, _history = train(
            spec, x, y,
            pcfg.train_config(derive_seed(seed, model_id, video_id, "final")),
            objective="bce", params=warm,
        )
        path = out / f"{model_id}_{video_id}.ckpt"
        network.save_checkpoint(path, spec, params)
        save_stats(out / f"{model_id}_{video_id}.stats", stats)
        checkpoints[video_id] = path
    if not checkpoints:
        raise ValueError("manifest has no classification subjects (diagnosis labels)")
    return checkpoints


def run_train_scratch(manifest, features_dir, out_dir, pcfg, seed, arch_path=None):
    return _train_final_classifier(
        manifest, features_dir, out_dir, pcfg, seed, "cnn_scratch", arch_path=arch_path
    )


def run_finetune(manifest, features_dir, out_dir, pcfg, seed, pretrained_dir):
    return _train_final_classifier(
        manifest, features_dir, out_dir, pcfg, seed, "cnn_pretrain",
        pretrained_dir=pretrained_dir,
    )


# ---------------------------------------------------------------------------
# Stage: evaluate
# ---------------------------------------------------------------------------


def _eval_cnn(
    video_id: str,
    seqs: dict[str, FeatureSequence],
    labels: dict[str, int],
    plan: CvPlan,
    pcfg: PipelineConfig,
    seed: int,
    model_id: str,
    spec: network.ModelSpec,
    warm: network.ModelParams | None,
    ablate_channels: tuple[int, ...],
) -> tuple[list[float], list[tuple[np.ndarray, np.ndarray]]]:
    fold_aucs = []
    fold_scores = []
    for r in range(plan.resamplings):
        for f in range(plan.folds):
            train_subjects = plan.train_subjects(r, f)
            test_subjects = plan.test_subjects(r, f)
            split_id = f"{video_id}:r{r}f{f}"
            stats = fit_stats([seqs[s] for s in train_subjects], split_id)
            x_train = _normalize_set(
                seqs, train_subjects, stats, split_id, spec.input_length, ablate_channels
            )
            x_test = _normalize_set(
                seqs, test_subjects, stats, split_id, spec.input_length, ablate_channels
            )
            y_train = np.array([labels[s] for s in train_subjects], dtype=float)
            y_test = np.array([labels[s] for s in test_subjects], dtype=int)

            fold_seed = derive_seed(seed, model_id, video_id, r, f)
            params, _ = train(
                spec, x_train, y_train, pcfg.train_config(fold_seed),
                objective="bce", params=warm,
            )
            scores = network.predict(spec, params, x_test)
            fold_aucs.append(auc(scores, y_test))
            fold_scores.append((scores, y_test))
    return fold_aucs, fold_scores


def _eval_levenshtein(
    video_id, strings, labels, plan
) -> tuple[list[float], list[tuple[np.ndarray, np.ndarray]]]:
    fold_aucs = []
    fold_scores = []
    for r in range(plan.resamplings):
        for f in range(plan.folds):
            train_subjects = plan.train_subjects(r, f)
            test_subjects = plan.test_subjects(r, f)
            adhd = [strings[s] for s in train_subjects if labels[s] == 1]
            control = [strings[s] for s in train_subjects if labels[s] == 0]
            scores = np.array(
                [levenshtein_classify(strings[s], adhd, control) for s in test_subjects]
            )
            y_test = np.array([labels[s] for s in test_subjects], dtype=int)
            fold_aucs.append(auc(scores, y_test))
            fold_scores.append((scores, y_test))
    return fold_aucs, fold_scores


def _eval_svm(
    video_id, vectors, labels, plan, seed
) -> tuple[list[float], list[tuple[np.ndarray, np.ndarray]]]:
    fold_aucs = []
    fold_scores = []
    for r in range(plan.resamplings):
        for f in range(plan.folds):
            train_subjects = plan.train_subjects(r, f)
            test_subjects = plan.test_subjects(r, f)
            x_train = np.stack([vectors[s] for s in train_subjects])
            y_train = np.array([labels[s] for s in train_subjects])
            model = svm_rfe_train(
                x_train, y_train, seed=derive_seed(seed, "svm", video_id, r, f)
            )
            scores = model.decision_scores(np.stack([vectors[s] for s in test_subjects]))
            y_test = np.array([labels[s] for s in test_subjects], dtype=int)
            fold_aucs.append(auc(scores, y_test))
            fold_scores.append((scores, y_test))
    return fold_aucs, fold_scores


def run_evaluate(
    manifest: Manifest,
    out_dir: str | Path,
    pcfg: PipelineConfig,
    seed: int,
    models: tuple[str, ...],
    features_dir: str | Path | None = None,
    fixations_dir: str | Path | None = None,
    saliency_values_dir: str | Path | None = None,
    pretrained_dir: str | Path | None = None,
    arch_path: str | Path | None = None,
    ablate: str | None = None,
) -> list[EvalResult]:
    """Cross-validated AUC for the requested models on every eligible video.

    All models of one video consume the identical fold plan; its hash is
    recorded in every result row. ``ablate`` zero-masks one input channel
    group of the CNN models ("saliency", "duration", or "location") and
    retrains from the masked features.
    """
    for model in models:
        if model not in ALL_MODELS:
            raise ValueError(f"unknown model {model!r}; choose from {ALL_MODELS}")
    if ablate is not None and ablate not in ABLATION_CHANNELS:
        raise ValueError(f"unknown ablation {ablate!r}; choose from {sorted(ABLATION_CHANNELS)}")
    ablate_channels = ABLATION_CHANNELS[ablate] if ablate else ()
    variant = f"wo_{ablate}" if ablate else "complete"

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: list[EvalResult] = []
    for video_id in sorted(manifest.videos):
        cls_set = manifest.classification_set(video_id)
        if not cls_set:
            continue
        labels = {r.subject_id: lab for r, lab in cls_set}
        subjects = sorted(labels)
        plan = make_cv_plan(
            subjects, labels, derive_seed(seed, "cvplan", video_id),
            resamplings=pcfg.cv_resamplings, folds=pcfg.cv_folds,
        )

        seqs = None
        if any(m in CNN_MODELS for m in models):
            if features_dir is None:
                raise MissingStageError("CNN models need --features; run the features stage")
            seqs = load_feature_sequences(features_dir, video_id)
            _require_features(seqs, subjects, video_id)

        for model_id in models:
            if model_id == "cnn_scratch":
                spec = _resolve_arch(arch_path, "sigmoid", pcfg)
                fold_aucs, fold_scores = _eval_cnn(
                    video_id, seqs, labels, plan, pcfg, seed, model_id,
                    spec, None, ablate_channels,
                )
            elif model_id == "cnn_pretrain":
                base_spec, base_params = _load_pretrained(pretrained_dir, video_id)
                spec, warm, _report = network.transfer_head(
                    base_params, base_spec, head="sigmoid"
                )
                fold_aucs, fold_scores = _eval_cnn(
                    video_id, seqs, labels, plan, pcfg, seed, model_id,
                    spec, warm, ablate_channels,
                )
            elif model_id == "levenshtein":
                if fixations_dir is None:
                    raise MissingStageError(
                        "the Levenshtein baseline needs --fixations; run the detect stage"
                    )
                grid = RoiGrid(pcfg.roi_rows, pcfg.roi_cols)
                strings = {
                    s: encode_scanpath(_load_scanpath(fixations_dir, s, video_id), grid, pcfg.screen)
                    for s in subjects
                }
                fold_aucs, fold_scores = _eval_levenshtein(video_id, strings, labels, plan)
            else:  # svm
                if fixations_dir is None or saliency_values_dir is None:
                    raise MissingStageError(
                        "the SVM baseline needs --fixations and --saliency-values; "
                        "run the detect and saliency-extract stages"
                    )
                rates = {
                    r.subject_id: r.sampling_rate_hz
                    for r in manifest.recordings_for(video_id)
                }
                vectors = {}
                for s in subjects:
                    sp = _load_scanpath(fixations_dir, s, video_id)
                    sal = _load_saliency_values(saliency_values_dir, s, video_id)
                    vec = extract_engineered_features(sp, sal, 1000.0 / rates[s])
                    vectors[s] = vec.values
                fold_aucs, fold_scores = _eval_svm(video_id, vectors, labels, plan, seed)

            mean_auc, se = summarize(fold_aucs)
            p = test_vs_chance(
                fold_scores, n_permutations=pcfg.permutations,
                seed=derive_seed(seed, "perm", video_id, model_id),
            )
            results.append(
                EvalResult(
                    model_id=model_id,
                    video_id=video_id,
                    fold_aucs=tuple(fold_aucs),
                    mean_auc=mean_auc,
                    se=se,
                    p_vs_chance=p,
                    plan_hash=plan.plan_hash(),
                    variant=variant,
                )
            )
            pooled_scores = np.concatenate([s for s, _ in fold_scores])
            pooled_labels = np.concatenate([y for _, y in fold_scores])
            save_roc_file(
                out / f"roc_{video_id}_{model_id}_{variant}.csv",
                roc_points(pooled_scores, pooled_labels),
            )

    save_results(out / "eval_results.csv", results)
    save_fold_dump(out / "eval_folds.csv", results)
    return results


# ---------------------------------------------------------------------------
# Stage: attribute
# ---------------------------------------------------------------------------


def run_attribute(
    manifest: Manifest,
    features_dir: str | Path,
    model_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
    model_id: str = "cnn_pretrain",
) -> None:
    """DeepLIFT attributions for every classification instance.

    Uses the final classifier checkpoints written by train-scratch or
    finetune together with their channel statistics, so inputs are
    normalized exactly as during training. Writes per-instance dumps and
    the per-channel box-plot summary file.
    """
    out = Path(out_dir)
    (out / "attributions").mkdir(parents=True, exist_ok=True)
    normalized_maps = []
    for video_id in sorted(manifest.videos):
        cls_set = manifest.classification_set(video_id)
        if not cls_set:
            continue
        ckpt = Path(model_dir) / f"{model_id}_{video_id}.ckpt"
        stats_path = Path(model_dir) / f"{model_id}_{video_id}.stats"
        if not ckpt.is_file() or not stats_path.is_file():
            raise MissingStageError(
                f"no trained {model_id} model for {video_id} under {model_dir}; "
                f"run the train-scratch or finetune stage first"
            )
        spec, params = network.load_checkpoint(ckpt)
        if spec.head != "sigmoid":
            raise ValueError(f"{ckpt}: attribution needs a classification head")
        stats = load_stats(stats_path)
        seqs = load_feature_sequences(features_dir, video_id)
        subjects = sorted(r.subject_id for r, _ in cls_set)
        _require_features(seqs, subjects, video_id)

        for s in subjects:
            x, true_length = normalize_and_fit_length(seqs[s], stats, spec.input_length)
            amap = deeplift_attribute(
                spec, params, x, subject_id=s, video_id=video_id, true_length=true_length
            )
            save_attribution(out / "attributions" / f"{s}_{video_id}.attr", amap)
            normalized_maps.append(normalize_instance(amap))

    if not normalized_maps:
        raise ValueError("manifest has no classification subjects to attribute")
    save_summaries(out / "attribution_summary.csv", aggregate_channel_relevance(normalized_maps))


# ---------------------------------------------------------------------------
# Stage: hypersearch
# ---------------------------------------------------------------------------


def run_hypersearch(
    manifest: Manifest,
    features_dir: str | Path,
    out_dir: str | Path,
    pcfg: PipelineConfig,
    seed: int,
    trials: int = 8,
    folds: int = 5,
) -> network.ModelSpec:
    """Random search over the constrained grid, scored by severity-regression
    validation loss with k-fold splits of the pretraining set."""
    from .hyperparams import HyperSearchSpace, sample_hyperconfig

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(derive_seed(seed, "hypersearch"))
    space = HyperSearchSpace()

    # Pool pretraining subjects across videos; tuning is global.
    pools = []
    for video_id in sorted(manifest.videos):
        pretrain_set = manifest.pretraining_set(video_id)
        if not pretrain_set:
            continue
        seqs = load_feature_sequences(features_dir, video_id)
        subjects = sorted(r.subject_id for r, _ in pretrain_set)
        _require_features(seqs, subjects, video_id)
        swan = {r.subject_id: score for r, score in pretrain_set}
        pools.append((video_id, seqs, subjects, swan))
    if not pools:
        raise ValueError("manifest has no pretraining subjects for hyperparameter tuning")

    trial_rows = ["trial,val_mse,spec"]
    best_spec = None
    best_loss = np.inf
    for trial in range(trials):
        spec = sample_hyperconfig(
            space, rng, head="linear", input_length=pcfg.model_length
        )
        losses = []
        for video_id, seqs, subjects, swan in pools:
            order = list(subjects)
            fold_rng = np.random.default_rng(derive_seed(seed, "hsfold", video_id))
            fold_rng.shuffle(order)
            assignment = {s: i % folds for i, s in enumerate(order)}
            for f in range(folds):
                tr = [s for s in order if assignment[s] != f]
                te = [s for s in order if assignment[s] == f]
                split_id = f"{video_id}:hs{f}"
                stats = fit_stats([seqs[s] for s in tr], split_id)
                x_tr = _normalize_set(seqs, tr, stats, split_id, spec.input_length)
                x_te = _normalize_set(seqs, te, stats, split_id, spec.input_length)
                y_tr = np.array([swan[s] for s in tr])
                mu, sd = y_tr.mean(), max(y_tr.std(), 1e-8)
                y_tr = (y_tr - mu) / sd
                y_te = (np.array([swan[s] for s in te]) - mu) / sd
                params, _ = train(
                    spec, x_tr, y_tr,
                    pcfg.train_config(derive_seed(seed, "hstrain", video_id, trial, f)),
                    objective="mse",
                )
                pred = network.predict(spec, params, x_te)
                losses.append(float(np.mean((pred - y_te) ** 2)))
        val_loss = float(np.mean(losses))
        trial_rows.append(f"{trial},{val_loss:.12g},{';'.join(network.spec_to_lines(spec))}")
        if val_loss < best_loss:
            best_loss = val_loss
            best_spec = spec

    (out / "hypersearch_trials.csv").write_text("\n".join(trial_rows) + "\n", encoding="utf-8")
    network.save_spec_text(out / "best_spec.txt", best_spec)
    return best_spec


# ---------------------------------------------------------------------------
# Stage: report
# ---------------------------------------------------------------------------


def run_report(eval_dirs: list[str | Path], out_dir: str | Path) -> Path:
    """Merge evaluation outputs into headline and ablation summary tables."""
    from .evaluation import REPORT_HEADER, load_results

    rows: list[dict[str, str]] = []
    for d in eval_dirs:
        found = sorted(Path(d).rglob("eval_results.csv"))
        if not found:
            raise MissingStageError(
                f"no eval_results.csv under {d}; run the evaluate stage first"
            )
        for path in found:
            rows.extend(load_results(path))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows.sort(key=lambda r: (r["video"], r["model"], r["variant"]))
    keys = REPORT_HEADER.split(",")
    lines = [REPORT_HEADER] + [",".join(r[k] for k in keys) for r in rows]
    report_path = out / "report.csv"
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # Ablation table: every model that has both complete and masked variants.
    by_model = {}
    for r in rows:
        by_model.setdefault((r["video"], r["model"]), set()).add(r["variant"])
    ablated = {key for key, variants in by_model.items() if len(variants) > 1}
    ab_lines = [REPORT_HEADER] + [
        ",".join(r[k] for k in keys)
        for r in rows
        if (r["video"], r["model"]) in ablated
    ]
    (out / "report_ablation.csv").write_text("\n".join(ab_lines) + "\n", encoding="utf-8")
    return report_path
