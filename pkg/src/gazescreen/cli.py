"""Command-line pipeline driver.

Every command takes ``--seed``, ``--config`` (key=value file), ``--set``
overrides, and ``--out``; dataset-facing commands take ``--manifest``. Each
run acquires the workspace lock on its output directory, validates its
inputs, writes its declared outputs plus a run log carrying the resolved
configuration hash and seed, and exits 0 on success or 1 with a one-line
``error:<category>: message`` on failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .manifest import WorkspaceLock, load_config, load_manifest, write_runlog
from .pipeline import ALL_MODELS, MissingStageError, PipelineConfig
from .synth import SynthSpec, generate_synthetic


def _add_common(p: argparse.ArgumentParser, manifest: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed for this run")
    p.add_argument("--config", type=Path, default=None, help="key=value configuration file")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    p.add_argument("--out", type=Path, required=True, help="output directory")
    if manifest:
        p.add_argument("--manifest", type=Path, required=True, help="dataset manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazescreen",
        description="Gaze-based ADHD screening pipeline (desk-scale).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p, manifest=False)

    p = sub.add_parser("detect", help="detect fixations in all recordings")
    _add_common(p)

    p = sub.add_parser("saliency-extract", help="extract per-fixation saliency values")
    _add_common(p)
    p.add_argument("--fixations", type=Path, required=True)

    p = sub.add_parser("features", help="assemble raw feature caches")
    _add_common(p)
    p.add_argument("--fixations", type=Path, required=True)

    p = sub.add_parser("pretrain", help="train the severity regression model")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--arch", type=Path, default=None, help="architecture file (hypersearch output)")

    p = sub.add_parser("train-scratch", help="train the classifier from scratch")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--arch", type=Path, default=None)

    p = sub.add_parser("finetune", help="fine-tune the classifier from a pretrained checkpoint")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--pretrained", type=Path, default=None, help="pretrain output directory")

    p = sub.add_parser("evaluate", help="cross-validated AUC for one or more models")
    _add_common(p)
    p.add_argument(
        "--models", default="cnn_scratch",
        help=f"comma-separated subset of {','.join(ALL_MODELS)}",
    )
    p.add_argument("--features", type=Path, default=None)
    p.add_argument("--fixations", type=Path, default=None)
    p.add_argument("--saliency-values", type=Path, default=None)
    p.add_argument("--pretrained", type=Path, default=None)
    p.add_argument("--arch", type=Path, default=None)
    p.add_argument("--ablate", choices=sorted(pipeline.ABLATION_CHANNELS), default=None)

    p = sub.add_parser("attribute", help="DeepLIFT attributions for all instances")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--model-dir", type=Path, required=True)
    p.add_argument("--model", default="cnn_pretrain", choices=pipeline.CNN_MODELS)

    p = sub.add_parser("baseline-lev", help="evaluate the Levenshtein baseline")
    _add_common(p)
    p.add_argument("--fixations", type=Path, required=True)

    p = sub.add_parser("baseline-svm", help="evaluate the engineered-feature SVM baseline")
    _add_common(p)
    p.add_argument("--fixations", type=Path, required=True)
    p.add_argument("--saliency-values", type=Path, required=True)

    p = sub.add_parser("hypersearch", help="random architecture search on the pretraining set")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--trials", type=int, default=8)

    p = sub.add_parser("report", help="merge evaluation outputs into summary tables")
    _add_common(p, manifest=False)
    p.add_argument(
        "--eval-dir", type=Path, action="append", required=True,
        help="directory holding evaluate outputs (repeatable)",
    )

    return parser


def _synth_spec(cfg: dict[str, str], seed: int) -> SynthSpec:
    def get(key, caster, default):
        return caster(cfg[key]) if key in cfg else default

    return SynthSpec(
        n_adhd=get("n_adhd", int, 20),
        n_control=get("n_control", int, 20),
        n_pretrain=get("n_pretrain", int, 0),
        effect_duration_sd=get("effect_duration_sd", float, 0.0),
        effect_saliency_sd=get("effect_saliency_sd", float, 0.0),
        video_duration_s=get("video_duration_s", float, 30.0),
        sampling_rate_hz=get("sampling_rate_hz", float, 60.0),
        frame_rate_hz=get("frame_rate_hz", float, 10.0),
        raster_width=get("raster_width", int, 64),
        raster_height=get("raster_height", int, 36),
        video_id=get("video_id", str, "synthvid"),
        seed=seed,
    )


def _dispatch(args: argparse.Namespace, cfg: dict[str, str], pcfg: PipelineConfig) -> None:
    command = args.command
    if command == "synth":
        generate_synthetic(_synth_spec(cfg, args.seed), args.out, geom=pcfg.screen)
        return

    if command == "report":
        pipeline.run_report(args.eval_dir, args.out)
        return

    manifest = load_manifest(args.manifest)
    if command == "detect":
        pipeline.run_detect(manifest, args.out, pcfg)
    elif command == "saliency-extract":
        pipeline.run_saliency_extract(manifest, args.fixations, args.out, pcfg)
    elif command == "features":
        pipeline.run_features(manifest, args.fixations, args.out, pcfg)
    elif command == "pretrain":
        pipeline.run_pretrain(manifest, args.features, args.out, pcfg, args.seed, args.arch)
    elif command == "train-scratch":
        pipeline.run_train_scratch(manifest, args.features, args.out, pcfg, args.seed, args.arch)
    elif command == "finetune":
        pipeline.run_finetune(manifest, args.features, args.out, pcfg, args.seed, args.pretrained)
    elif command == "evaluate":
        pipeline.run_evaluate(
            manifest, args.out, pcfg, args.seed,
            models=tuple(m.strip() for m in args.models.split(",") if m.strip()),
            features_dir=args.features,
            fixations_dir=args.fixations,
            saliency_values_dir=args.saliency_values,
            pretrained_dir=args.pretrained,
            arch_path=args.arch,
            ablate=args.ablate,
        )
    elif command == "attribute":
        pipeline.run_attribute(
            manifest, args.features, args.model_dir, args.out, pcfg, model_id=args.model
        )
    elif command == "baseline-lev":
        pipeline.run_evaluate(
            manifest, args.out, pcfg, args.seed,
            models=("levenshtein",), fixations_dir=args.fixations,
        )
    elif command == "baseline-svm":
        pipeline.run_evaluate(
            manifest, args.out, pcfg, args.seed,
            models=("svm",), fixations_dir=args.fixations,
            saliency_values_dir=args.saliency_values,
        )
    elif command == "hypersearch":
        pipeline.run_hypersearch(
            manifest, args.features, args.out, pcfg, args.seed, trials=args.trials
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown command {command!r}")


def _error_category(exc: BaseException) -> str:
    if isinstance(exc, MissingStageError):
        return "missing-stage"
    if isinstance(exc, FileNotFoundError):
        return "missing-file"
    if isinstance(exc, RuntimeError) and "locked" in str(exc):
        return "locked"
    if isinstance(exc, (ValueError, KeyError)):
        return "invalid-input"
    return "internal"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        pcfg = PipelineConfig.from_mapping(cfg)
        with WorkspaceLock(args.out):
            _dispatch(args, cfg, pcfg)
            write_runlog(args.out, args.command, cfg, args.seed)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(f"error:{_error_category(exc)}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
