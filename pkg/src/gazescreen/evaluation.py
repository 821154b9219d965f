"""Subject-split cross-validation, AUC, and permutation significance tests.

Fold assignment is stratified by label so every fold holds both classes, and
one :class:`CvPlan` is shared by all compared models; its hash is embedded
in every report row so plan equality can be audited. Significance against
chance uses within-fold label permutation (no normality assumption);
between-model comparison uses a paired sign-flip test on per-fold AUC
differences.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CvPlan:
    """Subject -> fold assignment for every resampling."""

    resamplings: int
    folds: int
    seed: int
    fold_of: tuple[dict[str, int], ...]

    def test_subjects(self, resampling: int, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of[resampling].items() if f == fold)

    def train_subjects(self, resampling: int, fold: int) -> list[str]:
        return sorted(s for s, f in self.fold_of[resampling].items() if f != fold)

    def plan_hash(self) -> str:
        canon = repr(
            (
                self.resamplings,
                self.folds,
                self.seed,
                tuple(tuple(sorted(m.items())) for m in self.fold_of),
            )
        )
        return hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]


def make_cv_plan(
    subjects: list[str],
    labels: dict[str, int],
    seed: int,
    resamplings: int = 10,
    folds: int = 10,
) -> CvPlan:
    """Stratified assignment: per class, shuffle and deal round-robin."""
    classes: dict[int, list[str]] = {}
    for s in subjects:
        classes.setdefault(labels[s], []).append(s)
    for label, members in sorted(classes.items()):
        if len(members) < folds:
            raise ValueError(
                f"class {label} has {len(members)} subjects; need at least "
                f"{folds} for {folds}-fold assignment"
            )

    seeds = np.random.SeedSequence(seed).spawn(resamplings)
    fold_of = []
    for r in range(resamplings):
        rng = np.random.default_rng(seeds[r])
        assignment: dict[str, int] = {}
        for label in sorted(classes):
            members = sorted(classes[label])
            rng.shuffle(members)
            for i, s in enumerate(members):
                assignment[s] = i % folds
        fold_of.append(assignment)
    return CvPlan(resamplings=resamplings, folds=folds, seed=seed, fold_of=tuple(fold_of))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based (Mann-Whitney) AUC estimate; ties contribute one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1

    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def summarize(fold_aucs: list[float]) -> tuple[float, float]:
    """Mean and standard error (sample std over folds / sqrt(n))."""
    values = np.asarray(fold_aucs, dtype=float)
    if len(values) < 2:
        raise ValueError("need at least two fold AUCs to summarize")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


FoldScores = tuple[np.ndarray, np.ndarray]  # (scores, labels) of one test fold


def test_vs_chance(
    folds: list[FoldScores], n_permutations: int = 1000, seed: int = 0
) -> float:
    """One-sided permutation p-value for mean fold AUC above chance.

    Labels are shuffled within each fold (preserving fold class balance) and
    the mean AUC recomputed; smoothing adds one to both counts.
    """
    observed = float(np.mean([auc(s, y) for s, y in folds]))
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        total = 0.0
        for scores, labels in folds:
            total += auc(scores, rng.permutation(labels))
        if total / len(folds) >= observed:
            exceed += 1
    return (1 + exceed) / (n_permutations + 1)


def paired_permutation_test(
    aucs_a: list[float], aucs_b: list[float], n_permutations: int = 1000, seed: int = 0
) -> float:
    """One-sided sign-flip test that model A outperforms model B per fold."""
    d = np.asarray(aucs_a, dtype=float) - np.asarray(aucs_b, dtype=float)
    observed = float(d.mean())
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        signs = rng.choice((-1.0, 1.0), size=len(d))
        if float((d * signs).mean()) >= observed:
            exceed += 1
    return (1 + exceed) / (n_permutations + 1)


def roc_points(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """ROC curve vertices from (0,0) to (1,1), tied scores grouped."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="mergesort")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        for idx in order[i : j + 1]:
            if labels[idx] == 1:
                tp += 1
            else:
                fp += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points


# ---------------------------------------------------------------------------
# Result records and report files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalResult:
    model_id: str
    video_id: str
    fold_aucs: tuple[float, ...]
    mean_auc: float
    se: float
    p_vs_chance: float
    plan_hash: str
    variant: str = "complete"

    def __post_init__(self):
        if not all(0.0 <= a <= 1.0 for a in self.fold_aucs):
            raise ValueError("fold AUCs must lie in [0, 1]")


REPORT_HEADER = "video,model,variant,mean_auc,se,p_chance,n_folds,plan_hash"


def save_results(path: str | Path, results: list[EvalResult]) -> None:
    lines = [REPORT_HEADER]
    for r in results:
        lines.append(
            f"{r.video_id},{r.model_id},{r.variant},{r.mean_auc:.12g},{r.se:.12g},"
            f"{r.p_vs_chance:.12g},{len(r.fold_aucs)},{r.plan_hash}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_results(path: str | Path) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise ValueError(f"{path}: expected header {REPORT_HEADER!r}")
    keys = REPORT_HEADER.split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:] if line.strip()]


def save_fold_dump(path: str | Path, results: list[EvalResult]) -> None:
    """Machine-readable per-fold AUCs for audits."""
    lines = ["video,model,variant,fold_index,auc"]
    for r in results:
        for i, a in enumerate(r.fold_aucs):
            lines.append(f"{r.video_id},{r.model_id},{r.variant},{i},{a:.12g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_roc_file(path: str | Path, points: list[tuple[float, float]]) -> None:
    lines = ["fpr,tpr"] + [f"{fpr:.12g},{tpr:.12g}" for fpr, tpr in points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
