"""Reference methods: ROI-alphabet Levenshtein classifier and SVM on
aggregated engineered features with recursive feature elimination.

The Levenshtein method encodes each scanpath as a symbol string over a
uniform screen grid and scores a query by its mean edit distance to the
control group minus the ADHD group (higher means more ADHD-like). The SVM
baseline trains a linear hinge-loss model by stochastic subgradient descent
on whole-video aggregate statistics, eliminating the weakest 20% of the
remaining features per round and keeping the mask with the best
inner-validation AUC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import auc
from .geometry import ScreenGeometry, deg_to_px
from .types import Scanpath

#: 64-symbol alphabet (base64 characters); bounds rows*cols.
ROI_ALPHABET = (
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
)


@dataclass(frozen=True)
class RoiGrid:
    """Uniform rows x cols screen partition; one symbol per cell."""

    rows: int = 4
    cols: int = 4

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.rows * self.cols > len(ROI_ALPHABET):
            raise ValueError(f"grid exceeds the {len(ROI_ALPHABET)}-symbol alphabet")


def encode_scanpath(sp: Scanpath, grid: RoiGrid, geom: ScreenGeometry) -> str:
    """One symbol per fixation; off-screen fixations clamp to the border cell.

    Consecutive duplicates are kept: the temporal structure stays intact.
    """
    symbols = []
    for f in sp.fixations:
        px = deg_to_px(f.x_deg, "x", geom)
        py = deg_to_px(f.y_deg, "y", geom)
        col = int(math.floor(px * grid.cols / geom.screen_width_px))
        row = int(math.floor(py * grid.rows / geom.screen_height_px))
        col = min(max(col, 0), grid.cols - 1)
        row = min(max(row, 0), grid.rows - 1)
        symbols.append(ROI_ALPHABET[row * grid.cols + col])
    return "".join(symbols)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (ca != cb),  # substitution
                )
            )
        previous = current
    return previous[-1]


def levenshtein_classify(query: str, adhd_group: list[str], control_group: list[str]) -> float:
    """Mean distance to controls minus mean distance to the ADHD group.

    Higher scores mean the query is closer to the ADHD group; using the raw
    difference (instead of a hard label) makes the score thresholdable for
    ROC analysis. The query's own subject must not appear in either group.
    """
    if not adhd_group or not control_group:
        raise ValueError("both training groups must be nonempty")
    mean_adhd = sum(levenshtein(query, s) for s in adhd_group) / len(adhd_group)
    mean_control = sum(levenshtein(query, s) for s in control_group) / len(control_group)
    return mean_control - mean_adhd


# ---------------------------------------------------------------------------
# Engineered features
# ---------------------------------------------------------------------------

_BASE_FEATURES = (
    ["fix_count"]
    + [f"fix_dur_{s}" for s in ("mean", "median", "std")]
    + [f"sacc_amp_{s}" for s in ("mean", "median", "std")]
    + [f"sacc_dur_{s}" for s in ("mean", "median", "std")]
    + [f"sacc_vel_{s}" for s in ("mean", "median", "std")]
    + [f"saliency_{s}" for s in ("mean", "median", "std")]
)

#: Full fixed-order feature list: whole-video statistics plus the same
#: statistics over the first half of the viewing time and over the rest.
FEATURE_NAMES: tuple[str, ...] = tuple(
    _BASE_FEATURES
    + [f"first_{name}" for name in _BASE_FEATURES]
    + [f"rest_{name}" for name in _BASE_FEATURES]
)


@dataclass(frozen=True)
class EngineeredFeatureVector:
    """Fixed-order aggregate statistics; imputed marks empty-statistic zeros."""

    values: np.ndarray
    imputed: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {self.values.shape}")
        if np.any(np.isnan(self.values)):
            raise ValueError("engineered features must be NaN-free")


def _stats(values: np.ndarray) -> list[float]:
    return [float(values.mean()), float(np.median(values)), float(values.std())]


def _block(
    fixations, saliency: np.ndarray, sample_period_ms: float
) -> tuple[list[float], list[bool]]:
    """The 16 statistics of one fixation subset, with imputation flags."""
    values: list[float] = [float(len(fixations))]
    flags: list[bool] = [False]

    if len(fixations) >= 1:
        durations = np.array([f.t_ms for f in fixations])
        dur_stats, dur_flags = _stats(durations), [False] * 3
        sal_stats, sal_flags = _stats(saliency), [False] * 3
    else:
        dur_stats, dur_flags = [0.0] * 3, [True] * 3
        sal_stats, sal_flags = [0.0] * 3, [True] * 3

    if len(fixations) >= 2:
        amps, durs = [], []
        for prev, nxt in zip(fixations, fixations[1:]):
            amps.append(math.hypot(nxt.x_deg - prev.x_deg, nxt.y_deg - prev.y_deg))
            durs.append(max(nxt.onset_ms - (prev.onset_ms + prev.t_ms), sample_period_ms))
        amps = np.array(amps)
        durs = np.array(durs)
        vels = amps / (durs / 1000.0)
        sacc_stats = _stats(amps) + _stats(durs) + _stats(vels)
        sacc_flags = [False] * 9
    else:
        sacc_stats, sacc_flags = [0.0] * 9, [True] * 9

    values += dur_stats + sacc_stats + sal_stats
    flags += dur_flags + sacc_flags + sal_flags
    return values, flags


def extract_engineered_features(
    sp: Scanpath, saliency: np.ndarray, sample_period_ms: float = 1000.0 / 60.0
) -> EngineeredFeatureVector:
    """Aggregate whole-video statistics plus first-half/rest variants.

    ``saliency`` holds one extracted saliency value per fixation. Saccade
    durations are onset gaps minus the leading fixation's duration, floored
    at one sample period; the velocity proxy is amplitude over duration in
    degrees per second.
    """
    if len(sp) < 2:
        raise ValueError(
            f"scanpath {sp.subject_id}/{sp.video_id} has {len(sp)} fixations; "
            f"saccade statistics need at least 2"
        )
    if len(saliency) != len(sp):
        raise ValueError("saliency channel length does not match the scanpath")

    fixations = list(sp.fixations)
    start = fixations[0].onset_ms
    end = fixations[-1].onset_ms + fixations[-1].t_ms
    midpoint = start + (end - start) / 2.0
    first_idx = [i for i, f in enumerate(fixations) if f.onset_ms < midpoint]
    rest_idx = [i for i, f in enumerate(fixations) if f.onset_ms >= midpoint]

    values: list[float] = []
    flags: list[bool] = []
    for idx in (list(range(len(fixations))), first_idx, rest_idx):
        block_values, block_flags = _block(
            [fixations[i] for i in idx], np.asarray(saliency)[idx], sample_period_ms
        )
        values += block_values
        flags += block_flags
    return EngineeredFeatureVector(np.array(values), np.array(flags))


def save_feature_table(path, subjects: list[str], vectors: list[EngineeredFeatureVector]) -> None:
    from pathlib import Path

    lines = ["subject_id," + ",".join(FEATURE_NAMES)]
    for subject, vec in zip(subjects, vectors):
        lines.append(subject + "," + ",".join(f"{v:.12g}" for v in vec.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Linear SVM with recursive feature elimination
# ---------------------------------------------------------------------------


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    feature_mask: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def decision_scores(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.std
        return z[:, self.feature_mask] @ self.weights + self.bias


def _train_hinge_svm(
    x: np.ndarray, y_signed: np.ndarray, lam: float, epochs: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Pegasos-style stochastic subgradient descent on the hinge objective."""
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y_signed[i] * (x[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y_signed[i] * x[i]
                b += eta * y_signed[i]
    return w, b


def svm_rfe_train(
    x: np.ndarray,
    y: np.ndarray,
    elimination_step: float = 0.2,
    lam: float = 0.01,
    epochs: int = 50,
    seed: int = 0,
) -> SvmModel:
    """Train with recursive feature elimination; keep the best-validating mask.

    Each round removes the ``elimination_step`` fraction of the remaining
    features with the smallest absolute weights; candidate masks are scored
    by AUC on an inner validation split, and the winner is refit on the full
    training set.
    """
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("training fold contains a single class")
    if not 0.0 < elimination_step < 1.0:
        raise ValueError("elimination_step must lie in (0, 1)")

    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-8)
    z = (x - mean) / std
    y_signed = np.where(y > 0, 1.0, -1.0)

    rng = np.random.default_rng(seed)
    n = len(y)
    n_val = max(1, n // 4)
    for _ in range(100):
        order = rng.permutation(n)
        val_idx, fit_idx = order[:n_val], order[n_val:]
        if len(np.unique(y[val_idx])) == 2 and len(np.unique(y[fit_idx])) == 2:
            break
    else:
        raise ValueError("could not build a two-class inner validation split")

    active = np.arange(x.shape[1])
    best_auc = -1.0
    best_mask = active.copy()
    while True:
        w, b = _train_hinge_svm(z[fit_idx][:, active], y_signed[fit_idx], lam, epochs, rng)
        scores = z[val_idx][:, active] @ w + b
        mask_auc = auc(scores, y[val_idx])
        if mask_auc > best_auc:
            best_auc = mask_auc
            best_mask = active.copy()
        if len(active) == 1:
            break
        n_drop = max(1, int(len(active) * elimination_step))
        keep = np.argsort(np.abs(w), kind="stable")[n_drop:]
        active = active[np.sort(keep)]

    w, b = _train_hinge_svm(z[:, best_mask], y_signed, lam, epochs, rng)
    return SvmModel(weights=w, bias=b, feature_mask=best_mask, mean=mean, std=std)
