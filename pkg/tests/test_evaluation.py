import numpy as np
import pytest

from gazescreen.evaluation import (
    EvalResult,
    auc,
    load_results,
    make_cv_plan,
    paired_permutation_test,
    roc_points,
    save_fold_dump,
    save_results,
    save_roc_file,
    summarize,
)
from gazescreen.evaluation import test_vs_chance as chance_test


def oracle_auc(scores, labels):
    """O(n^2) pair counting; ties contribute one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# CV plans
# ---------------------------------------------------------------------------


def balanced_subjects(n_pos, n_neg):
    subjects = [f"p{i}" for i in range(n_pos)] + [f"n{i}" for i in range(n_neg)]
    labels = {s: 1 if s.startswith("p") else 0 for s in subjects}
    return subjects, labels


def test_twenty_subjects_two_per_fold():
    subjects, labels = balanced_subjects(10, 10)
    plan = make_cv_plan(subjects, labels, seed=0, resamplings=3, folds=10)
    for r in range(3):
        for f in range(10):
            assert len(plan.test_subjects(r, f)) == 2


def test_same_seed_identical_plan():
    subjects, labels = balanced_subjects(12, 8)
    a = make_cv_plan(subjects, labels, seed=5, resamplings=2, folds=4)
    b = make_cv_plan(subjects, labels, seed=5, resamplings=2, folds=4)
    assert a == b
    assert a.plan_hash() == b.plan_hash()
    c = make_cv_plan(subjects, labels, seed=6, resamplings=2, folds=4)
    assert a.plan_hash() != c.plan_hash()


def test_stratification_within_one_subject():
    subjects, labels = balanced_subjects(23, 15)
    plan = make_cv_plan(subjects, labels, seed=1, resamplings=4, folds=5)
    for r in range(4):
        for f in range(5):
            test = plan.test_subjects(r, f)
            n_pos = sum(labels[s] for s in test)
            n_neg = len(test) - n_pos
            assert abs(n_pos - 23 / 5) <= 1.0
            assert abs(n_neg - 15 / 5) <= 1.0
            assert n_pos >= 1 and n_neg >= 1  # both classes in every fold


def test_folds_partition_subjects():
    subjects, labels = balanced_subjects(11, 13)
    plan = make_cv_plan(subjects, labels, seed=2, resamplings=3, folds=4)
    for r in range(3):
        seen = []
        for f in range(4):
            test = plan.test_subjects(r, f)
            assert set(test).isdisjoint(plan.train_subjects(r, f))
            assert set(test) | set(plan.train_subjects(r, f)) == set(subjects)
            seen += test
        assert sorted(seen) == sorted(subjects)


def test_small_class_rejected():
    subjects, labels = balanced_subjects(4, 20)
    with pytest.raises(ValueError, match="class 1"):
        make_cv_plan(subjects, labels, seed=0, resamplings=2, folds=5)


# ---------------------------------------------------------------------------
# AUC
# ---------------------------------------------------------------------------


def test_auc_examples():
    assert auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])) == 1.0
    assert auc(np.array([0.5, 0.5, 0.5, 0.5]), np.array([1, 0, 1, 0])) == 0.5


def test_auc_matches_pair_counting_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(4, 60))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.normal(size=n), 1)  # coarse values force ties
        assert abs(auc(scores, labels) - oracle_auc(scores, labels)) < 1e-12


def test_auc_invariant_under_monotone_transform(rng):
    scores = rng.normal(size=40)
    labels = rng.integers(0, 2, size=40)
    labels[:2] = [0, 1]
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_auc_complement_for_tie_free_scores(rng):
    scores = rng.permutation(np.arange(30, dtype=float))
    labels = rng.integers(0, 2, size=30)
    labels[:2] = [0, 1]
    assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_auc_single_class_rejected():
    with pytest.raises(ValueError):
        auc(np.array([0.1, 0.2]), np.array([1, 1]))


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def test_summarize_examples():
    mean, se = summarize([0.6, 0.6, 0.6])
    assert mean == 0.6 and se == 0.0
    mean, se = summarize([0.4, 0.6])
    assert mean == pytest.approx(0.5)
    assert se == pytest.approx(0.1)


def test_summarize_translation_shifts_only_mean():
    base = [0.4, 0.5, 0.6, 0.55]
    m1, s1 = summarize(base)
    m2, s2 = summarize([b + 0.1 for b in base])
    assert m2 == pytest.approx(m1 + 0.1)
    assert s2 == pytest.approx(s1, abs=1e-12)


# ---------------------------------------------------------------------------
# Permutation tests
# ---------------------------------------------------------------------------


def fold_of(scores, labels):
    return (np.asarray(scores, dtype=float), np.asarray(labels))


def test_perfect_separation_minimal_p():
    # Folds large enough that no within-fold permutation can tie the observed
    # mean AUC of 1.0.
    scores = np.linspace(1.0, 0.0, 10)
    labels = np.array([1] * 5 + [0] * 5)
    folds = [fold_of(scores, labels) for _ in range(6)]
    p = chance_test(folds, n_permutations=200, seed=0)
    assert p <= 1.0 / 201.0 + 1e-12


def test_chance_scores_large_p(rng):
    folds = []
    for _ in range(10):
        labels = np.array([1, 1, 1, 0, 0, 0])
        folds.append(fold_of(rng.normal(size=6), labels))
    p = chance_test(folds, n_permutations=300, seed=1)
    assert p > 0.05


def test_permutation_p_roughly_uniform_under_null(rng):
    # Independent scores and labels: p-values spread over (0, 1].
    ps = []
    for i in range(60):
        folds = [
            fold_of(rng.normal(size=8), np.array([1, 1, 1, 1, 0, 0, 0, 0]))
            for _ in range(4)
        ]
        ps.append(chance_test(folds, n_permutations=99, seed=i))
    ps = np.array(ps)
    assert 0.25 < ps.mean() < 0.75
    assert (ps <= 0.2).mean() < 0.5
    assert (ps >= 0.8).mean() < 0.5


def test_paired_permutation_detects_dominance(rng):
    a = list(0.75 + 0.02 * rng.normal(size=30))
    b = list(0.55 + 0.02 * rng.normal(size=30))
    assert paired_permutation_test(a, b, n_permutations=500, seed=0) < 0.01
    assert paired_permutation_test(b, a, n_permutations=500, seed=0) > 0.5


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------


def test_roc_endpoints_and_area(rng):
    for _ in range(20):
        n = int(rng.integers(6, 40))
        scores = np.round(rng.normal(size=n), 1)
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        points = roc_points(scores, labels)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        fpr = [p[0] for p in points]
        tpr = [p[1] for p in points]
        area = np.trapezoid(tpr, fpr)
        assert area == pytest.approx(auc(scores, labels), abs=1e-12)


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


def test_result_files_round_trip(tmp_path):
    result = EvalResult(
        model_id="cnn_scratch",
        video_id="vid",
        fold_aucs=(0.5, 0.75, 0.6),
        mean_auc=0.6166666,
        se=0.07,
        p_vs_chance=0.04,
        plan_hash="abc123",
        variant="complete",
    )
    save_results(tmp_path / "eval_results.csv", [result])
    rows = load_results(tmp_path / "eval_results.csv")
    assert rows[0]["model"] == "cnn_scratch"
    assert rows[0]["variant"] == "complete"
    assert float(rows[0]["mean_auc"]) == pytest.approx(0.6166666)
    save_fold_dump(tmp_path / "folds.csv", [result])
    lines = (tmp_path / "folds.csv").read_text().splitlines()
    assert len(lines) == 4

    save_roc_file(tmp_path / "roc.csv", [(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)])
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "fpr,tpr"


def test_eval_result_validates_auc_range():
    with pytest.raises(ValueError):
        EvalResult("m", "v", (1.5,), 1.5, 0.0, 0.5, "h")
