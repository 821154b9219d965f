import numpy as np
import pytest

from gazescreen.features import (
    ChannelStats,
    FeatureSequence,
    LeakageError,
    assemble,
    fit_stats,
    load_feat,
    load_stats,
    normalize_and_fit_length,
    require_fit_split,
    save_feat,
    save_stats,
)
from gazescreen.saliency import SaliencyMap, SaliencyStore, frame_path, save_salr
from gazescreen.types import Fixation, Scanpath

from test_saliency import fixation_at_cell, oracle_mask
from gazescreen.saliency import ExtractionMaskSpec, minmax_normalize


def make_store(tmp_path, rng, dims=(36, 64), frames=(0, 1, 2)):
    for f in frames:
        save_salr(frame_path(tmp_path, f), SaliencyMap(f, rng.uniform(0, 5, size=dims)))
    return SaliencyStore(tmp_path)


def seq(values) -> FeatureSequence:
    return FeatureSequence("s", "v", np.asarray(values, dtype=float))


def test_assemble_single_fixation(tmp_path, geom, rng):
    store = make_store(tmp_path, rng)
    fix = fixation_at_cell(10, 20, (36, 64), geom)
    fix = Fixation(fix.x_deg, fix.y_deg, 150.0, 0.0, center_frame_index=1)
    out = assemble(Scanpath("s", "v", (fix,)), store, geom)
    assert out.channels.shape == (4, 1)
    assert out.channels[1, 0] == fix.x_deg
    assert out.channels[2, 0] == fix.y_deg
    assert out.channels[3, 0] == 150.0
    assert 0.0 <= out.channels[0, 0] <= 1.0


def test_assemble_matches_per_cell_recomputation(tmp_path, geom, rng):
    dims = (36, 64)
    store = make_store(tmp_path, rng, dims=dims)
    spec = ExtractionMaskSpec(1.5)
    cells = [(5, 7), (20, 40), (30, 60)]
    fixations = []
    for i, (r, c) in enumerate(cells):
        f = fixation_at_cell(r, c, dims, geom)
        fixations.append(Fixation(f.x_deg, f.y_deg, 100.0 + 10 * i, 300.0 * i, i))
    sp = Scanpath("s", "v", tuple(fixations))
    out = assemble(sp, store, geom, spec)

    for i, fix in enumerate(fixations):
        raw = store.get(fix.center_frame_index)  # already normalized by the store
        want = float(np.sum(oracle_mask(fix, dims, geom, spec) * raw.values))
        assert out.channels[0, i] == pytest.approx(want, abs=1e-12)
        assert out.channels[3, i] == fix.t_ms


def test_assemble_rejects_empty_and_unaligned(tmp_path, geom, rng):
    store = make_store(tmp_path, rng)
    with pytest.raises(ValueError, match="no fixations"):
        assemble(Scanpath("s", "v", ()), store, geom)
    fix = Fixation(0.0, 0.0, 100.0, 0.0)  # center_frame_index unset
    with pytest.raises(ValueError, match="frame alignment"):
        assemble(Scanpath("s", "v", (fix,)), store, geom)


def test_assemble_names_missing_frame(tmp_path, geom, rng):
    store = make_store(tmp_path, rng, frames=(0,))
    fix = Fixation(0.0, 0.0, 100.0, 0.0, center_frame_index=9)
    with pytest.raises(FileNotFoundError, match="frame 9"):
        assemble(Scanpath("s", "v", (fix,)), store, geom)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def test_fit_stats_constant_channel_floored():
    s = seq([[0.5, 0.5], [1.0, 2.0], [3.0, 4.0], [7.0, 7.0]])
    stats = fit_stats([s], "train0")
    assert stats.mean[0] == pytest.approx(0.5)
    assert stats.std[0] == pytest.approx(1e-8)  # floor value
    assert stats.mean[3] == pytest.approx(7.0)
    assert stats.fitted_on == "train0"


def test_fit_stats_population_formula():
    a = seq([[0.1, 0.2], [1.0, 2.0], [0.0, 0.0], [10.0, 20.0]])
    b = seq([[0.3, 0.4], [3.0, 4.0], [0.0, 0.0], [30.0, 40.0]])
    stats = fit_stats([a, b], "train0")
    assert stats.mean[1] == pytest.approx(2.5)
    assert stats.std[1] == pytest.approx(np.sqrt(1.25), abs=1e-12)  # ~1.118, population


def test_fit_stats_deterministic():
    s = seq(np.arange(8.0).reshape(4, 2) / 10.0)
    first = fit_stats([s], "t")
    second = fit_stats([s], "t")
    np.testing.assert_array_equal(first.mean, second.mean)
    np.testing.assert_array_equal(first.std, second.std)


def test_fit_stats_requires_data():
    with pytest.raises(ValueError):
        fit_stats([], "t")


# ---------------------------------------------------------------------------
# Normalization and length fitting
# ---------------------------------------------------------------------------


def test_exact_length_passthrough(rng):
    channels = np.vstack([rng.uniform(0, 1, 5), rng.normal(size=(3, 5))])
    s = FeatureSequence("s", "v", channels)
    stats = fit_stats([s], "t")
    out, true_length = normalize_and_fit_length(s, stats, 5)
    assert true_length == 5
    np.testing.assert_allclose(
        out, (channels - stats.mean[:, None]) / stats.std[:, None]
    )


def test_padding_is_exactly_zero(rng):
    channels = np.vstack([rng.uniform(0, 1, 3), rng.normal(size=(3, 3))])
    s = FeatureSequence("s", "v", channels)
    out, true_length = normalize_and_fit_length(s, fit_stats([s], "t"), 8)
    assert true_length == 3
    assert np.all(out[:, 3:] == 0.0)


def test_truncation_equals_slice(rng):
    channels = np.vstack([rng.uniform(0, 1, 10), rng.normal(size=(3, 10))])
    s = FeatureSequence("s", "v", channels)
    stats = fit_stats([s], "t")
    full = (channels - stats.mean[:, None]) / stats.std[:, None]
    out, true_length = normalize_and_fit_length(s, stats, 5)
    assert true_length == 5
    np.testing.assert_array_equal(out, full[:, :5])


def test_length_must_be_positive(rng):
    s = seq(np.ones((4, 2)))
    with pytest.raises(ValueError):
        normalize_and_fit_length(s, fit_stats([s], "t"), 0)


def test_normalized_training_pool_has_zero_mean_unit_std(rng):
    seqs = []
    for _ in range(6):
        m = int(rng.integers(4, 30))
        channels = np.vstack([rng.uniform(0, 1, m), rng.normal(3, 2, size=(3, m))])
        seqs.append(FeatureSequence("s", "v", channels))
    stats = fit_stats(seqs, "t")
    pooled = np.concatenate(
        [(s.channels - stats.mean[:, None]) / stats.std[:, None] for s in seqs], axis=1
    )
    np.testing.assert_allclose(pooled.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(pooled.std(axis=1), 1.0, atol=1e-6)


def test_leakage_guard():
    stats = ChannelStats(np.zeros(4), np.ones(4), fitted_on="video:r0f3")
    require_fit_split(stats, "video:r0f3")
    with pytest.raises(LeakageError):
        require_fit_split(stats, "video:r0f4")


def test_raw_saliency_channel_range_enforced():
    with pytest.raises(ValueError, match="saliency"):
        FeatureSequence("s", "v", np.full((4, 3), 2.0))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def test_feat_round_trip(tmp_path, rng):
    array = rng.normal(size=(4, 12))
    array[0] = rng.uniform(0, 1, 12)
    array = array.astype(np.float32).astype(float)
    path = tmp_path / "a_v.feat"
    save_feat(path, "a", "v", array, true_length=9)
    subject, video, loaded, true_length = load_feat(path)
    assert (subject, video, true_length) == ("a", "v", 9)
    np.testing.assert_array_equal(loaded, array)


def test_feat_rejects_whitespace_ids(tmp_path):
    with pytest.raises(ValueError, match="whitespace"):
        save_feat(tmp_path / "x.feat", "a b", "v", np.zeros((4, 2)), 2)


def test_stats_round_trip(tmp_path):
    stats = ChannelStats(
        np.array([0.25, -1.5, 3.75, 200.0]),
        np.array([0.1, 2.0, 1.25, 55.5]),
        fitted_on="vid:r3f7",
    )
    path = tmp_path / "stats.csv"
    save_stats(path, stats)
    loaded = load_stats(path)
    assert loaded.fitted_on == "vid:r3f7"
    np.testing.assert_array_equal(loaded.mean, stats.mean)
    np.testing.assert_array_equal(loaded.std, stats.std)
