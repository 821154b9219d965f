import numpy as np
import pytest

from gazescreen.geometry import px_to_deg
from gazescreen.idt import IdtConfig, detect_fixations, detect_fixations_deg
from gazescreen.types import GazeRecording, GazeSample


# ---------------------------------------------------------------------------
# Independent brute-force reference: recomputes dispersion from scratch on
# plain Python lists for every candidate window.
# ---------------------------------------------------------------------------


def _dispersion(xs, ys):
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def oracle_idt(t, x, y, threshold, min_duration):
    t, x, y = list(t), list(x), list(y)
    n = len(t)
    events = []
    i = 0
    while i < n:
        j = i
        while j < n and t[j] - t[i] < min_duration:
            j += 1
        if j >= n:
            break
        if _dispersion(x[i : j + 1], y[i : j + 1]) > threshold:
            i += 1
            continue
        while j + 1 < n and _dispersion(x[i : j + 2], y[i : j + 2]) <= threshold:
            j += 1
        window = j - i + 1
        events.append(
            (t[i], t[j] - t[i], sum(x[i : j + 1]) / window, sum(y[i : j + 1]) / window)
        )
        i = j + 1
    return events


def random_deg_recording(rng, rate=60.0):
    """Alternating stationary clusters and fast sweeps in degree space."""
    period = 1000.0 / rate
    t, x, y = [], [], []
    pos = rng.uniform(-10, 10, size=2)
    k = 0
    for _ in range(int(rng.integers(3, 9))):
        if rng.random() < 0.6:  # hold
            n = int(rng.integers(3, 40))
            jitter = rng.uniform(0.01, 0.6)
            for _ in range(n):
                t.append(k * period)
                x.append(pos[0] + jitter * rng.normal())
                y.append(pos[1] + jitter * rng.normal())
                k += 1
        else:  # sweep to a new position
            target = rng.uniform(-15, 15, size=2)
            n = int(rng.integers(2, 8))
            for step in range(n):
                frac = (step + 1) / n
                t.append(k * period)
                x.append(pos[0] + frac * (target[0] - pos[0]))
                y.append(pos[1] + frac * (target[1] - pos[1]))
                k += 1
            pos = target
    return np.array(t), np.array(x), np.array(y)


def assert_matches_oracle(t, x, y, config):
    got = detect_fixations_deg(t, x, y, config)
    want = oracle_idt(t, x, y, config.dispersion_threshold_deg, config.min_duration_ms)
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g[0] == w[0]  # onset
        assert g[1] == w[1]  # duration
        assert abs(g[2] - w[2]) < 1e-9
        assert abs(g[3] - w[3]) < 1e-9


# ---------------------------------------------------------------------------
# Spec examples
# ---------------------------------------------------------------------------


def make_recording(points_px, rate=60.0, subject="s", video="v"):
    period = 1000.0 / rate
    samples = tuple(
        GazeSample(k * period, px[0], px[1], True) for k, px in enumerate(points_px)
    )
    return GazeRecording(subject, video, rate, samples)


def test_single_stationary_cluster(geom):
    rec = make_recording([(1200.0, 400.0)] * 30)
    sp = detect_fixations(rec, geom, IdtConfig(1.0, 100.0))
    assert len(sp) == 1
    fix = sp.fixations[0]
    assert fix.t_ms == pytest.approx(29 * 1000.0 / 60.0, abs=1e-9)  # ~483 ms
    assert fix.x_deg == pytest.approx(px_to_deg(1200.0, "x", geom), abs=1e-12)
    assert fix.y_deg == pytest.approx(px_to_deg(400.0, "y", geom), abs=1e-12)


def test_two_clusters_ten_degrees_apart(geom):
    config = IdtConfig(1.0, 100.0)
    t1, x1, y1 = [], [], []
    period = 1000.0 / 60.0
    for k in range(18):  # ~300 ms at (0, 0) degrees
        t1.append(k * period), x1.append(0.0), y1.append(0.0)
    for k in range(18, 36):  # ~300 ms at (10, 0) degrees
        t1.append(k * period), x1.append(10.0), y1.append(0.0)
    events = detect_fixations_deg(np.array(t1), np.array(x1), np.array(y1), config)
    assert len(events) == 2
    assert events[0][2] == pytest.approx(0.0, abs=1e-12)
    assert events[1][2] == pytest.approx(10.0, abs=1e-12)
    assert_matches_oracle(np.array(t1), np.array(x1), np.array(y1), config)


def test_pure_sweep_yields_no_fixations():
    # 40 deg/s sweep: any 100 ms window spans 4 degrees > 1 degree threshold.
    rate = 60.0
    t = np.arange(120) * (1000.0 / rate)
    x = 40.0 * t / 1000.0
    y = np.zeros_like(t)
    events = detect_fixations_deg(t, x, y, IdtConfig(1.0, 100.0))
    assert events == []
    assert oracle_idt(t, x, y, 1.0, 100.0) == []


def test_oracle_agreement_on_random_recordings(rng):
    config = IdtConfig(1.0, 100.0)
    for _ in range(150):
        t, x, y = random_deg_recording(rng)
        assert_matches_oracle(t, x, y, config)


def test_emitted_windows_satisfy_invariants(rng):
    config = IdtConfig(1.2, 120.0)
    for _ in range(50):
        t, x, y = random_deg_recording(rng)
        for onset, duration, _, _ in detect_fixations_deg(t, x, y, config):
            assert duration >= config.min_duration_ms
            sel = (t >= onset) & (t <= onset + duration)
            disp = (x[sel].max() - x[sel].min()) + (y[sel].max() - y[sel].min())
            assert disp <= config.dispersion_threshold_deg + 1e-12


def test_translation_invariance(rng):
    config = IdtConfig(1.0, 100.0)
    t, x, y = random_deg_recording(rng)
    base = detect_fixations_deg(t, x, y, config)
    shifted = detect_fixations_deg(t + 987654.0, x, y, config)
    assert len(base) == len(shifted)
    for b, s in zip(base, shifted):
        assert s[0] == pytest.approx(b[0] + 987654.0, abs=1e-6)
        assert s[1] == b[1] and s[2] == b[2] and s[3] == b[3]


def test_no_temporal_overlap(rng):
    config = IdtConfig(1.0, 100.0)
    for _ in range(30):
        t, x, y = random_deg_recording(rng)
        events = detect_fixations_deg(t, x, y, config)
        for a, b in zip(events, events[1:]):
            assert a[0] + a[1] < b[0]


def test_blink_splits_segments(geom):
    period = 1000.0 / 60.0
    samples = []
    for k in range(60):
        valid = not (25 <= k < 32)  # ~117 ms dropout
        samples.append(GazeSample(k * period, 900.0, 500.0, valid))
    rec = GazeRecording("s", "v", 60.0, tuple(samples))
    sp = detect_fixations(rec, geom, IdtConfig(1.0, 100.0))
    assert len(sp) == 2  # one fixation per segment, never bridging the blink


def test_too_short_recording_unusable(geom):
    rec = make_recording([(900.0, 500.0)] * 3)
    sp = detect_fixations(rec, geom, IdtConfig(1.0, 100.0))
    assert not sp.usable


def test_min_duration_must_cover_two_periods(geom):
    rec = make_recording([(900.0, 500.0)] * 30)
    with pytest.raises(ValueError, match="two sample periods"):
        detect_fixations(rec, geom, IdtConfig(1.0, 20.0))


def test_idt_config_validation():
    with pytest.raises(ValueError):
        IdtConfig(0.0, 100.0)
    with pytest.raises(ValueError):
        IdtConfig(1.0, -5.0)
