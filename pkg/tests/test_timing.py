import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepsync.errors import EmptySeries, InsufficientBaseline
from stepsync.timing import (
    AsynchronySeries,
    OnsetSeries,
    compute_isi,
    match_onsets,
    relative_asynchrony,
    summarize_pre_perturbation,
    unwrap_asynchronies,
)


def onsets(times, source="participant"):
    return OnsetSeries(np.asarray(times, dtype=float), source=source)


def cue(times):
    return onsets(times, "cue")


# ---- compute_isi -----------------------------------------------------------

def test_isi_constant_tempo():
    np.testing.assert_allclose(compute_isi(onsets([0.0, 0.8, 1.6, 2.4])).intervals, [0.8] * 3)


def test_isi_two_onsets():
    np.testing.assert_allclose(compute_isi(onsets([0.0, 0.4])).intervals, [0.4])


def test_isi_single_onset_raises():
    with pytest.raises(EmptySeries):
        compute_isi(onsets([0.0]))


@given(st.lists(st.floats(0.05, 2.0), min_size=1, max_size=40), st.floats(-5, 5))
def test_isi_cumsum_roundtrip(gaps, start):
    times = start + np.concatenate(([0.0], np.cumsum(gaps)))
    isi = compute_isi(onsets(times))
    assert len(isi) == len(times) - 1
    assert np.all(isi.intervals > 0)
    rebuilt = times[0] + np.concatenate(([0.0], np.cumsum(isi.intervals)))
    np.testing.assert_allclose(rebuilt, times, rtol=0, atol=1e-12)


def test_onset_series_rejects_non_increasing():
    with pytest.raises(ValueError):
        onsets([0.0, 0.5, 0.5])


def test_feet_alternate_by_default():
    s = onsets([0.0, 0.4, 0.8, 1.2])
    assert s.feet == ("L", "R", "L", "R")


# ---- match_onsets ----------------------------------------------------------

def test_match_uniform_lag():
    m = match_onsets(onsets([0.45, 0.85]), cue([0.4, 0.8]))
    np.testing.assert_allclose(m.asynchrony, [0.05, 0.05])
    assert m.gaps == ()


def test_match_raw_drift_wraps():
    c = 0.4 * np.arange(30)
    p = 0.44 * np.arange(30)
    m = match_onsets(onsets(p), cue(c))
    assert np.max(np.abs(m.asynchrony)) <= 0.2 + 1e-12
    # nearest matching produces the sawtooth: a large negative jump somewhere
    assert np.min(np.diff(m.asynchrony)) < -0.3


def brute_force_assignment(p, c):
    """Injective participant->cue assignment (order preserving) minimizing total |asynchrony|."""
    best = None
    for combo in itertools.combinations(range(len(c)), len(p)):
        cost = sum(abs(p[i] - c[j]) for i, j in enumerate(combo))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, combo)
    return list(best[1])


def test_match_missing_step_agrees_with_brute_force():
    c = 0.5 * np.arange(8)
    p = np.delete(c + np.array([0.03, -0.02, 0.05, 0.01, -0.04, 0.02, 0.0, 0.03]), 4)
    m = match_onsets(onsets(p), cue(c))
    assert m.gaps == (4,)
    assert m.cue_index.tolist() == brute_force_assignment(p, c)
    full = match_onsets(onsets(np.delete(c, 4) + 0.01), cue(c))
    np.testing.assert_allclose(full.asynchrony, 0.01)


def test_match_tie_prefers_earlier_cue():
    m = match_onsets(onsets([0.5]), cue([0.0, 1.0]))
    assert m.cue_index.tolist() == [0]
    assert m.gaps == (1,)


def test_match_competition_reassigns_loser():
    # both participants are nearest to cue 1.0; the nearer keeps it
    m = match_onsets(onsets([0.7, 0.95]), cue([0.0, 1.0, 2.0]))
    assert dict(zip(m.participant_index.tolist(), m.cue_index.tolist())) == {0: 0, 1: 1}


def test_match_empty_inputs():
    m = match_onsets(onsets([]), cue([0.0, 1.0]))
    assert len(m) == 0 and m.gaps == (0, 1)


@given(st.floats(-0.19, 0.19), st.integers(3, 40), st.floats(0.3, 1.0))
def test_match_constant_shift(shift, n, isi):
    c = isi * np.arange(n)
    m = match_onsets(onsets(c + shift * isi / 0.4), cue(c))
    np.testing.assert_allclose(m.asynchrony, shift * isi / 0.4, atol=1e-12)
    assert len(m) == n


@given(st.lists(st.floats(0.2, 1.0), min_size=2, max_size=30),
       st.lists(st.floats(0.2, 1.0), min_size=2, max_size=30), st.floats(-1, 1))
def test_match_sign_convention(pg, cg, off):
    p = off + np.concatenate(([0.0], np.cumsum(pg)))
    c = np.concatenate(([0.0], np.cumsum(cg)))
    m = match_onsets(onsets(p), cue(c))
    later = p[m.participant_index] > c[m.cue_index]
    assert np.all((m.asynchrony > 0) == later)
    assert np.all(np.diff(m.cue_index) > 0)


# ---- unwrap_asynchronies ---------------------------------------------------

def test_unwrap_identity_on_continuous_series():
    c = 0.4 * np.arange(20)
    raw = match_onsets(onsets(c + 0.03), cue(c))
    un = unwrap_asynchronies(raw, 0.4)
    assert not un.unwrap_applied
    np.testing.assert_array_equal(un.cue_index, raw.cue_index)
    np.testing.assert_array_equal(un.asynchrony, raw.asynchrony)


def test_unwrap_drift_closed_form():
    n = np.arange(30)
    c = 0.40 * n
    p = 0.44 * n
    un = unwrap_asynchronies(match_onsets(onsets(p), cue(c)), 0.4)
    assert un.unwrap_applied
    np.testing.assert_array_equal(un.cue_index, n)
    np.testing.assert_allclose(un.asynchrony, 0.04 * n, rtol=0, atol=1e-9)
    assert un.asynchrony.max() > 0.4
    assert np.all(np.diff(un.asynchrony) > 0)


def test_unwrap_skips_missing_step():
    c = 0.4 * np.arange(20)
    p = np.delete(c + 0.02 + 0.01 * np.arange(20), 9)
    un = unwrap_asynchronies(match_onsets(onsets(p), cue(c)), 0.4)
    assert 9 in un.gaps
    assert np.all(np.abs(np.diff(un.asynchrony)) < 0.2)


def test_unwrap_break_restarts_chain():
    c = 0.4 * np.arange(12)
    p = c + 0.01
    p[6:] += 0.19  # abrupt jump of nearly half an interval, then a second one
    p[9:] += 0.19
    raw = match_onsets(onsets(p), cue(c))
    un = unwrap_asynchronies(raw, 0.3)
    assert len(un.breaks) >= 1
    for k in range(1, len(un)):
        if k in un.breaks or un.cue_index[k] - un.cue_index[k - 1] != 1:
            continue
        assert abs(un.asynchrony[k] - un.asynchrony[k - 1]) < 0.15


drift_series = st.tuples(
    st.floats(0.3, 1.0),                 # cue interval
    st.floats(-0.12, 0.12),              # relative tempo mismatch
    st.lists(st.floats(-0.02, 0.02), min_size=10, max_size=40),  # jitter
)


@settings(max_examples=60, deadline=None)
@given(drift_series)
def test_unwrap_continuity_and_idempotence(args):
    isi, d, jitter = args
    n = len(jitter)
    c = isi * np.arange(n)
    p = isi * (1 + d) * np.arange(n) + np.asarray(jitter) * isi
    if np.any(np.diff(p) <= 0):
        return
    once = unwrap_asynchronies(match_onsets(onsets(p), cue(c)), isi)
    twice = unwrap_asynchronies(once, isi)
    np.testing.assert_array_equal(once.cue_index, twice.cue_index)
    np.testing.assert_array_equal(once.participant_index, twice.participant_index)
    assert once.gaps == twice.gaps and once.breaks == twice.breaks
    assert once.unwrap_applied == twice.unwrap_applied
    for k in range(1, len(once)):
        if k in once.breaks or once.cue_index[k] - once.cue_index[k - 1] != 1:
            continue
        assert abs(once.asynchrony[k] - once.asynchrony[k - 1]) < isi / 2


# ---- relative_asynchrony ---------------------------------------------------

def series_from_asynchronies(a, isi=0.8):
    c = isi * np.arange(len(a))
    idx = np.arange(len(a))
    return AsynchronySeries(idx, idx, c + np.asarray(a), c)


def test_relative_constant_is_zero():
    curve = relative_asynchrony(series_from_asynchronies(np.full(30, 0.15)), T=13)
    np.testing.assert_allclose(curve.values, 0.0, atol=1e-15)
    assert curve.baseline_mean == pytest.approx(0.15)


def test_relative_geometric_decay():
    T = 12
    a = np.zeros(30)
    k = np.arange(30 - T)
    a[T:] = 0.12 * 0.65 ** k  # 0-based index T is step T+1, i.e. offset +1
    curve = relative_asynchrony(series_from_asynchronies(a), T=T)
    expected = [0, 0, 0, 0, 0, 0.12, 0.078, 0.0507, 0.032955, 0.02142075, 0.0139234875]
    np.testing.assert_allclose(curve.values, expected, atol=1e-12)
    assert list(curve.offsets) == list(range(-4, 7))


def test_relative_empty_baseline():
    with pytest.raises(InsufficientBaseline):
        relative_asynchrony(series_from_asynchronies(np.zeros(30)), T=4, exclude_first=3)


def test_relative_missing_offsets_are_nan():
    a = np.full(30, 0.1)
    s = series_from_asynchronies(a)
    keep = np.array([k for k in range(30) if k != 13])
    s = AsynchronySeries(keep, keep, s.participant_times, s.cue_times)
    curve = relative_asynchrony(s, T=13)
    assert np.isnan(curve.at(1)) and curve.at(0) == pytest.approx(0.0)


@given(st.lists(st.floats(-0.5, 0.5), min_size=30, max_size=30), st.integers(5, 20))
def test_relative_baseline_mean_zero(a, T):
    s = series_from_asynchronies(a, isi=2.0)
    curve = relative_asynchrony(s, T=T)
    window = np.asarray(a[3:T - 1]) - curve.baseline_mean
    assert abs(window.mean()) < 1e-12


# ---- summarize_pre_perturbation --------------------------------------------

def test_summary_identical_asynchronies():
    s = series_from_asynchronies(np.full(30, 0.05))
    isi = compute_isi(onsets(s.participant_times))
    out = summarize_pre_perturbation(s, isi, T=14)
    assert out.n_used == 10
    assert out.mean_asynchrony == pytest.approx(0.05)
    assert out.sd_asynchrony == pytest.approx(0.0, abs=1e-15)
    assert out.mean_isi == pytest.approx(0.8)


def test_summary_window_count():
    s = series_from_asynchronies(np.zeros(30))
    isi = compute_isi(onsets(s.participant_times))
    assert summarize_pre_perturbation(s, isi, T=13, exclude_first=3).n_used == 9
