import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from stepsync import io
from stepsync.errors import ConfigError, EmptyCell, MissingCue, SchemaError
from stepsync.harness import (
    AnalysisOptions,
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    aggregate,
    analyze_files,
    analyze_onsets,
    run_experiment,
)
from stepsync.report import curve_csv_text, emit_report
from stepsync.simulate import (
    PerturbationSpec,
    PhaseCorrectionParams,
    generate_cue_schedule,
    simulate_agent,
    synthesize_trace,
)

GOLDEN = Path(__file__).parent / "golden"

IDEAL = {
    "modalities": ["Ideal"],
    "tempos": [0.8],
    "directions": ["negative"],
    "trials_per_block": 1,
    "blocks": 2,
    "cue_jitter_sd": 0.0,
    "presets": {"Ideal-Slow": {"alpha": 0.5, "timekeeper_sd": 0.0, "motor_sd": 0.0}},
}


@pytest.fixture(scope="module")
def small_report():
    cfg = ExperimentConfig(trials_per_block=5, blocks=1, seed=3)
    return run_experiment(cfg)


def test_grid_shape(small_report):
    assert len(small_report.trials) == 40
    assert len(small_report.summaries) == 8
    assert not small_report.errors
    cells = {t.cell for t in small_report.trials}
    assert "AuditoryVisual_800ms_negative" in cells and "VisualOnly_400ms_positive" in cells


def test_deterministic_and_worker_independent(small_report):
    cfg = ExperimentConfig(trials_per_block=5, blocks=1, seed=3, workers=2)
    assert run_experiment(cfg).to_json() == small_report.to_json()


def test_seed_changes_results(small_report):
    other = run_experiment(ExperimentConfig(trials_per_block=5, blocks=1, seed=4))
    assert other.to_json() != small_report.to_json()


def test_report_json_roundtrip(small_report, tmp_path):
    path = tmp_path / "r.json"
    path.write_text(small_report.to_json())
    again = ExperimentReport.load(path)
    assert again.to_json() == small_report.to_json()


def test_report_bad_schema(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(SchemaError):
        ExperimentReport.load(path)


# ---- aggregation -----------------------------------------------------------

def result(cell="c", trial=0, curve=None, excluded=False, alpha=0.3):
    curve = curve if curve is not None else [0.0] * 11
    return TrialResult(cell, trial, {"modality": "m"}, 13, mean_asynchrony=0.01,
                       curve=list(curve), estimate={"alpha_hat": alpha}, excluded=excluded)


def test_aggregate_single_trial():
    s = aggregate([result(curve=np.arange(11) / 100)])
    assert s.n_included == 1
    np.testing.assert_allclose(s.curve_mean, np.arange(11) / 100)
    assert all(math.isnan(v) for v in s.curve_sem)
    assert s.stats["alpha_hat"] == {"mean": 0.3, "sd": None, "sem": None, "n": 1}


def test_aggregate_symmetric_curves_cancel():
    v = np.linspace(-0.05, 0.12, 11)
    s = aggregate([result(trial=0, curve=v), result(trial=1, curve=-v)])
    np.testing.assert_allclose(s.curve_mean, 0.0, atol=1e-15)
    np.testing.assert_allclose(s.curve_sem, np.abs(v), rtol=1e-12)


def test_aggregate_ignores_excluded():
    s = aggregate([result(trial=0, alpha=0.2), result(trial=1, alpha=0.9, excluded=True)])
    assert s.n_included == 1 and s.n_excluded == 1
    assert s.stats["alpha_hat"]["mean"] == 0.2


def test_aggregate_all_excluded():
    with pytest.raises(EmptyCell):
        aggregate([result(excluded=True), result(trial=1, excluded=True)])


def test_gap_exclusion():
    s = generate_cue_schedule(0.8, 30, seed=1)
    p, _ = simulate_agent(PhaseCorrectionParams(0.4), s, seed=2)
    holey = replace(p, times=np.delete(p.times, [5, 8, 20]), feet=tuple(np.delete(p.feet, [5, 8, 20])))
    res = analyze_onsets(holey, s.onsets, s.perturbed_step, 0.8)
    assert res.excluded and "multiple steps missed" in res.reason
    ok = analyze_onsets(holey, s.onsets, s.perturbed_step, 0.8, AnalysisOptions(max_gaps=3))
    assert not ok.excluded and ok.n_gaps == 3


# ---- file pipeline ----------------------------------------------------------

@pytest.fixture
def one_trial():
    s = generate_cue_schedule(0.8, 30, PerturbationSpec("positive"), seed=21)
    p, _ = simulate_agent(PhaseCorrectionParams(0.4), s, seed=22)
    return s, p


def test_onset_csv_matches_in_memory(one_trial, tmp_path):
    s, p = one_trial
    path = io.write_onsets_csv(tmp_path / "on.csv", p, s.onsets)
    from_file = analyze_files(onsets=path, nominal_isi=0.8, perturbed_step=s.perturbed_step)
    direct = analyze_onsets(p, s.onsets, s.perturbed_step, 0.8)
    assert from_file.to_dict() == direct.to_dict()


def test_perturbed_step_located_from_cue(one_trial, tmp_path):
    s, p = one_trial
    path = io.write_onsets_csv(tmp_path / "on.csv", p, s.onsets)
    assert analyze_files(onsets=path).perturbed_step == s.perturbed_step


def test_trace_files_at_different_rates(one_trial, tmp_path):
    s, p = one_trial
    pt = io.write_trace_csv(tmp_path / "p.csv", synthesize_trace(p, 100, 0.15, 0.2, 0.001, 1))
    ct = io.write_trace_csv(tmp_path / "c.csv", synthesize_trace(s.onsets, 75, 0.15, 0.2, 0.001, 2))
    res = analyze_files(participant_trace=pt, cue_trace=ct, nominal_isi=0.8,
                        perturbed_step=s.perturbed_step)
    direct = analyze_onsets(p, s.onsets, s.perturbed_step, 0.8)
    assert not res.excluded
    # the same crossing delay shifts both streams, so asynchronies survive detection
    np.testing.assert_allclose(res.curve, direct.curve, atol=0.006)
    assert res.mean_asynchrony == pytest.approx(direct.mean_asynchrony, abs=0.006)


def test_metronome_fallback(one_trial, tmp_path):
    s, p = one_trial
    path = io.write_onsets_csv(tmp_path / "on.csv", p)
    res = analyze_files(onsets=path, nominal_isi=0.8, perturbed_step=s.perturbed_step)
    assert res.perturbed_step == s.perturbed_step
    with pytest.raises(MissingCue):
        analyze_files(onsets=path, perturbed_step=s.perturbed_step)


def test_onsets_csv_roundtrip_exact(one_trial, tmp_path):
    s, p = one_trial
    back = io.read_onsets_csv(io.write_onsets_csv(tmp_path / "on.csv", p, s.onsets))
    np.testing.assert_array_equal(back["participant"].times, p.times)
    np.testing.assert_array_equal(back["cue"].times, s.onsets.times)
    assert back["participant"].feet == p.feet


def test_schema_error_names_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("onset_time_s,side,source\n0.1,L,participant\n")
    with pytest.raises(SchemaError, match="'foot'") as err:
        io.read_onsets_csv(path)
    assert err.value.line == 1


def test_schema_error_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# schema_version=1\nonset_time_s,foot,source\n0.1,L,participant\nx,R,participant\n")
    with pytest.raises(SchemaError) as err:
        io.read_onsets_csv(path)
    assert err.value.line == 4


# ---- config -----------------------------------------------------------------

def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict(IDEAL)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_config_errors_carry_paths():
    bad = dict(IDEAL, tempos=[0.8, -1], directions=["sideways"], bogus=1)
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict(bad)
    paths = {p for p, _ in err.value.problems}
    assert {"tempos[1]", "directions[0]", "bogus"} <= paths


def test_config_unknown_modality():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"modalities": ["Haptic"]})
    assert err.value.problems[0][0] == "modalities[0]"


# ---- report emission ---------------------------------------------------------

def test_emit_report_counts(small_report, tmp_path):
    paths = emit_report(small_report, ("json", "csv", "svg"), tmp_path)
    assert len(paths) == 1 + 8 + 8
    assert len(list((tmp_path / "curves").glob("*.csv"))) == 8
    assert len(list((tmp_path / "plots").glob("*.svg"))) == 8
    assert emit_report(small_report, (), tmp_path / "none") == []
    assert not (tmp_path / "none").exists()


def test_golden_curve_csv():
    """Noiseless alpha=0.5 agent: the mean curve halves every step after +1."""
    report = run_experiment(ExperimentConfig.from_dict(IDEAL))
    (summary,) = report.summaries
    expected = [0, 0, 0, 0, 0, 0.12, 0.06, 0.03, 0.015, 0.0075, 0.00375]
    np.testing.assert_allclose(summary.curve_mean, expected, atol=1e-12)
    golden = (GOLDEN / "Ideal_800ms_negative.csv").read_text()
    lines = golden.splitlines()
    assert lines[:2] == ["# schema_version=1", "offset,mean_relative_asynchrony_s,sem_s,n"]
    for line, off, value in zip(lines[2:], range(-4, 7), expected):
        o, m, _, n = line.split(",")
        assert int(o) == off and float(m) == pytest.approx(value, abs=1e-12) and n == "2"
    assert curve_csv_text(summary) == golden
