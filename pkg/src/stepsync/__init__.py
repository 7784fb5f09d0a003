"""Simulation and analysis of stepping in time with a phase-perturbed cue."""
from .detect import DetectorConfig, detect_onsets
from . import errors
from .estimate import (
    PhaseCorrectionEstimate,
    fit_phase_correction,
    fit_pooled,
    percent_correction,
)
from .harness import (
    AnalysisOptions,
    ConditionSummary,
    ExperimentConfig,
    ExperimentReport,
    TrialResult,
    aggregate,
    analyze_files,
    analyze_onsets,
    load_config,
    run_experiment,
)
from .report import emit_report
from .simulate import (
    PRESETS,
    AgentPreset,
    CueSchedule,
    MarkerTrace,
    PerturbationSpec,
    PhaseCorrectionParams,
    crossing_delay,
    generate_cue_schedule,
    simulate_agent,
    synthesize_trace,
)
from .timing import (
    AsynchronySeries,
    ISISeries,
    OnsetSeries,
    RelativeAsynchronyCurve,
    compute_isi,
    match_onsets,
    relative_asynchrony,
    summarize_pre_perturbation,
    unwrap_asynchronies,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "DetectorConfig",
    "detect_onsets",
    "emit_report",
    "PhaseCorrectionEstimate",
    "fit_phase_correction",
    "fit_pooled",
    "percent_correction",
    "AnalysisOptions",
    "ConditionSummary",
    "ExperimentConfig",
    "ExperimentReport",
    "TrialResult",
    "aggregate",
    "analyze_files",
    "analyze_onsets",
    "load_config",
    "run_experiment",
    "PRESETS",
    "AgentPreset",
    "CueSchedule",
    "MarkerTrace",
    "PerturbationSpec",
    "PhaseCorrectionParams",
    "crossing_delay",
    "generate_cue_schedule",
    "simulate_agent",
    "synthesize_trace",
    "AsynchronySeries",
    "ISISeries",
    "OnsetSeries",
    "RelativeAsynchronyCurve",
    "compute_isi",
    "match_onsets",
    "relative_asynchrony",
    "summarize_pre_perturbation",
    "unwrap_asynchronies",
]
