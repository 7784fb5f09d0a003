"""Batch experiment harness: condition grid, per-trial pipeline and aggregation."""
from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

import numpy as np

from .detect import DetectorConfig, detect_onsets
from .errors import (
    BumpOverlap,
    ConfigError,
    EmptyCell,
    InsufficientData,
    MissingCue,
    SchemaError,
    StepSyncError,
)
from .estimate import fit_phase_correction, percent_correction
from .io import read_onsets_csv, read_trace_csv
from .simulate import (
    DIRECTIONS,
    AgentPreset,
    PerturbationSpec,
    PhaseCorrectionParams,
    generate_cue_schedule,
    resolve_preset,
    simulate_agent,
    synthesize_trace,
)
from .timing import (
    CUE,
    CURVE_OFFSETS,
    PARTICIPANT,
    OnsetSeries,
    compute_isi,
    match_onsets,
    relative_asynchrony,
    summarize_pre_perturbation,
    unwrap_asynchronies,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AnalysisOptions:
    exclude_first: int = 3
    max_gaps: int = 2
    fit_window: object = "post"
    bias_correction: bool = True
    n_boot: int = 200
    perturbation_magnitude: float = 0.15


@dataclass(frozen=True)
class TraceOptions:
    participant_rate: float = 100.0
    cue_rate: float = 75.0
    step_amplitude: float = 0.15
    step_duration: float = 0.20
    noise_sd: float = 0.001
    threshold_height: float | None = None
    interpolate: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    tempos: tuple = (0.4, 0.8)
    modalities: tuple = ("VisualOnly", "AuditoryVisual")
    directions: tuple = ("negative", "positive")
    trials_per_block: int = 5
    blocks: int = 4
    n_steps: int = 30
    magnitude: float = 0.15
    window: tuple = (10, 16)
    cue_jitter_sd: float = 0.005
    initial_asynchrony: float = 0.0
    seed: int = 0
    use_traces: bool = False
    traces: TraceOptions = field(default_factory=TraceOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    presets: dict = field(default_factory=dict)
    workers: int = 1

    @property
    def trials_per_cell(self):
        return self.trials_per_block * self.blocks

    def cells(self):
        return [Cell(m, float(t), d) for t, m, d in product(self.tempos, self.modalities, self.directions)]

    def to_dict(self):
        d = asdict(self)
        d["presets"] = {name: asdict(p.params) for name, p in sorted(self.presets.items())}
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, data):
        problems = []
        if not isinstance(data, dict):
            raise ConfigError([("$", "configuration must be an object")])
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            problems.append(("schema_version", f"unsupported version {version!r}"))
        known = {f.name for f in fields(cls)} | {"schema_version"}
        for key in sorted(set(data) - known):
            problems.append((key, "unknown field"))

        kw = {}

        def number(path, value, positive=False, integer=False, minimum=None):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if ok and integer and not float(value).is_integer():
                ok = False
            if not ok:
                problems.append((path, "must be an integer" if integer else "must be a number"))
                return None
            if positive and value <= 0:
                problems.append((path, "must be positive"))
            if minimum is not None and value < minimum:
                problems.append((path, f"must be >= {minimum}"))
            return int(value) if integer else float(value)

        if "tempos" in data:
            tempos = data["tempos"]
            if not isinstance(tempos, list) or not tempos:
                problems.append(("tempos", "must be a non-empty list"))
            else:
                kw["tempos"] = tuple(number(f"tempos[{i}]", t, positive=True) for i, t in enumerate(tempos))
        for key in ("modalities", "directions"):
            if key in data:
                vals = data[key]
                if not isinstance(vals, list) or not vals:
                    problems.append((key, "must be a non-empty list"))
                    continue
                for i, v in enumerate(vals):
                    if not isinstance(v, str):
                        problems.append((f"{key}[{i}]", "must be a string"))
                    elif key == "directions" and v not in DIRECTIONS:
                        problems.append((f"{key}[{i}]", f"must be one of {list(DIRECTIONS)}"))
                kw[key] = tuple(vals)
        for key in ("trials_per_block", "blocks"):
            if key in data:
                kw[key] = number(key, data[key], integer=True, minimum=1)
        if "n_steps" in data:
            kw["n_steps"] = number("n_steps", data["n_steps"], integer=True, minimum=2)
        if "magnitude" in data:
            m = number("magnitude", data["magnitude"])
            if m is not None and not 0 < m < 1:
                problems.append(("magnitude", "must lie in (0, 1)"))
            kw["magnitude"] = m
        if "window" in data:
            w = data["window"]
            if not (isinstance(w, list) and len(w) == 2):
                problems.append(("window", "must be [first, last]"))
            else:
                kw["window"] = tuple(number(f"window[{i}]", v, integer=True, minimum=1) for i, v in enumerate(w))
        for key in ("cue_jitter_sd",):
            if key in data:
                kw[key] = number(key, data[key], minimum=0)
        if "initial_asynchrony" in data:
            kw["initial_asynchrony"] = number("initial_asynchrony", data["initial_asynchrony"])
        if "seed" in data:
            kw["seed"] = number("seed", data["seed"], integer=True, minimum=0)
        if "workers" in data:
            kw["workers"] = number("workers", data["workers"], integer=True, minimum=1)
        if "use_traces" in data:
            if not isinstance(data["use_traces"], bool):
                problems.append(("use_traces", "must be true or false"))
            kw["use_traces"] = bool(data["use_traces"])
        for key, klass in (("traces", TraceOptions), ("analysis", AnalysisOptions)):
            if key in data:
                sub = data[key]
                if not isinstance(sub, dict):
                    problems.append((key, "must be an object"))
                    continue
                names = {f.name for f in fields(klass)}
                for k in sorted(set(sub) - names):
                    problems.append((f"{key}.{k}", "unknown field"))
                vals = {k: v for k, v in sub.items() if k in names}
                if "fit_window" in vals and isinstance(vals["fit_window"], list):
                    vals["fit_window"] = tuple(vals["fit_window"])
                try:
                    kw[key] = klass(**vals)
                except (TypeError, ValueError) as exc:
                    problems.append((key, str(exc)))
        if "presets" in data:
            presets = {}
            if not isinstance(data["presets"], dict):
                problems.append(("presets", "must be an object"))
            else:
                for name, params in sorted(data["presets"].items()):
                    try:
                        presets[name] = AgentPreset(name, PhaseCorrectionParams(**params))
                    except (TypeError, ValueError) as exc:
                        problems.append((f"presets.{name}", str(exc)))
            kw["presets"] = presets

        if not problems:
            cfg = cls(**kw)
            for i, m in enumerate(cfg.modalities):
                for t in cfg.tempos:
                    try:
                        resolve_preset(m, t, cfg.presets)
                    except KeyError as exc:
                        problems.append((f"modalities[{i}]", str(exc.args[0])))
                        break
            lo, hi = cfg.window
            if lo > hi or hi > cfg.n_steps - 7:
                problems.append(("window", "must satisfy 1 <= first <= last <= n_steps - 7"))
            fw = cfg.analysis.fit_window
            if not (fw in ("post", "whole") or (isinstance(fw, tuple) and len(fw) == 2)):
                problems.append(("analysis.fit_window", "must be 'post', 'whole' or [first, last]"))
            if not problems:
                return cfg
        raise ConfigError(problems)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([("$", f"cannot read {path}: {exc.strerror}")]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"{path}:{exc.lineno}: invalid JSON ({exc.msg})")]) from exc
    return ExperimentConfig.from_dict(data)


@dataclass(frozen=True)
class Cell:
    modality: str
    tempo: float
    direction: str

    @property
    def id(self):
        return f"{self.modality}_{round(self.tempo * 1000)}ms_{self.direction}"


def trial_seed(master_seed, cell_id, trial_index):
    """Independent seed stream for one trial of one cell."""
    return np.random.SeedSequence([int(master_seed), zlib.crc32(cell_id.encode()), int(trial_index)])


def _clean(x):
    if isinstance(x, float):
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


@dataclass
class TrialResult:
    cell: str
    trial: int
    labels: dict = field(default_factory=dict)
    perturbed_step: int | None = None
    cue_mean_isi: float = float("nan")
    participant_mean_isi: float = float("nan")
    participant_sd_isi: float = float("nan")
    mean_asynchrony: float = float("nan")
    sd_asynchrony: float = float("nan")
    n_pre: int = 0
    n_gaps: int = 0
    unwrap_applied: bool = False
    curve_offsets: list = field(default_factory=lambda: list(CURVE_OFFSETS))
    curve: list | None = None
    baseline_mean: float = float("nan")
    estimate: dict | None = None
    percent_correction: float | None = None
    excluded: bool = False
    reason: str = ""

    @property
    def alpha_hat(self):
        return float("nan") if self.estimate is None else self.estimate["alpha_hat"]

    def to_dict(self):
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("cue_mean_isi", "participant_mean_isi", "participant_sd_isi",
                    "mean_asynchrony", "sd_asynchrony", "baseline_mean"):
            if d.get(key) is None:
                d[key] = float("nan")
        if d.get("curve") is not None:
            d["curve"] = [float("nan") if v is None else v for v in d["curve"]]
        return cls(**d)


def analyze_onsets(participant: OnsetSeries, cue: OnsetSeries, perturbed_step, nominal_isi,
                   options: AnalysisOptions = AnalysisOptions(), cell="external", trial=0,
                   labels=None) -> TrialResult:
    """Match, unwrap, summarize and fit one trial of onset data."""
    T = int(perturbed_step)
    res = TrialResult(cell=cell, trial=trial, labels=dict(labels or {}), perturbed_step=T)
    ex = options.exclude_first
    raw = match_onsets(participant, cue)
    series = unwrap_asynchronies(raw, nominal_isi)
    res.unwrap_applied = series.unwrap_applied
    res.n_gaps = series.gap_count(lo=ex)
    cue_iv = compute_isi(cue).intervals
    res.cue_mean_isi = float(np.mean(cue_iv[ex:T - 1])) if T - 1 > ex else float("nan")
    try:
        summary = summarize_pre_perturbation(series, compute_isi(participant), T, ex)
        curve = relative_asynchrony(series, T, ex)
    except StepSyncError as exc:
        res.excluded, res.reason = True, f"{type(exc).__name__}: {exc}"
        return res
    res.participant_mean_isi = summary.mean_isi
    res.participant_sd_isi = summary.sd_isi
    res.mean_asynchrony = summary.mean_asynchrony
    res.sd_asynchrony = summary.sd_asynchrony
    res.n_pre = summary.n_used
    res.curve = curve.values.tolist()
    res.baseline_mean = curve.baseline_mean
    try:
        res.percent_correction = percent_correction(curve)
    except StepSyncError:
        res.percent_correction = None
    if res.n_gaps > options.max_gaps:
        res.excluded, res.reason = True, f"multiple steps missed ({res.n_gaps} gaps)"
        return res
    try:
        est = fit_phase_correction(series, T, window=options.fit_window, exclude_first=ex,
                                   bias_correction=options.bias_correction, n_boot=options.n_boot)
    except StepSyncError as exc:
        res.excluded, res.reason = True, f"{type(exc).__name__}: {exc}"
        return res
    res.estimate = est.to_dict()
    return res


def run_trial(config: ExperimentConfig, cell: Cell, trial_index: int) -> TrialResult:
    seq = trial_seed(config.seed, cell.id, trial_index)
    cue_seed, agent_seed, trace_seed = seq.spawn(3)
    preset = resolve_preset(cell.modality, cell.tempo, config.presets)
    labels = {"modality": cell.modality, "tempo": cell.tempo, "direction": cell.direction,
              "preset": preset.name}
    perturbation = PerturbationSpec(cell.direction, config.magnitude, config.window)
    schedule = generate_cue_schedule(cell.tempo, config.n_steps, perturbation,
                                     config.cue_jitter_sd, cue_seed)
    participant, _ = simulate_agent(preset.params, schedule, config.initial_asynchrony, agent_seed)
    cue = schedule.onsets
    if config.use_traces:
        tr = config.traces
        p_seed, c_seed = trace_seed.spawn(2)
        try:
            p_trace = synthesize_trace(participant, tr.participant_rate, tr.step_amplitude,
                                       tr.step_duration, tr.noise_sd, p_seed)
            c_trace = synthesize_trace(cue, tr.cue_rate, tr.step_amplitude, tr.step_duration,
                                       tr.noise_sd, c_seed)
        except BumpOverlap as exc:
            return TrialResult(cell.id, trial_index, labels, schedule.perturbed_step,
                               excluded=True, reason=f"BumpOverlap: {exc}")
        det = DetectorConfig(tr.threshold_height, interpolate=tr.interpolate, nominal_isi=cell.tempo)
        participant = detect_onsets(p_trace, det)
        cue = detect_onsets(c_trace, det)
        if len(cue) != schedule.n_steps:
            return TrialResult(cell.id, trial_index, labels, schedule.perturbed_step, excluded=True,
                               reason=f"cue detection found {len(cue)} of {schedule.n_steps} steps")
    return analyze_onsets(participant, cue, schedule.perturbed_step, cell.tempo, config.analysis,
                          cell.id, trial_index, labels)


def _run_task(args):
    config, cell, k = args
    return run_trial(config, cell, k)


@dataclass
class ConditionSummary:
    cell: str
    labels: dict
    n_included: int
    n_excluded: int
    stats: dict
    curve_offsets: list
    curve_mean: list
    curve_sem: list
    curve_n: list

    def to_dict(self):
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("curve_mean", "curve_sem"):
            d[key] = [float("nan") if v is None else v for v in d[key]]
        return cls(**d)


SUMMARY_METRICS = ("cue_mean_isi", "participant_mean_isi", "mean_asynchrony", "sd_asynchrony",
                   "alpha_hat", "percent_correction")


def _describe(values):
    x = np.array([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if not len(x):
        return {"mean": None, "sd": None, "sem": None, "n": 0}
    if len(x) == 1:
        return {"mean": float(x[0]), "sd": None, "sem": None, "n": 1}
    sd = float(np.std(x, ddof=1))
    return {"mean": float(np.mean(x)), "sd": sd, "sem": sd / math.sqrt(len(x)), "n": len(x)}


def aggregate(trials) -> ConditionSummary:
    """Summarize the trials of one condition cell over its included trials."""
    trials = list(trials)
    if not trials:
        raise EmptyCell("<none>")
    cell = trials[0].cell
    if any(t.cell != cell for t in trials):
        raise ValueError("aggregate expects trials from a single cell")
    used = [t for t in sorted(trials, key=lambda t: t.trial) if not t.excluded]
    if not used:
        raise EmptyCell(cell)
    stats = {m: _describe(getattr(t, m) for t in used) for m in SUMMARY_METRICS}
    offsets = list(used[0].curve_offsets)
    curves = np.array([t.curve for t in used], dtype=float)
    n = np.sum(~np.isnan(curves), axis=0)
    mean = np.full(len(offsets), np.nan)
    sem = np.full(len(offsets), np.nan)
    for k in range(len(offsets)):
        col = curves[~np.isnan(curves[:, k]), k]
        if len(col):
            mean[k] = np.mean(col)
        if len(col) > 1:
            sem[k] = np.std(col, ddof=1) / math.sqrt(len(col))
    return ConditionSummary(cell, dict(used[0].labels), len(used), len(trials) - len(used), stats,
                            offsets, mean.tolist(), sem.tolist(), n.astype(int).tolist())


@dataclass
class ExperimentReport:
    config: dict
    trials: list
    summaries: list
    errors: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config": _clean(self.config),
            "trials": [t.to_dict() for t in self.trials],
            "summaries": [s.to_dict() for s in self.summaries],
            "errors": dict(sorted(self.errors.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported results schema_version {d.get('schema_version')!r}")
        return cls(
            config=d["config"],
            trials=[TrialResult.from_dict(t) for t in d["trials"]],
            summaries=[ConditionSummary.from_dict(s) for s in d["summaries"]],
            errors=d.get("errors", {}),
        )

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"malformed results file ({exc})", path) from exc


def run_experiment(config: ExperimentConfig, workers=None) -> ExperimentReport:
    """Every trial of every condition cell, then a per-cell summary.

    Trials are independent and may run in worker processes; results are
    ordered by cell and trial index so the report does not depend on
    ``workers``.
    """
    workers = config.workers if workers is None else workers
    cells = config.cells()
    tasks = [(config, c, k) for c in cells for k in range(config.trials_per_cell)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_task, tasks, chunksize=8))
    else:
        trials = [_run_task(t) for t in tasks]
    order = {c.id: i for i, c in enumerate(cells)}
    trials.sort(key=lambda t: (order[t.cell], t.trial))
    summaries, errors = [], {}
    for c in cells:
        try:
            summaries.append(aggregate([t for t in trials if t.cell == c.id]))
        except EmptyCell as exc:
            errors[c.id] = str(exc)
    recorded = config.to_dict()
    del recorded["workers"]  # execution detail; results must not depend on it
    return ExperimentReport(recorded, trials, summaries, errors)


def locate_perturbation(cue: OnsetSeries, magnitude=0.15):
    """Step number whose following interval departs most from the median interval."""
    iv = compute_isi(cue).intervals
    rel = np.abs(iv / np.median(iv) - 1.0)
    k = int(np.argmax(rel))
    if rel[k] < magnitude / 2:
        raise InsufficientData("no perturbed cue interval found; pass perturbed_step explicitly")
    return k + 1


def metronome(nominal_isi, n_steps, start=0.0):
    return OnsetSeries(start + nominal_isi * np.arange(n_steps), source=CUE)


def analyze_files(onsets=None, participant_trace=None, cue_trace=None, nominal_isi=None,
                  n_cue_steps=None, cue_start=0.0, perturbed_step=None,
                  options: AnalysisOptions = AnalysisOptions(), detector: DetectorConfig | None = None,
                  trial=0) -> TrialResult:
    """Run the trial pipeline on exported files.

    Participant onsets come from the ``participant`` rows of an onsets CSV or
    from a participant trace CSV; cue onsets from ``cue`` rows, a cue trace, or
    an ideal metronome given by ``nominal_isi``.  Each trace keeps its own
    timestamps, so streams recorded at different rates line up in time.
    """
    streams = read_onsets_csv(onsets) if onsets is not None else {}
    detector = detector or DetectorConfig(nominal_isi=nominal_isi)
    if participant_trace is not None:
        streams[PARTICIPANT] = detect_onsets(read_trace_csv(participant_trace, PARTICIPANT), detector)
    if cue_trace is not None:
        streams[CUE] = detect_onsets(read_trace_csv(cue_trace, CUE), detector)
    if PARTICIPANT not in streams:
        raise SchemaError("no participant onsets supplied")
    participant = streams[PARTICIPANT]
    if CUE in streams:
        cue = streams[CUE]
    elif nominal_isi is not None:
        n = n_cue_steps or int(math.ceil((participant.times[-1] - cue_start) / nominal_isi)) + 1
        cue = metronome(nominal_isi, n, cue_start)
    else:
        raise MissingCue("no cue onsets supplied and no nominal metronome interval declared")
    if len(cue) < 2:
        raise InsufficientData("cue stream has fewer than two onsets")
    if perturbed_step is None:
        perturbed_step = locate_perturbation(cue, options.perturbation_magnitude)
    isi = nominal_isi if nominal_isi is not None else float(np.median(compute_isi(cue).intervals))
    return analyze_onsets(participant, cue, perturbed_step, isi, options, "external", trial)
