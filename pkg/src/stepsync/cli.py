"""Command-line entry point: ``stepsync {simulate,detect,analyze,run,report}``.

Exit codes: 0 success, 1 validation error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .detect import DetectorConfig, detect_onsets
from .errors import ConfigError, StepSyncError
from .harness import (
    AnalysisOptions,
    ExperimentConfig,
    ExperimentReport,
    analyze_files,
    load_config,
    run_experiment,
    trial_seed,
)
from .report import emit_report
from .simulate import (
    PerturbationSpec,
    generate_cue_schedule,
    resolve_preset,
    simulate_agent,
    synthesize_trace,
)

FORMAT_CHOICES = {"csv": ("json", "csv"), "svg": ("svg",), "all": ("json", "csv", "svg")}


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_simulate(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    trials = args.trials if args.trials is not None else cfg.trials_per_cell
    for cell in cfg.cells():
        preset = resolve_preset(cell.modality, cell.tempo, cfg.presets)
        for k in range(trials):
            cue_seed, agent_seed, trace_seed = trial_seed(cfg.seed, cell.id, k).spawn(3)
            sched = generate_cue_schedule(cell.tempo, cfg.n_steps,
                                          PerturbationSpec(cell.direction, cfg.magnitude, cfg.window),
                                          cfg.cue_jitter_sd, cue_seed)
            participant, _ = simulate_agent(preset.params, sched, cfg.initial_asynchrony, agent_seed)
            stem = f"{cell.id}_trial{k:03d}"
            io.write_onsets_csv(out / f"{stem}_onsets.csv", participant, sched.onsets)
            written += 1
            if args.traces:
                tr = cfg.traces
                p_seed, c_seed = trace_seed.spawn(2)
                io.write_trace_csv(out / f"{stem}_participant_trace.csv",
                                   synthesize_trace(participant, tr.participant_rate, tr.step_amplitude,
                                                    tr.step_duration, tr.noise_sd, p_seed))
                io.write_trace_csv(out / f"{stem}_cue_trace.csv",
                                   synthesize_trace(sched.onsets, tr.cue_rate, tr.step_amplitude,
                                                    tr.step_duration, tr.noise_sd, c_seed))
    print(f"wrote {written} trials to {out}")
    return 0


def cmd_detect(args):
    trace = io.read_trace_csv(args.trace, args.source)
    cfg = DetectorConfig(threshold_height=args.threshold, interpolate=not args.no_interpolate,
                         nominal_isi=args.nominal_isi)
    onsets = detect_onsets(trace, cfg)
    io.write_onsets_csv(args.out, onsets)
    print(f"{len(onsets)} onsets -> {args.out}")
    return 0


def cmd_analyze(args):
    if not args.onsets and not args.participant_trace:
        raise ConfigError([("--onsets/--participant-trace", "one participant input is required")])
    opts = AnalysisOptions(exclude_first=args.exclude_first, fit_window=args.window)
    res = analyze_files(onsets=args.onsets, participant_trace=args.participant_trace,
                        cue_trace=args.cue_trace, nominal_isi=args.nominal_isi,
                        perturbed_step=args.perturbed_step, options=opts)
    text = json.dumps({"schema_version": 1, "trial": res.to_dict()}, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args):
    cfg = _config(args)
    report = run_experiment(cfg)
    formats = FORMAT_CHOICES[args.format] if args.format else ("json",)
    formats = tuple(dict.fromkeys(("json",) + formats))
    paths = emit_report(report, formats, args.out)
    n_ex = sum(t.excluded for t in report.trials)
    print(f"{len(report.trials)} trials ({n_ex} excluded), {len(paths)} files -> {args.out}")
    return 0


def cmd_report(args):
    report = ExperimentReport.load(args.results)
    paths = emit_report(report, FORMAT_CHOICES[args.format], args.out)
    print(f"{len(paths)} files -> {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="stepsync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="emit cue/participant onsets (and traces) per trial")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--trials", type=int, help="trials per cell (default: from config)")
    s.add_argument("--traces", action="store_true", help="also write heel-marker trace CSVs")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("detect", help="trace CSV -> onsets CSV")
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--source", choices=("participant", "cue"), default="participant")
    s.add_argument("--threshold", type=float)
    s.add_argument("--nominal-isi", type=float)
    s.add_argument("--no-interpolate", action="store_true")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("analyze", help="onset or trace files -> trial result JSON")
    s.add_argument("--onsets")
    s.add_argument("--participant-trace")
    s.add_argument("--cue-trace")
    s.add_argument("--nominal-isi", type=float)
    s.add_argument("--perturbed-step", type=int)
    s.add_argument("--exclude-first", type=int, default=3)
    s.add_argument("--window", choices=("post", "whole"), default="post")
    s.add_argument("--out")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("run", help="full experiment from a config file")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=tuple(FORMAT_CHOICES))
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="results.json -> curve CSVs and plots")
    s.add_argument("--results", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=tuple(FORMAT_CHOICES), default="all")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (StepSyncError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
