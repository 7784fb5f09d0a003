"""Cue schedules, phase-correcting stepping agents and synthetic heel traces."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BumpOverlap, InvalidWindow
from .timing import CUE, PARTICIPANT, AsynchronySeries, ISISeries, OnsetSeries

POSITIVE = "positive"
NEGATIVE = "negative"
DIRECTIONS = (POSITIVE, NEGATIVE)


@dataclass(frozen=True)
class PerturbationSpec:
    """One cue interval lengthened (positive) or shortened (negative) by ``magnitude``.

    ``window`` is the inclusive range of 1-based step numbers at which the
    perturbed interval may start.
    """

    direction: str = NEGATIVE
    magnitude: float = 0.15
    window: tuple = (10, 16)

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not 0 < self.magnitude < 1:
            raise ValueError(f"magnitude must lie in (0, 1), got {self.magnitude}")
        lo, hi = (int(w) for w in self.window)
        if lo > hi:
            raise InvalidWindow(f"window lower bound {lo} exceeds upper bound {hi}")
        object.__setattr__(self, "window", (lo, hi))

    @property
    def factor(self):
        return 1 + self.magnitude if self.direction == POSITIVE else 1 - self.magnitude


@dataclass(frozen=True)
class CueSchedule:
    """The avatar's step onsets; interval ``perturbed_step`` runs from that step to the next."""

    nominal_isi: float
    n_steps: int
    onsets: OnsetSeries
    intervals: ISISeries
    perturbation: PerturbationSpec
    perturbed_step: int

    @property
    def perturbed_interval(self):
        return float(self.intervals.intervals[self.perturbed_step - 1])


def generate_cue_schedule(nominal_isi, n_steps=30, perturbation=None, cue_jitter_sd=0.0,
                          seed=None, start=0.0) -> CueSchedule:
    perturbation = perturbation or PerturbationSpec()
    if nominal_isi <= 0:
        raise ValueError(f"nominal_isi must be positive, got {nominal_isi}")
    lo, hi = perturbation.window
    if lo < 1 or hi > n_steps - 1:
        raise InvalidWindow(f"window {lo}..{hi} outside 1..{n_steps - 1}")
    if n_steps <= hi + 6:
        raise InvalidWindow(
            f"n_steps={n_steps} leaves no room for 6 analysed steps after window end {hi}"
        )
    rng = np.random.default_rng(seed)
    T = int(rng.integers(lo, hi + 1))
    intervals = np.full(n_steps - 1, float(nominal_isi))
    if cue_jitter_sd > 0:
        intervals = intervals + rng.normal(0.0, cue_jitter_sd, n_steps - 1)
    intervals[T - 1] *= perturbation.factor
    times = start + np.concatenate(([0.0], np.cumsum(intervals)))
    return CueSchedule(
        nominal_isi=float(nominal_isi),
        n_steps=int(n_steps),
        onsets=OnsetSeries(times, source=CUE),
        intervals=ISISeries(intervals, CUE),
        perturbation=perturbation,
        perturbed_step=T,
    )


@dataclass(frozen=True)
class PhaseCorrectionParams:
    """Correction gain plus timekeeper and motor-delay noise (seconds).

    ``timekeeper_mean=None`` makes the timekeeper run at the cue's nominal
    interval.
    """

    alpha: float
    timekeeper_mean: float | None = None
    timekeeper_sd: float = 0.020
    motor_mean: float = 0.0
    motor_sd: float = 0.010

    def __post_init__(self):
        if not 0 <= self.alpha <= 2:
            raise ValueError(f"alpha must lie in [0, 2], got {self.alpha}")
        if self.timekeeper_sd < 0 or self.motor_sd < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.timekeeper_mean is not None and self.timekeeper_mean <= 0:
            raise ValueError("timekeeper_mean must be positive")

    def noiseless(self):
        return replace(self, timekeeper_sd=0.0, motor_sd=0.0)


@dataclass(frozen=True)
class AgentPreset:
    name: str
    params: PhaseCorrectionParams
    description: str = ""


# Auditory-visual agents correct more and vary less than visual-only ones;
# slow-tempo gains span the range reported for the stepping task.
PRESETS = {
    p.name: p
    for p in (
        AgentPreset("AuditoryVisual-Slow", PhaseCorrectionParams(0.405, None, 0.015, 0.0, 0.008)),
        AgentPreset("AuditoryVisual-Fast", PhaseCorrectionParams(0.38, None, 0.015, 0.0, 0.008)),
        AgentPreset("VisualOnly-Slow", PhaseCorrectionParams(0.265, None, 0.025, 0.0, 0.012)),
        AgentPreset("VisualOnly-Fast", PhaseCorrectionParams(0.05, None, 0.030, 0.0, 0.015)),
    )
}


def tempo_label(nominal_isi):
    return "Fast" if nominal_isi < 0.6 else "Slow"


def resolve_preset(name, nominal_isi=None, presets=None) -> AgentPreset:
    """Look up ``name``, trying ``<name>-Fast``/``<name>-Slow`` for bare modality names."""
    table = dict(PRESETS)
    table.update(presets or {})
    if name in table:
        return table[name]
    if nominal_isi is not None:
        key = f"{name}-{tempo_label(nominal_isi)}"
        if key in table:
            return table[key]
    raise KeyError(f"unknown agent preset {name!r}")


def simulate_agent(params: PhaseCorrectionParams, cue: CueSchedule, initial_asynchrony=0.0,
                   seed=None):
    """Step along with ``cue`` under linear phase correction.

    Iterates ``A[n+1] = (1 - alpha) A[n] + T[n] + M[n+1] - M[n] - C[n]`` and
    returns the participant onsets together with the ground-truth asynchrony
    series (every participant step paired with the cue step of equal index).
    """
    rng = np.random.default_rng(seed)
    C = cue.intervals.intervals
    n = cue.n_steps
    mu_t = cue.nominal_isi if params.timekeeper_mean is None else params.timekeeper_mean
    timekeeper = rng.normal(mu_t, params.timekeeper_sd, n - 1)
    motor = rng.normal(params.motor_mean, params.motor_sd, n)

    keep = 1.0 - params.alpha
    A = np.empty(n)
    A[0] = initial_asynchrony
    for k in range(n - 1):
        A[k + 1] = keep * A[k] + timekeeper[k] + motor[k + 1] - motor[k] - C[k]

    c = cue.onsets.times
    participant = OnsetSeries(c + A, cue.onsets.feet, PARTICIPANT)
    idx = np.arange(n)
    truth = AsynchronySeries(idx, idx, participant.times, c)
    return participant, truth


def stationary_asynchrony(params: PhaseCorrectionParams, cue_isi):
    """Long-run mean and SD of the asynchrony for a constant cue interval."""
    mu_t = cue_isi if params.timekeeper_mean is None else params.timekeeper_mean
    a = params.alpha
    if a <= 0 or a >= 2:
        return float("nan"), float("inf")
    mean = (mu_t - cue_isi) / a
    st2, sm2 = params.timekeeper_sd ** 2, params.motor_sd ** 2
    var = (st2 + a * a * sm2) / (1 - (1 - a) ** 2) + sm2
    return mean, float(np.sqrt(var))


@dataclass(frozen=True)
class MarkerTrace:
    """Vertical heel-marker height per foot: ``channels[foot] = (timestamps, heights)``."""

    channels: dict
    sample_rate: float
    source: str = PARTICIPANT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        chans = {}
        for foot, (t, y) in sorted(self.channels.items()):
            t = np.array(t, dtype=float)
            y = np.array(y, dtype=float)
            if t.shape != y.shape:
                raise ValueError(f"foot {foot}: {len(t)} timestamps for {len(y)} heights")
            t.setflags(write=False)
            y.setflags(write=False)
            chans[foot] = (t, y)
        object.__setattr__(self, "channels", chans)

    def __len__(self):
        return sum(len(t) for t, _ in self.channels.values())


def raised_cosine(t, onset, amplitude, duration):
    x = (np.asarray(t, dtype=float) - onset) / duration
    inside = (x >= 0) & (x <= 1)
    return np.where(inside, 0.5 * amplitude * (1 - np.cos(2 * np.pi * x)), 0.0)


def crossing_delay(amplitude, duration, threshold):
    """Time after bump start at which a raised-cosine bump first exceeds ``threshold``."""
    if not 0 < threshold < amplitude:
        raise ValueError("threshold must lie strictly between 0 and the bump amplitude")
    return duration / (2 * np.pi) * float(np.arccos(1 - 2 * threshold / amplitude))


def synthesize_trace(onsets: OnsetSeries, sample_rate=100.0, step_amplitude=0.10,
                     step_duration=0.30, noise_sd=0.0, seed=None, duration=None,
                     tail=0.5) -> MarkerTrace:
    """Heel height traces with one raised-cosine lift starting at every onset.

    Sampling starts at t=0 and runs to ``duration`` (default: last bump end
    plus ``tail``).  Heights are clipped at the floor after noise is added.
    """
    times = onsets.times
    if len(times) > 1 and step_duration >= np.min(np.diff(times)):
        raise BumpOverlap(
            f"step_duration {step_duration} s is not shorter than the minimum ISI "
            f"{np.min(np.diff(times)):.6f} s"
        )
    if duration is None:
        duration = (times[-1] + step_duration + tail) if len(times) else tail
    n = int(np.floor(duration * sample_rate + 1e-9)) + 1
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    channels = {}
    feet = np.array(onsets.feet)
    for foot in ("L", "R"):
        y = np.zeros(n)
        for t0 in times[feet == foot] if len(times) else ():
            lo = max(int(np.floor(t0 * sample_rate)), 0)
            hi = min(int(np.ceil((t0 + step_duration) * sample_rate)) + 1, n)
            y[lo:hi] += raised_cosine(t[lo:hi], t0, step_amplitude, step_duration)
        if noise_sd > 0:
            y = np.maximum(y + rng.normal(0.0, noise_sd, n), 0.0)
        channels[foot] = (t, y)
    return MarkerTrace(channels, float(sample_rate), onsets.source)
