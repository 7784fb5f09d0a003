"""Temporal data model: onsets, intervals, asynchronies and their summaries.

Step numbers used in public functions (``T``, ``exclude_first``) are 1-based,
so step ``k`` is ``times[k - 1]``.  Array indices stored on the series objects
(``participant_index``, ``cue_index``) are ordinary 0-based positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySeries, InsufficientBaseline

PARTICIPANT = "participant"
CUE = "cue"
SOURCES = (PARTICIPANT, CUE)
FEET = ("L", "R")

CURVE_OFFSETS = tuple(range(-4, 7))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OnsetSeries:
    """Ordered step onsets (seconds) with the foot that produced each one."""

    times: np.ndarray
    feet: tuple = ()
    source: str = PARTICIPANT

    def __post_init__(self):
        times = _frozen(self.times).reshape(-1)
        object.__setattr__(self, "times", times)
        feet = tuple(self.feet) if len(self.feet) else alternating_feet(len(times))
        if len(feet) != len(times):
            raise ValueError(f"{len(feet)} foot labels for {len(times)} onsets")
        bad = set(feet) - set(FEET)
        if bad:
            raise ValueError(f"unknown foot labels {sorted(bad)}")
        object.__setattr__(self, "feet", feet)
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not np.all(np.isfinite(times)):
            raise ValueError("onset times must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("onset times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def shifted(self, offset):
        return OnsetSeries(self.times + offset, self.feet, self.source)

    def with_source(self, source):
        return OnsetSeries(self.times, self.feet, source)


def alternating_feet(n, first="L"):
    other = "R" if first == "L" else "L"
    return tuple(first if k % 2 == 0 else other for k in range(n))


@dataclass(frozen=True)
class ISISeries:
    intervals: np.ndarray
    source: str = PARTICIPANT

    def __post_init__(self):
        object.__setattr__(self, "intervals", _frozen(self.intervals).reshape(-1))
        if np.any(self.intervals <= 0):
            raise ValueError("inter-step intervals must be positive")

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class AsynchronySeries:
    """Participant/cue onset pairs and their signed asynchronies.

    Positive asynchrony means the participant stepped after the cue.  The
    onset times of both streams are carried along so that pairs can be
    re-assigned during unwrapping.  ``breaks`` holds pair positions ``k`` at
    which continuity with pair ``k - 1`` could not be established.
    """

    participant_index: np.ndarray
    cue_index: np.ndarray
    participant_times: np.ndarray
    cue_times: np.ndarray
    unwrap_applied: bool = False
    gaps: tuple = ()
    breaks: tuple = ()
    asynchrony: np.ndarray = field(init=False)

    def __post_init__(self):
        pi = _frozen(self.participant_index, int).reshape(-1)
        ci = _frozen(self.cue_index, int).reshape(-1)
        pt = _frozen(self.participant_times).reshape(-1)
        ct = _frozen(self.cue_times).reshape(-1)
        if len(pi) != len(ci):
            raise ValueError("participant_index and cue_index differ in length")
        if np.any(np.diff(ci) <= 0) or np.any(np.diff(pi) <= 0):
            raise ValueError("pairs must be strictly increasing in both indices")
        for name, val in (("participant", pi), ("cue", ci)):
            times = pt if name == "participant" else ct
            if len(val) and (val.min() < 0 or val.max() >= len(times)):
                raise ValueError(f"{name} index out of range")
        object.__setattr__(self, "participant_index", pi)
        object.__setattr__(self, "cue_index", ci)
        object.__setattr__(self, "participant_times", pt)
        object.__setattr__(self, "cue_times", ct)
        object.__setattr__(self, "gaps", tuple(int(g) for g in self.gaps))
        object.__setattr__(self, "breaks", tuple(int(b) for b in self.breaks))
        object.__setattr__(self, "asynchrony", _frozen(pt[pi] - ct[ci]))

    def __len__(self):
        return len(self.cue_index)

    def at_cue(self, cue_indices):
        """Asynchronies at the given 0-based cue indices, NaN where unmatched."""
        cue_indices = np.asarray(cue_indices, dtype=int)
        out = np.full(cue_indices.shape, np.nan)
        pos = np.searchsorted(self.cue_index, cue_indices)
        pos_c = np.clip(pos, 0, max(len(self) - 1, 0))
        if len(self):
            hit = self.cue_index[pos_c] == cue_indices
            out[hit] = self.asynchrony[pos_c[hit]]
        return out

    def segments(self):
        """Split pair positions into runs with consecutive cue indices and no breaks."""
        if not len(self):
            return []
        cut = np.flatnonzero(np.diff(self.cue_index) != 1) + 1
        cuts = sorted(set(cut.tolist()) | {b for b in self.breaks if 0 < b < len(self)})
        return [np.arange(a, b) for a, b in zip([0] + cuts, cuts + [len(self)])]

    def gap_count(self, lo=None, hi=None):
        """Number of unmatched cue indices within ``[lo, hi]`` (0-based, inclusive)."""
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        return sum(1 for g in self.gaps if lo <= g <= hi)


@dataclass(frozen=True)
class RelativeAsynchronyCurve:
    offsets: np.ndarray
    values: np.ndarray
    baseline_mean: float
    n_baseline: int

    def __post_init__(self):
        object.__setattr__(self, "offsets", _frozen(self.offsets, int))
        object.__setattr__(self, "values", _frozen(self.values))

    def at(self, offset):
        hit = np.flatnonzero(self.offsets == offset)
        return float(self.values[hit[0]]) if len(hit) else float("nan")


@dataclass(frozen=True)
class PrePerturbationSummary:
    mean_asynchrony: float
    sd_asynchrony: float
    mean_isi: float
    sd_isi: float
    n_used: int


def compute_isi(onsets: OnsetSeries) -> ISISeries:
    if len(onsets) < 2:
        raise EmptySeries(f"need at least 2 onsets to form an interval, got {len(onsets)}")
    return ISISeries(np.diff(onsets.times), onsets.source)


def match_onsets(participant: OnsetSeries, cue: OnsetSeries, max_distance=None) -> AsynchronySeries:
    """Pair each participant onset with its nearest free cue onset.

    Participants propose to cues in order of distance; a cue keeps the nearer
    proposer and the loser moves on to its next-nearest cue.  Equidistant
    cues resolve to the earlier one, equidistant participants to the earlier
    one.  Candidates farther than ``max_distance`` (default: the median cue
    interval) are never considered.
    """
    p = participant.times
    c = cue.times
    if not len(p) or not len(c):
        return AsynchronySeries([], [], p, c, gaps=tuple(range(len(c))))
    if max_distance is None:
        max_distance = float(np.median(np.diff(c))) if len(c) > 1 else np.inf

    prefs = []
    for i, t in enumerate(p):
        d = np.abs(t - c)
        order = np.lexsort((np.arange(len(c)), d))
        prefs.append([int(j) for j in order if d[j] <= max_distance])

    holder = {}  # cue index -> participant index
    next_choice = [0] * len(p)
    free = list(range(len(p)))[::-1]
    while free:
        i = free.pop()
        while next_choice[i] < len(prefs[i]):
            j = prefs[i][next_choice[i]]
            next_choice[i] += 1
            rival = holder.get(j)
            if rival is None:
                holder[j] = i
                break
            if (abs(p[i] - c[j]), i) < (abs(p[rival] - c[j]), rival):
                holder[j] = i
                free.append(rival)
                break

    pairs = sorted((i, j) for j, i in holder.items())
    kept = []
    for i, j in pairs:
        if not kept or j > kept[-1][1]:
            kept.append((i, j))
    matched = {j for _, j in kept}
    gaps = tuple(j for j in range(len(c)) if j not in matched)
    pi = [i for i, _ in kept]
    ci = [j for _, j in kept]
    return AsynchronySeries(pi, ci, p, c, gaps=gaps)


def _nearest_after(c, target, after):
    """Index of the cue nearest ``target`` among indices > ``after`` (earlier on ties)."""
    lo = after + 1
    if lo >= len(c):
        return None
    k = lo + int(np.searchsorted(c[lo:], target))
    cands = [j for j in (k - 1, k) if lo <= j < len(c)]
    return min(cands, key=lambda j: (abs(c[j] - target), j))


def unwrap_asynchronies(raw: AsynchronySeries, nominal_isi: float) -> AsynchronySeries:
    """Re-assign pairs so the asynchrony series is continuous.

    A single greedy forward pass starting at the first raw pair: every later
    participant onset takes the cue (past the previous one) whose asynchrony
    is closest to the previous asynchrony.  A jump of ``nominal_isi / 2`` or
    more is a discontinuity; an onset that had no raw partner is then left
    unmatched, one that had a partner restarts the chain and is recorded in
    ``breaks``.
    """
    if not len(raw):
        return raw
    p, c = raw.participant_times, raw.cue_times
    half = nominal_isi / 2.0
    raw_cue = dict(zip(raw.participant_index.tolist(), raw.cue_index.tolist()))

    first = int(raw.participant_index[0])
    pi, ci, breaks = [first], [raw_cue[first]], []
    prev_a = p[first] - c[ci[0]]
    for i in range(first + 1, len(p)):
        j = _nearest_after(c, p[i] - prev_a, ci[-1])
        if j is None:
            break
        a = p[i] - c[j]
        if abs(a - prev_a) >= half:
            if i not in raw_cue:
                continue
            j = raw_cue[i] if raw_cue[i] > ci[-1] else _nearest_after(c, p[i], ci[-1])
            a = p[i] - c[j]
            breaks.append(len(pi))
        pi.append(i)
        ci.append(j)
        prev_a = a

    changed = pi != raw.participant_index.tolist() or ci != raw.cue_index.tolist()
    matched = set(ci)
    gaps = tuple(j for j in range(len(c)) if j not in matched)
    return AsynchronySeries(
        pi, ci, p, c,
        unwrap_applied=raw.unwrap_applied or changed,
        gaps=gaps,
        breaks=tuple(breaks),
    )


def _baseline_positions(series, T, exclude_first):
    lo, hi = exclude_first, T - 2  # 0-based cue indices of steps exclude_first+1 .. T-1
    pos = np.flatnonzero((series.cue_index >= lo) & (series.cue_index <= hi))
    if hi < lo or not len(pos):
        raise InsufficientBaseline(
            f"no matched steps in baseline window {exclude_first + 1}..{T - 1}"
        )
    return pos


def relative_asynchrony(series: AsynchronySeries, T: int, exclude_first: int = 3,
                        offsets: Sequence[int] = CURVE_OFFSETS) -> RelativeAsynchronyCurve:
    """Asynchrony minus its pre-perturbation mean, sampled at offsets around step ``T``.

    Offset 0 is the participant step matched to the perturbed cue step; steps
    ``exclude_first + 1`` through ``T - 1`` form the baseline.
    """
    pos = _baseline_positions(series, T, exclude_first)
    baseline = float(np.mean(series.asynchrony[pos]))
    offsets = np.asarray(offsets, dtype=int)
    values = series.at_cue(T - 1 + offsets) - baseline
    return RelativeAsynchronyCurve(offsets, values, baseline, len(pos))


def summarize_pre_perturbation(series: AsynchronySeries, participant_isi: ISISeries,
                               T: int, exclude_first: int = 3) -> PrePerturbationSummary:
    pos = _baseline_positions(series, T, exclude_first)
    asyn = series.asynchrony[pos]
    pidx = series.participant_index[pos]
    isi = participant_isi.intervals[pidx[pidx < len(participant_isi)]]

    def sd(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else float("nan")

    return PrePerturbationSummary(
        mean_asynchrony=float(np.mean(asyn)),
        sd_asynchrony=sd(asyn),
        mean_isi=float(np.mean(isi)) if len(isi) else float("nan"),
        sd_isi=sd(isi),
        n_used=len(pos),
    )
