"""Step-onset extraction from vertical heel-marker traces by threshold crossing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import MalformedTrace
from .simulate import MarkerTrace
from .timing import OnsetSeries

DEFAULT_THRESHOLD_FRACTION = 0.2
DEFAULT_REFRACTORY = 0.15


@dataclass(frozen=True)
class DetectorConfig:
    """Threshold detector settings.

    ``threshold_height=None`` uses 20% of the median lift peak found in the
    trace.  ``refractory=None`` uses 0.4 x ``nominal_isi`` when that is known,
    otherwise 0.15 s.
    """

    threshold_height: float | None = None
    hysteresis_fraction: float = 0.25
    refractory: float | None = None
    interpolate: bool = True
    nominal_isi: float | None = None

    def __post_init__(self):
        if self.threshold_height is not None and self.threshold_height <= 0:
            raise ValueError("threshold_height must be positive")
        if not 0 <= self.hysteresis_fraction < 1:
            raise ValueError("hysteresis_fraction must lie in [0, 1)")
        if self.refractory is not None and self.refractory < 0:
            raise ValueError("refractory must be non-negative")

    def refractory_period(self):
        if self.refractory is not None:
            return self.refractory
        if self.nominal_isi is not None:
            return 0.4 * self.nominal_isi
        return DEFAULT_REFRACTORY


def estimate_threshold(trace: MarkerTrace, fraction=DEFAULT_THRESHOLD_FRACTION):
    """``fraction`` of the median peak height over all feet; None for a flat trace."""
    peaks = []
    for _, y in trace.channels.values():
        if not len(y):
            continue
        span = float(np.max(y) - np.min(y))
        if span <= 0:
            continue
        idx, _ = find_peaks(y, prominence=0.5 * span)
        peaks.extend(y[idx])
    if not peaks:
        return None
    return fraction * float(np.median(peaks))


def _channel_onsets(t, y, threshold, low, refractory, interpolate):
    rising = np.flatnonzero((y[:-1] <= threshold) & (y[1:] > threshold)) + 1
    below_low = np.flatnonzero(y < low)
    # index after which the signal must dip below ``low`` before the next onset
    need_drop_after = None if y[0] <= threshold else -1
    onsets = []
    last = -np.inf
    for k in rising:
        if need_drop_after is not None:
            j = np.searchsorted(below_low, need_drop_after, side="right")
            if j >= len(below_low) or below_low[j] >= k:
                continue
        if interpolate:
            y0, y1 = y[k - 1], y[k]
            on = t[k - 1] + (threshold - y0) / (y1 - y0) * (t[k] - t[k - 1])
        else:
            on = 0.5 * (t[k - 1] + t[k])
        need_drop_after = k
        if on - last < refractory:
            continue
        onsets.append(float(on))
        last = on
    return onsets


def detect_onsets(trace: MarkerTrace, config: DetectorConfig | None = None) -> OnsetSeries:
    """One onset per upward threshold crossing, per foot, merged into one stream.

    A new onset needs the height to have dropped below
    ``threshold * (1 - hysteresis_fraction)`` since the previous crossing, and
    crossings within the refractory period of the previous onset on the same
    foot are dropped.  Without interpolation the onset is placed midway
    between the two samples that straddle the threshold.
    """
    config = config or DetectorConfig()
    if not len(trace) or trace.sample_rate <= 0:
        raise MalformedTrace("trace is empty or has a non-positive sample rate")
    for foot, (t, _) in trace.channels.items():
        if np.any(np.diff(t) < 0):
            k = int(np.flatnonzero(np.diff(t) < 0)[0]) + 1
            raise MalformedTrace(f"foot {foot}: timestamp decreases at sample {k}")

    threshold = config.threshold_height
    if threshold is None:
        threshold = estimate_threshold(trace)
        if threshold is None:
            return OnsetSeries([], (), trace.source)
    low = threshold * (1 - config.hysteresis_fraction)
    refractory = config.refractory_period()

    events = []
    for foot, (t, y) in trace.channels.items():
        if len(y) < 2:
            continue
        for on in _channel_onsets(t, y, threshold, low, refractory, config.interpolate):
            events.append((on, foot))
    events.sort()
    times, feet = [], []
    for on, foot in events:
        if times and on <= times[-1]:
            continue
        times.append(on)
        feet.append(foot)
    return OnsetSeries(times, tuple(feet), trace.source)
