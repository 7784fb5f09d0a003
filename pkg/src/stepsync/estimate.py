"""Correction-gain estimation for the linear phase-correction model.

The asynchronies of one contiguous run of steps obey

    A[n+1] + C[n] = b A[n] + mu_T + T'[n] + M[n+1] - M[n],      b = 1 - alpha

with timekeeper noise ``T'`` and motor noise ``M``.  Stacking the run as a
vector, the first asynchrony gets its own free level and the remaining rows
form the regression above.  The noise covariance of that stacked system is
``sigma_T^2 P + sigma_M^2 D D'`` (``D`` the first-difference matrix, ``P`` the
identity with the first row zeroed), and because the transform from
asynchronies to rows has unit determinant, generalized least squares under
that covariance is the exact Gaussian likelihood maximizer for ``b``.  The
noise ratio is re-estimated from the residual autocovariance until ``alpha``
settles, short-window bias is removed with a parametric bootstrap, and the
gain is finally clamped to ``[0, 2]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRegressor,
    InsufficientData,
    UndefinedBaselinePerturbation,
)
from .timing import AsynchronySeries, RelativeAsynchronyCurve

MAX_NOISE_RATIO = 10.0


@dataclass(frozen=True)
class PhaseCorrectionEstimate:
    alpha_hat: float
    residual_variance: float
    noise_decomposition: tuple | None
    n_points: int
    bound_active: bool
    iterations: int = 0
    timekeeper_mean: float = float("nan")
    alpha_uncorrected: float = float("nan")

    def to_dict(self):
        return {
            "alpha_hat": self.alpha_hat,
            "alpha_uncorrected": self.alpha_uncorrected,
            "residual_variance": self.residual_variance,
            "timekeeper_var": None if self.noise_decomposition is None else self.noise_decomposition[0],
            "motor_var": None if self.noise_decomposition is None else self.noise_decomposition[1],
            "n_points": self.n_points,
            "bound_active": self.bound_active,
            "iterations": self.iterations,
            "timekeeper_mean": self.timekeeper_mean,
        }


@dataclass
class _Block:
    a: np.ndarray  # asynchronies of one contiguous run
    cue_iv: np.ndarray  # cue intervals following each asynchrony but the last


def _window_range(T, window, exclude_first, n_cues):
    """0-based cue index range ``[lo, hi]`` selected by ``window``."""
    if window == "post":
        return T, n_cues - 1
    if window == "whole":
        return exclude_first, n_cues - 1
    first, last = window
    return T - 1 + int(first), T - 1 + int(last)


def blocks_from_series(series: AsynchronySeries, T, window="post", exclude_first=3):
    lo, hi = _window_range(T, window, exclude_first, len(series.cue_times))
    c = series.cue_times
    blocks = []
    for seg in series.segments():
        ci = series.cue_index[seg]
        keep = (ci >= lo) & (ci <= hi)
        if keep.sum() < 2:
            continue
        ci = ci[keep]
        a = series.asynchrony[seg][keep]
        blocks.append(_Block(a.copy(), c[ci[1:]] - c[ci[:-1]]))
    return blocks


def _block_design(a, cue_iv, center):
    """Response and (slope, intercept) columns of one run; row 0 is the free level."""
    a = np.asarray(a)
    y = np.concatenate((a[..., :1], a[..., 1:] + cue_iv), axis=-1)
    X = np.zeros(a.shape + (2,))
    X[..., 1:, 0] = a[..., :-1] - center
    X[..., 1:, 1] = 1.0
    return y, X


def _covariance(m, ratio):
    """Noise covariance of one run in units of the timekeeper variance."""
    D = np.eye(m) - np.eye(m, k=-1)
    S = ratio * D @ D.T
    S[1:, 1:] += np.eye(m - 1)
    return S


def _reduced_normal(y, X, W):
    """Normal equations for (slope, intercept) with the run's level profiled out.

    With ``W=None`` (no motor noise) the level row decouples and plain least
    squares over the remaining rows applies.  Leading axes of ``y``/``X`` are
    batch dimensions.
    """
    if W is None:
        Xr, yr = X[..., 1:, :], y[..., 1:]
        return np.einsum("...ni,...nj->...ij", Xr, Xr), np.einsum("...ni,...n->...i", Xr, yr)
    XW = np.einsum("...ni,nm->...im", X, W)
    G = np.einsum("...im,...mj->...ij", XW, X)
    h = np.einsum("...im,...m->...i", XW, y)
    g = XW[..., :, 0]
    he = np.einsum("m,...m->...", W[0], y)
    G = G - g[..., :, None] * g[..., None, :] / W[0, 0]
    h = h - g * (he / W[0, 0])[..., None]
    return G, h


def _levels(y, X, W, beta):
    if W is None:
        return y[..., 0]
    XW = np.einsum("...ni,nm->...im", X, W)
    g = XW[..., :, 0]
    he = np.einsum("m,...m->...", W[0], y)
    return (he - np.einsum("...i,...i->...", g, beta)) / W[0, 0]


class _Precisions(dict):
    """Per-run-length precision matrices for one noise ratio."""

    def __init__(self, ratio):
        super().__init__()
        self.ratio = ratio

    def __missing__(self, m):
        W = None if self.ratio <= 0 else np.linalg.inv(_covariance(m, self.ratio))
        self[m] = W
        return W


def _solve(designs, ratio):
    """GLS (slope, intercept) shared by all runs."""
    W = _Precisions(ratio)
    G = np.zeros((2, 2))
    h = np.zeros(2)
    for y, X in designs:
        g, v = _reduced_normal(y, X, W[len(y)])
        G += g
        h += v
    return np.linalg.solve(G, h), W


def _noise_moments(designs, beta):
    """Timekeeper and motor variances from residual lag-0/lag-1 autocovariance."""
    g0 = g1 = 0.0
    count = 0
    for y, X in designs:
        e = y[1:] - X[1:] @ beta
        g0 += float(e @ e)
        g1 += float(e[1:] @ e[:-1])
        count += len(e)
    g0 /= count
    g1 /= count
    motor = min(max(-g1, 0.0), g0 / 2)
    timekeeper = max(g0 - 2 * motor, 0.0)
    return g0, timekeeper, motor


def _noise_ratio(timekeeper, motor):
    if timekeeper > 0:
        return min(motor / timekeeper, MAX_NOISE_RATIO)
    return MAX_NOISE_RATIO if motor > 0 else 0.0


def _bootstrap_bias(blocks, designs, beta, W, center, timekeeper, motor, n_boot, seed):
    """Mean slope error of the fixed-ratio GLS on data simulated from the fit.

    ``beta`` is the centered (slope, intercept) pair; ``W`` the precisions
    used for the fit.
    """
    rng = np.random.default_rng(seed)
    b = float(np.clip(beta[0], -1.0, 1.0))
    intercept = beta[1] - beta[0] * center
    G = np.zeros((n_boot, 2, 2))
    h = np.zeros((n_boot, 2))
    for blk, (y, X) in zip(blocks, designs):
        m = len(blk.a)
        Wm = W[m]
        level = _levels(y, X, Wm, beta)
        M = rng.normal(0.0, np.sqrt(motor), (n_boot, m))
        U = rng.normal(0.0, np.sqrt(timekeeper), (n_boot, m - 1))
        A = np.empty((n_boot, m))
        A[:, 0] = level + M[:, 0]
        for j in range(m - 1):
            A[:, j + 1] = b * A[:, j] + intercept - blk.cue_iv[j] + U[:, j] + M[:, j + 1] - M[:, j]
        ys, Xs = _block_design(A, blk.cue_iv, center)
        g, v = _reduced_normal(ys, Xs, Wm)
        G += g
        h += v
    slopes = np.linalg.solve(G, h[..., None])[:, 0, 0]
    return float(np.mean(slopes) - b)


def fit_blocks(blocks, bias_correction=True, n_boot=200, seed=0, max_iter=20, tol=1e-6):
    """Fit one shared correction gain to one or more contiguous asynchrony runs."""
    blocks = [b for b in blocks if len(b.a) >= 2]
    if not any(len(b.a) >= 3 for b in blocks):
        raise InsufficientData("need at least 3 consecutive matched steps in the fit window")
    regressor = np.concatenate([b.a[:-1] for b in blocks])
    scale = max(float(np.max(np.abs(regressor))), 1e-300)
    if np.ptp(regressor) <= 1e-12 * scale:
        raise DegenerateRegressor("asynchronies are constant over the fit window")
    center = float(np.mean(regressor))
    designs = [_block_design(b.a, b.cue_iv, center) for b in blocks]

    ratio = 0.0
    prev = None
    for it in range(1, max_iter + 1):
        beta, W = _solve(designs, ratio)
        g0, timekeeper, motor = _noise_moments(designs, beta)
        ratio = _noise_ratio(timekeeper, motor)
        if prev is not None and abs(beta[0] - prev) < tol:
            break
        prev = beta[0]

    slope = beta[0]
    noise_floor = (1e-9 * np.ptp(regressor)) ** 2
    if bias_correction and timekeeper + motor > noise_floor:
        slope = beta[0] - _bootstrap_bias(blocks, designs, beta, W, center, timekeeper, motor,
                                          n_boot, seed)

    clamped = float(np.clip(slope, -1.0, 1.0))
    return PhaseCorrectionEstimate(
        alpha_hat=1.0 - clamped,
        residual_variance=g0,
        noise_decomposition=(timekeeper, motor),
        n_points=int(len(regressor)) + len(blocks),
        bound_active=bool(clamped != slope),
        iterations=it,
        # back to the uncentered intercept: A[n+1] + C[n] = b A[n] + mu_T
        timekeeper_mean=float(beta[1] - beta[0] * center),
        alpha_uncorrected=float(1.0 - beta[0]),
    )


def fit_phase_correction(asynchronies: AsynchronySeries, cue, window="post", exclude_first=3,
                         **kwargs) -> PhaseCorrectionEstimate:
    """Estimate the correction gain from one trial's (unwrapped) asynchronies.

    ``cue`` is a :class:`~stepsync.simulate.CueSchedule` or the perturbed step
    number.  ``window`` is ``"post"`` (steps after the perturbed one to the end
    of the trial), ``"whole"`` (everything after the first ``exclude_first``
    steps) or a ``(first, last)`` pair of offsets from the perturbed step.
    Runs separated by gaps share the gain but get their own starting level.
    """
    T = getattr(cue, "perturbed_step", cue)
    blocks = blocks_from_series(asynchronies, int(T), window, exclude_first)
    return fit_blocks(blocks, **kwargs)


def fit_pooled(trials, window="post", exclude_first=3, **kwargs) -> PhaseCorrectionEstimate:
    """One gain for several trials, given as ``(asynchronies, cue)`` pairs."""
    blocks = []
    for series, cue in trials:
        T = getattr(cue, "perturbed_step", cue)
        blocks.extend(blocks_from_series(series, int(T), window, exclude_first))
    return fit_blocks(blocks, **kwargs)


def percent_correction(curve: RelativeAsynchronyCurve) -> float:
    """Mean per-step correction over the five steps after the perturbation, in percent.

    Step ``k`` corrects ``(A[+k] - A[+k+1]) / A[+1]`` of the initial
    displacement, for ``k = 1..5``.
    """
    vals = np.array([curve.at(k) for k in range(1, 7)])
    if np.any(np.isnan(vals)):
        raise InsufficientData("percent_correction needs curve values at offsets +1..+6")
    if vals[0] == 0:
        raise UndefinedBaselinePerturbation("relative asynchrony at offset +1 is zero")
    steps = (vals[:-1] - vals[1:]) / vals[0]
    return float(100.0 * np.mean(steps))
