"""Speech-frame classification from minimum/maximum statistics of averaged noise periodograms.

Under stationary Gaussian noise a D-frame averaged periodogram is Erlang
distributed (shape D). The expected minimum and the quantiles of the
maximum of a sequence of such values fix two ratio thresholds ``r1 > r2``;
frames above ``r1`` times the sequence minimum carry strong speech power,
frames at or below ``r2`` times the minimum are treated as noise only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import gammainc, gammaln, xlogy


def erlang_pdf_cdf(xi, shape: int, scale: float = 1.0):
    """Erlang density and distribution function (``scale`` is mu, mean = shape * mu)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("Erlang support is xi >= 0")
    if shape < 1 or int(shape) != shape:
        raise ValueError("shape must be a positive integer")
    if scale <= 0:
        raise ValueError("scale must be positive")
    with np.errstate(divide="ignore"):
        log_pdf = xlogy(shape - 1, xi) - xi / scale - shape * math.log(scale) - gammaln(shape)
    return np.exp(log_pdf), gammainc(shape, xi / scale)


def equivalent_sequence_length(n_seq: float, step: int, n_avg: int) -> float:
    """Length of an independent sequence with the same extreme statistics.

    A PSD sequence computed every ``step`` frames with ``n_avg``-frame
    averaging is correlated when ``step < n_avg``; the empirical correction
    is ``(P R / D)(1 + ln(D / R))``.
    """
    if step < 1 or n_avg < 1:
        raise ValueError("R and D must be >= 1")
    if step >= n_avg:
        return float(n_seq)
    return n_seq * step / n_avg * (1.0 + math.log(n_avg / step))


@dataclass(frozen=True, eq=False)
class MinMaxModel:
    n_avg: int
    step: int
    n_seq: float
    n_eff: float
    grid: np.ndarray
    f_min: np.ndarray
    f_max: np.ndarray
    F_max: np.ndarray
    xi_min_mean: float
    r1: float = math.nan
    r2: float = math.nan


def min_max_statistics(n_avg: int, n_eff: float, step: int = 1, n_seq: float | None = None) -> MinMaxModel:
    """Grid approximation of min/max densities of ``n_eff`` Erlang(D, 1) variables.

    The grid is ``{0, 0.1D, ..., 3D}``. ``F_max`` is accumulated with the
    trapezoid rule so that its value at a node is the integral up to that node.
    """
    if n_eff < 1:
        raise ValueError("equivalent length must be >= 1")
    grid = np.linspace(0.0, 3.0 * n_avg, 31)
    f, F = erlang_pdf_cdf(grid, n_avg, 1.0)
    f_min = n_eff * (1.0 - F) ** (n_eff - 1) * f
    f_max = n_eff * F ** (n_eff - 1) * f
    xi_min_mean = float(np.sum(grid * f_min) / np.sum(f_min))
    F_max = cumulative_trapezoid(f_max, grid, initial=0.0)
    return MinMaxModel(n_avg, step, float(n_seq if n_seq is not None else n_eff), float(n_eff),
                       grid, f_min, f_max, F_max, xi_min_mean)


def _grid_quantile(model: MinMaxModel, level: float) -> float:
    F = np.maximum.accumulate(model.F_max)
    hit = np.flatnonzero(F >= level)
    if hit.size == 0:
        return float(model.grid[-1])
    j = hit[0]
    if j == 0:
        return float(model.grid[0])
    x0, x1, y0, y1 = model.grid[j - 1], model.grid[j], F[j - 1], F[j]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def classification_thresholds(model: MinMaxModel) -> tuple[float, float]:
    """``(r1, r2)``: 0.95 and 0.5 quantiles of the maximum over the mean minimum."""
    r1 = _grid_quantile(model, 0.95) / model.xi_min_mean
    r2 = _grid_quantile(model, 0.5) / model.xi_min_mean
    return r1, r2


def thresholds_for_sequence(n_seq: int, n_avg: int, step: int = 1) -> MinMaxModel:
    """Model and thresholds for a raw sequence of ``n_seq`` PSD values.

    Sequences so short that the equivalent length drops below 1 are treated
    as a single independent value.
    """
    n_eff = max(1.0, equivalent_sequence_length(n_seq, step, n_avg))
    model = min_max_statistics(n_avg, n_eff, step, n_seq)
    r1, r2 = classification_thresholds(model)
    return MinMaxModel(model.n_avg, step, float(n_seq), n_eff, model.grid, model.f_min,
                       model.f_max, model.F_max, model.xi_min_mean, r1, r2)


@dataclass(frozen=True, eq=False)
class FrameClasses:
    """Per-bin frame sets; ``p1`` strong speech, ``p2`` noise only."""

    p1: list
    p2: list
    invalid: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.p1)


def classify_frames(xi, r1: float, r2: float) -> FrameClasses:
    """Threshold each bin's PSD sequence against multiples of its minimum.

    ``xi`` is ``(frames, bins)``; NaN frames (no estimate yet) are ignored
    and returned indices refer to rows of ``xi``.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    p1, p2 = [], []
    invalid = np.zeros(xi.shape[1], dtype=bool)
    for k in range(xi.shape[1]):
        col = xi[:, k]
        ok = np.isfinite(col)
        if not np.any(ok) or not np.any(col[ok] > 0):
            p1.append(np.empty(0, int))
            p2.append(np.empty(0, int))
            invalid[k] = True
            continue
        floor = np.min(col[ok])
        p1.append(np.flatnonzero(ok & (col > r1 * floor)))
        p2.append(np.flatnonzero(ok & (col <= r2 * floor)))
    return FrameClasses(p1, p2, invalid)
