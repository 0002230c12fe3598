"""D-frame averaged auto/cross spectra and the per-bin linear system in the CTF ratio vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .stft import TimeFrequencyTensor


def _frames_bins(t) -> np.ndarray:
    """Accept a single-channel tensor or a ``(frames, bins)`` array."""
    if isinstance(t, TimeFrequencyTensor):
        if t.n_channels != 1:
            raise ValueError("expected a single-channel tensor; pick one with .channel(i)")
        return t.data[0]
    a = np.asarray(t)
    if a.ndim != 2:
        raise ValueError("expected a (frames, bins) array")
    return a


def first_valid_frame(n_taps: int, n_avg: int) -> int:
    """Index of the first frame whose averaged cross-spectrum vector is complete."""
    return n_taps + n_avg - 1


def _moving_average(a: np.ndarray, n_avg: int) -> np.ndarray:
    """Trailing D-frame mean along axis 0; the first D-1 frames are NaN."""
    out = np.full(a.shape, np.nan, dtype=a.dtype if np.iscomplexobj(a) else float)
    win = sliding_window_view(a, n_avg, axis=0)
    out[n_avg - 1:] = win.mean(axis=-1)
    return out


def estimate_auto_psd(y, n_avg: int) -> np.ndarray:
    """``phi(p, k) = mean_{d<D} |y(p-d, k)|^2``; NaN where fewer than D frames exist."""
    if isinstance(y, TimeFrequencyTensor):
        y = y.data
    y = np.asarray(y)
    n_frames = y.shape[-2]
    if n_avg < 1:
        raise ValueError("D must be >= 1")
    if n_avg > n_frames:
        raise ValueError(f"too few frames: D={n_avg} > P={n_frames}")
    power = np.abs(y) ** 2
    moved = np.moveaxis(power, -2, 0)
    return np.moveaxis(_moving_average(moved, n_avg), 0, -2)


def _lagged_products(x, y, n_taps):
    """``(frames, bins, 2Q-1)`` instantaneous products x(p-q) y*(p), then y(p-q) y*(p)."""
    n_frames, n_bins = y.shape
    out = np.zeros((n_frames, n_bins, 2 * n_taps - 1), dtype=complex)
    yc = np.conj(y)
    for q in range(n_taps):
        out[q:, :, q] = x[:n_frames - q] * yc[q:]
    for q in range(1, n_taps):
        out[q:, :, n_taps - 1 + q] = y[:n_frames - q] * yc[q:]
    return out


def build_zy_vector(x, y, p: int, k: int, n_taps: int, n_avg: int) -> np.ndarray:
    """Averaged cross-spectra between the regressor vector and ``y`` at frame ``p``, bin ``k``.

    Entries are ``E{x(p-q) y*(p)}`` for ``q = 0..Q-1`` followed by
    ``E{y(p-q) y*(p)}`` for ``q = 1..Q-1``, each a D-frame mean.
    """
    x, y = _frames_bins(x), _frames_bins(y)
    if p < first_valid_frame(n_taps, n_avg) or p >= y.shape[0]:
        raise ValueError(f"frame {p} lacks the history needed for Q={n_taps}, D={n_avg}")
    d = np.arange(n_avg)
    yc = np.conj(y[p - d, k])
    vec = np.empty(2 * n_taps - 1, dtype=complex)
    for q in range(n_taps):
        vec[q] = np.mean(x[p - d - q, k] * yc)
    for q in range(1, n_taps):
        vec[n_taps - 1 + q] = np.mean(y[p - d - q, k] * yc)
    return vec


@dataclass(frozen=True, eq=False)
class PsdSeries:
    """Averaged auto-spectrum of ``y`` and regressor cross-spectra, frames before ``valid_from`` NaN."""

    phi_yy: np.ndarray   # (frames, bins) real
    phi_zy: np.ndarray   # (frames, bins, 2Q-1) complex
    valid_from: int
    n_taps: int
    n_avg: int

    @property
    def n_frames(self) -> int:
        return self.phi_yy.shape[0]

    @property
    def valid_frames(self) -> np.ndarray:
        return np.arange(self.valid_from, self.n_frames)


def psd_series(x, y, n_taps: int, n_avg: int) -> PsdSeries:
    """All averaged spectra of the pair (``x`` regressor reference, ``y`` target)."""
    x, y = _frames_bins(x), _frames_bins(y)
    if n_taps < 1:
        raise ValueError("Q must be >= 1")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same shape")
    p_f = first_valid_frame(n_taps, n_avg)
    phi_yy = estimate_auto_psd(y, n_avg)
    phi_zy = _moving_average(_lagged_products(x, y, n_taps), n_avg)
    phi_yy[:p_f] = np.nan
    phi_zy[:p_f] = np.nan
    return PsdSeries(phi_yy, phi_zy, p_f, n_taps, n_avg)


@dataclass(frozen=True, eq=False)
class PsdSystem:
    """``rhs ~= matrix @ g`` for one frequency bin."""

    rhs: np.ndarray
    matrix: np.ndarray
    k: int
    underdetermined: bool = False
    degenerate: bool = False


def assemble_noise_free_system(x, y, k: int, n_taps: int, n_avg: int) -> PsdSystem:
    """Stack one equation per frame ``p_f .. P-1`` at bin ``k``."""
    x, y = _frames_bins(x), _frames_bins(y)
    p_f = first_valid_frame(n_taps, n_avg)
    if y.shape[0] <= p_f:
        raise ValueError(f"too few frames: need more than {p_f}, got {y.shape[0]}")
    series = psd_series(x[:, k:k + 1], y[:, k:k + 1], n_taps, n_avg)
    rhs = series.phi_yy[p_f:, 0].astype(complex)
    matrix = series.phi_zy[p_f:, 0, :]
    return PsdSystem(rhs, matrix, k,
                     underdetermined=len(rhs) < 2 * n_taps - 1,
                     degenerate=not np.any(matrix))
