"""STFT analysis/synthesis and the band-to-band convolutive transfer function.

Conventions
-----------
Analysis of frame ``p`` at bin ``k``::

    X(p, k) = sum_m wa(m) x(pL + m) exp(-2j pi k m / N)

Synthesis is the plain (un-normalised) inverse::

    x(n) = sum_p ws(n - pL) sum_{k=0}^{N-1} X(p, k) exp(2j pi k (n - pL) / N)

so perfect reconstruction requires ``N * sum_p wa(n - pL) ws(n - pL) == 1``.
With this normalisation the first CTF tap of an impulse response ``h`` is
exactly the DFT of ``h(n) nu(n)`` where ``nu`` is the cross-window kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PR_TOL = 1e-10


def sqrt_hann(n: int) -> np.ndarray:
    """Periodic square-root Hann (sine) window."""
    return np.sin(np.pi * np.arange(n) / n)


def _overlap_sum(analysis: np.ndarray, synthesis: np.ndarray, step: int) -> np.ndarray:
    n = len(analysis)
    prod = analysis * synthesis
    acc = np.zeros(step)
    for start in range(0, n, step):
        seg = prod[start:start + step]
        acc[:len(seg)] += seg
    return acc


@dataclass(frozen=True, eq=False)
class StftConfig:
    """Frame geometry and window pair of an STFT.

    ``synthesis_window`` must be scaled so that the windows overlap-add to
    ``1/N`` (see module docstring). Use :meth:`default` or
    :meth:`rectangular` unless you need a custom pair.
    """

    window_length: int
    frame_step: int
    analysis_window: np.ndarray
    synthesis_window: np.ndarray
    sample_rate: float = 16000.0

    def __post_init__(self):
        n, step = self.window_length, self.frame_step
        if n <= 0:
            raise ValueError("window_length must be positive")
        if not 0 < step <= n:
            raise ValueError("frame_step must satisfy 0 < L <= N")
        wa = np.asarray(self.analysis_window, dtype=float)
        ws = np.asarray(self.synthesis_window, dtype=float)
        if wa.shape != (n,) or ws.shape != (n,):
            raise ValueError("windows must have length N")
        wa.setflags(write=False)
        ws.setflags(write=False)
        object.__setattr__(self, "analysis_window", wa)
        object.__setattr__(self, "synthesis_window", ws)
        acc = n * _overlap_sum(wa, ws, step)
        if np.max(np.abs(acc - 1.0)) > PR_TOL:
            raise ValueError(
                "window pair violates perfect reconstruction: "
                f"N*sum_p wa*ws ranges over [{acc.min():.6g}, {acc.max():.6g}]")

    @classmethod
    def default(cls, window_length: int = 256, frame_step: int | None = None,
                sample_rate: float = 16000.0) -> "StftConfig":
        """Sine analysis/synthesis windows, 50 % overlap by default."""
        if frame_step is None:
            frame_step = window_length // 2
        wa = sqrt_hann(window_length)
        # sin^2 overlap-adds to N / (2L) at hops dividing N/2
        ws = wa * (2.0 * frame_step / window_length) / window_length
        return cls(window_length, frame_step, wa, ws, sample_rate)

    @classmethod
    def rectangular(cls, window_length: int, sample_rate: float = 16000.0) -> "StftConfig":
        """Non-overlapping rectangular frames (L = N)."""
        n = window_length
        return cls(n, n, np.ones(n), np.full(n, 1.0 / n), sample_rate)

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.window_length

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_length) // self.frame_step + 1


@dataclass(frozen=True, eq=False)
class TimeFrequencyTensor:
    """Complex STFT coefficients shaped ``(channel, frame, bin)``."""

    data: np.ndarray
    config: StftConfig

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != self.config.n_bins:
            raise ValueError(
                f"expected (channels, frames, {self.config.n_bins}) array, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def channel(self, i: int) -> np.ndarray:
        """Frames-by-bins view of one channel."""
        return self.data[i]


@dataclass(frozen=True, eq=False)
class CtfFilter:
    """Band-to-band CTF taps shaped ``(bin, lag)``."""

    taps: np.ndarray
    window_length: int = field(default=0)

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex)
        if taps.ndim != 2 or taps.shape[1] < 1:
            raise ValueError("taps must be (bins, Q) with Q >= 1")
        object.__setattr__(self, "taps", taps)

    @property
    def n_taps(self) -> int:
        return self.taps.shape[1]


def band_bins(config: StftConfig, f_max: float = 4000.0) -> np.ndarray:
    """Bins with centre frequency in ``(0, f_max]``; bin 0 carries no phase."""
    freqs = config.bin_frequencies()
    return np.flatnonzero((freqs > 0) & (freqs <= f_max + 1e-9))


def stft_analyze(signal, config: StftConfig) -> TimeFrequencyTensor:
    """STFT of a 1-D signal or a ``(channels, samples)`` array.

    Frames start at ``pL`` and only complete frames are kept, so the frame
    count is ``floor((len - N) / L) + 1``.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or (channels, samples)")
    n, step = config.window_length, config.frame_step
    if x.shape[1] < n:
        raise ValueError(f"insufficient samples: {x.shape[1]} < window length {n}")
    frames = sliding_window_view(x, n, axis=1)[:, ::step, :]
    spec = np.fft.rfft(frames * config.analysis_window, axis=-1)
    return TimeFrequencyTensor(spec, config)


def stft_synthesize(tensor: TimeFrequencyTensor, length: int | None = None) -> np.ndarray:
    """Overlap-add inverse of :func:`stft_analyze`; returns ``(channels, samples)``."""
    cfg = tensor.config
    n, step = cfg.window_length, cfg.frame_step
    n_ch, n_frames, _ = tensor.data.shape
    # rfft -> irfft carries 1/N, the synthesis convention does not
    frames = n * np.fft.irfft(tensor.data, n=n, axis=-1) * cfg.synthesis_window
    total = (n_frames - 1) * step + n
    out = np.zeros((n_ch, total))
    for p in range(n_frames):
        out[:, p * step:p * step + n] += frames[:, p]
    if length is not None:
        if length <= total:
            out = out[:, :length]
        else:
            out = np.pad(out, ((0, 0), (0, length - total)))
    return out


def window_kernel(analysis: np.ndarray, synthesis: np.ndarray) -> np.ndarray:
    """``nu(n) = sum_m analysis(m) synthesis(m - n)`` for ``n = 1-N .. N-1``.

    Index ``i`` of the result holds lag ``i - (N - 1)``.
    """
    return np.correlate(np.asarray(analysis, float), np.asarray(synthesis, float), "full")


def cross_window_kernel(config: StftConfig) -> np.ndarray:
    """Cross-window kernel ``nu(n)`` for ``n = 0 .. N-1``."""
    full = window_kernel(config.analysis_window, config.synthesis_window)
    return full[config.window_length - 1:]


def ctf_from_impulse_response(h, config: StftConfig, n_taps: int, origin: int = 0) -> CtfFilter:
    """Band-to-band CTF of a time-domain impulse response.

    ``origin`` is the array index of time zero, letting responses carry a
    short non-causal lead-in (e.g. the left half of a fractional-delay
    kernel). Tap ``p'`` at bin ``k`` is::

        sum_u h(u + p'L) nu(u) exp(-2j pi k u / N),   |u| <= N - 1

    which reduces to the DFT of ``h(n) nu(n)`` over ``n = 0..N-1`` for the
    first tap of a causal response.
    """
    if n_taps <= 0:
        raise ValueError(f"number of CTF taps must be positive, got {n_taps}")
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or not np.all(np.isfinite(h)):
        raise ValueError("impulse response must be a finite 1-D array")
    n, step = config.window_length, config.frame_step
    nu = window_kernel(config.analysis_window, config.synthesis_window)
    lags = np.arange(1 - n, n)
    fold = np.mod(lags, n)
    taps = np.empty((config.n_bins, n_taps), dtype=complex)
    for q in range(n_taps):
        idx = lags + q * step + origin
        ok = (idx >= 0) & (idx < len(h))
        seg = np.zeros(n)
        np.add.at(seg, fold[ok], h[idx[ok]] * nu[ok])
        taps[:, q] = np.fft.rfft(seg)
    return CtfFilter(taps, n)


def ctf_convolve(source: TimeFrequencyTensor, ctf: CtfFilter) -> TimeFrequencyTensor:
    """Per-bin convolution along frames; frames before 0 count as zero."""
    cfg = source.config
    if ctf.window_length and ctf.window_length != cfg.window_length:
        raise ValueError("filter and tensor use different window lengths")
    if ctf.taps.shape[0] != cfg.n_bins:
        raise ValueError("filter bin count does not match tensor")
    s = source.data
    out = np.zeros_like(s, dtype=complex)
    n_frames = s.shape[1]
    for q in range(ctf.n_taps):
        if q >= n_frames:
            break
        out[:, q:, :] += s[:, :n_frames - q, :] * ctf.taps[:, q]
    return TimeFrequencyTensor(out, cfg)
