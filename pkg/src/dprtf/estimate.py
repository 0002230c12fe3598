"""Direct-path RTF estimation: frame pairing, inter-frame spectral subtraction,
least squares, channel-swap averaging and feature normalisation.

Mic pairs are all unordered pairs ``(i, j)`` with ``i < j``; ``i`` is the
reference channel so each entry estimates ``b0 / a0`` with ``a`` the CTF of
mic ``i``. Features are laid out pair-major, then frequency.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .classify import FrameClasses, classify_frames, thresholds_for_sequence
from .psd import PsdSeries, psd_series
from .stft import StftConfig, TimeFrequencyTensor, band_bins, stft_analyze


class UnderdeterminedError(ValueError):
    """Fewer speech frames than unknowns in a bin."""


class PairingError(ValueError):
    """A bin has no speech frame or no noise-only reference frame."""


def all_pairs(n_mics: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n_mics), 2))


def q_from_t60(t60: float, sample_rate: float = 16000.0, frame_step: int = 128,
               fraction: float = 0.25) -> int:
    """CTF length covering ``fraction * T60``; at least one tap."""
    if t60 < 0:
        raise ValueError("T60 must be non-negative")
    return max(1, math.ceil(fraction * t60 * sample_rate / frame_step - 1e-9))


def pair_frames(p1, p2) -> dict[int, int]:
    """Map each speech frame to the nearest noise-only frame (earlier one on ties)."""
    p1 = np.asarray(p1, dtype=int)
    p2 = np.sort(np.asarray(p2, dtype=int))
    if p1.size == 0:
        raise PairingError("no speech frames")
    if p2.size == 0:
        raise PairingError("no noise-only frames")
    pos = np.searchsorted(p2, p1)
    lo = p2[np.clip(pos - 1, 0, p2.size - 1)]
    hi = p2[np.clip(pos, 0, p2.size - 1)]
    pick = np.where(np.abs(p1 - lo) <= np.abs(hi - p1), lo, hi)
    return {int(a): int(b) for a, b in zip(p1, pick)}


@dataclass(frozen=True, eq=False)
class SubtractedSystem:
    """``rhs ~= matrix @ g`` after subtracting the paired noise-only statistics."""

    rhs: np.ndarray
    matrix: np.ndarray
    pairings: dict
    k: int

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[1]


def spectral_subtract(psd: PsdSeries, pairings: dict, k: int) -> SubtractedSystem:
    """Subtract frame ``p2(p1)`` statistics from frame ``p1`` at bin column ``k`` of ``psd``."""
    p1 = np.fromiter(pairings.keys(), dtype=int, count=len(pairings))
    p2 = np.fromiter(pairings.values(), dtype=int, count=len(pairings))
    rhs = (psd.phi_yy[p1, k] - psd.phi_yy[p2, k]).astype(complex)
    matrix = psd.phi_zy[p1, k, :] - psd.phi_zy[p2, k, :]
    if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(matrix))):
        raise ValueError("pairing refers to frames without a PSD estimate")
    return SubtractedSystem(rhs, matrix, dict(pairings), k)


def solve_g(system: SubtractedSystem) -> tuple[np.ndarray, bool]:
    """Least-squares ``g``; returns ``(g, regularized)``.

    Uses an orthogonal decomposition. A rank-deficient matrix is solved with
    a small ridge ``1e-8 * trace(A^H A) / (2Q - 1)`` instead.
    """
    a, b = system.matrix, system.rhs
    n = a.shape[1]
    if a.shape[0] < n:
        raise UnderdeterminedError(
            f"insufficient speech frames: {a.shape[0]} rows for {n} unknowns")
    if np.linalg.matrix_rank(a) == n:
        g = np.linalg.lstsq(a, b, rcond=None)[0]
        return g, False
    gram = a.conj().T @ a
    eps = 1e-8 * np.real(np.trace(gram)) / n
    if eps <= 0:
        return np.zeros(n, dtype=complex), True
    g = np.linalg.solve(gram + eps * np.eye(n), a.conj().T @ b)
    return g, True


def bidirectional_dprtf(g0, g0_swapped) -> tuple[complex, bool]:
    """``(g0 + 1/g0')/2``; falls back to whichever direction is usable.

    Returns ``(c_hat, fallback)``; ``None`` marks a missing direction.
    """
    have_x = g0 is not None and np.isfinite(g0)
    have_y = g0_swapped is not None and np.isfinite(g0_swapped) and g0_swapped != 0
    if have_x and have_y:
        return 0.5 * (complex(g0) + 1.0 / complex(g0_swapped)), False
    if have_x:
        return complex(g0), True
    if have_y:
        return 1.0 / complex(g0_swapped), True
    raise ValueError("neither direction produced an estimate")


@dataclass(frozen=True, eq=False)
class DpRtfFeature:
    """Normalised DP-RTF ``c`` and indicator ``h``, both shaped ``(pair, bin)``."""

    c: np.ndarray
    h: np.ndarray
    bins: np.ndarray
    pairs: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        h = np.asarray(self.h, dtype=bool)
        if c.shape != h.shape or c.ndim != 2:
            raise ValueError("c and h must share a (pairs, bins) shape")
        c = np.where(h, c, 0)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=int))
        object.__setattr__(self, "pairs", tuple(tuple(int(v) for v in p) for p in self.pairs))

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """Pair-major flattened ``(c, h)``."""
        return self.c.ravel(), self.h.ravel()

    @property
    def n_valid(self) -> int:
        return int(self.h.sum())


def normalize_feature(c_hat, valid, bins=None, pairs=None) -> DpRtfFeature:
    """``c = c_hat / sqrt(1 + |c_hat|^2)`` where valid, zero elsewhere."""
    c_hat = np.atleast_2d(np.asarray(c_hat, dtype=complex))
    valid = np.atleast_2d(np.asarray(valid, dtype=bool)) & np.isfinite(c_hat)
    c = np.zeros_like(c_hat)
    c[valid] = c_hat[valid] / np.sqrt(1.0 + np.abs(c_hat[valid]) ** 2)
    if bins is None:
        bins = np.arange(c.shape[1])
    if pairs is None:
        pairs = [(0, 1)] * c.shape[0]
    return DpRtfFeature(c, valid, bins, pairs)


@dataclass(frozen=True, eq=False)
class DirectionalEstimate:
    """First entries of ``g`` per bin for one reference/target ordering."""

    g0: np.ndarray           # complex, NaN where no estimate
    valid: np.ndarray        # over- or exactly determined system
    regularized: np.ndarray
    classes: FrameClasses


def classes_for(phi: np.ndarray, valid_from: int, n_avg: int) -> FrameClasses:
    """Classify frames of an averaged auto-PSD using thresholds for its length."""
    n_seq = phi.shape[0] - valid_from
    if n_seq < 1:
        raise ValueError("no frames with a complete PSD estimate")
    model = thresholds_for_sequence(n_seq, n_avg, step=1)
    return classify_frames(phi, model.r1, model.r2)


def directional_estimate(x, y, n_taps: int, n_avg: int,
                         classes: FrameClasses | None = None) -> DirectionalEstimate:
    """Estimate ``g0`` per bin with ``x`` as reference and ``y`` as target.

    ``x`` and ``y`` are ``(frames, bins)`` STFT arrays. Frames are classified
    on the averaged auto-PSD of ``y`` unless ``classes`` is given.
    """
    psd = psd_series(x, y, n_taps, n_avg)
    if classes is None:
        classes = classes_for(psd.phi_yy, psd.valid_from, n_avg)
    n_bins = psd.phi_yy.shape[1]
    g0 = np.full(n_bins, np.nan, dtype=complex)
    valid = np.zeros(n_bins, dtype=bool)
    reg = np.zeros(n_bins, dtype=bool)
    for k in range(n_bins):
        if classes.invalid[k]:
            continue
        try:
            pairs = pair_frames(classes.p1[k], classes.p2[k])
            system = spectral_subtract(psd, pairs, k)
            if not np.any(system.matrix):
                continue  # no excitation left after subtraction
            g, reg[k] = solve_g(system)
        except (PairingError, UnderdeterminedError):
            continue
        g0[k] = g[0]
        valid[k] = np.isfinite(g[0])
    return DirectionalEstimate(g0, valid, reg, classes)


def pair_dprtf(x, y, n_taps: int, n_avg: int) -> tuple[np.ndarray, np.ndarray]:
    """Channel-swap averaged ``c_hat`` and validity for one mic pair."""
    fwd = directional_estimate(x, y, n_taps, n_avg)
    bwd = directional_estimate(y, x, n_taps, n_avg)
    n_bins = fwd.g0.shape[0]
    c_hat = np.zeros(n_bins, dtype=complex)
    valid = np.zeros(n_bins, dtype=bool)
    for k in range(n_bins):
        a = fwd.g0[k] if fwd.valid[k] else None
        b = bwd.g0[k] if bwd.valid[k] else None
        if a is None and (b is None or b == 0):
            continue
        c_hat[k], _ = bidirectional_dprtf(a, b)
        valid[k] = True
    return c_hat, valid


def _as_tensor(signals, config: StftConfig) -> TimeFrequencyTensor:
    if isinstance(signals, TimeFrequencyTensor):
        return signals
    sig = np.asarray(signals, dtype=float)
    if sig.ndim != 2 or sig.shape[0] < 2:
        raise ValueError("expected (channels >= 2, samples) signals")
    return stft_analyze(sig, config)


def estimate_dprtf(signals, config: StftConfig, n_taps: int, n_avg: int = 12,
                   bins=None, pairs=None) -> DpRtfFeature:
    """Normalised DP-RTF feature of a multichannel recording.

    ``signals`` is ``(channels, samples)`` or a precomputed tensor.
    """
    tensor = _as_tensor(signals, config)
    if bins is None:
        bins = band_bins(tensor.config)
    bins = np.asarray(bins, dtype=int)
    if pairs is None:
        pairs = all_pairs(tensor.n_channels)
    c_hat = np.zeros((len(pairs), len(bins)), dtype=complex)
    valid = np.zeros_like(c_hat, dtype=bool)
    for n, (i, j) in enumerate(pairs):
        x = tensor.data[i][:, bins]
        y = tensor.data[j][:, bins]
        c_hat[n], valid[n] = pair_dprtf(x, y, n_taps, n_avg)
    return normalize_feature(c_hat, valid, bins, pairs)
