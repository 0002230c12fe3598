"""Reference localisers: RTF under the multiplicative transfer function model, and SRP-PHAT."""
from __future__ import annotations

import numpy as np

from .estimate import DpRtfFeature, directional_estimate, estimate_dprtf
from .localize import TrainingSet
from .stft import StftConfig, TimeFrequencyTensor, stft_analyze


def rtf_mtf_estimate(x, y, classes, n_avg: int) -> np.ndarray:
    """Spectrally subtracted cross-PSD over auto-PSD per bin, NaN where undetermined.

    This is the one-tap case of the DP-RTF solver, so both share one code path.
    """
    est = directional_estimate(x, y, 1, n_avg, classes=classes)
    return np.where(est.valid, est.g0, np.nan)


def estimate_rtf_mtf(signals, config: StftConfig, n_avg: int = 12, bins=None,
                     pairs=None) -> DpRtfFeature:
    """Normalised RTF feature from the one-tap estimator (channel-swap averaged)."""
    return estimate_dprtf(signals, config, 1, n_avg, bins, pairs)


def phat(cross: np.ndarray) -> np.ndarray:
    """Unit-magnitude cross-spectrum; zero entries stay zero."""
    mag = np.abs(cross)
    out = np.zeros_like(cross)
    nz = mag > 0
    out[nz] = cross[nz] / mag[nz]
    return out


def srp_phat_response(signals, training: TrainingSet, config: StftConfig) -> np.ndarray:
    """Steered response power at every training direction.

    The per-pair cross-spectrum is accumulated over frames (the source is
    static), PHAT-weighted per bin, and correlated with the phase of the
    steering cross-spectrum built from the direct-path transfer functions.
    """
    if training.atf is None:
        raise ValueError("training set carries no steering responses")
    tensor = signals if isinstance(signals, TimeFrequencyTensor) else stft_analyze(signals, config)
    if tensor.n_channels < 2:
        raise ValueError("SRP-PHAT needs at least two channels")
    x = tensor.data[:, :, training.bins]
    if not np.any(np.abs(x) > 0):
        raise ValueError("silent input")
    power = np.zeros(training.n_directions)
    n_ch = tensor.n_channels
    for i in range(n_ch):
        for j in range(i + 1, n_ch):
            psi = phat(np.sum(x[j] * np.conj(x[i]), axis=0))
            steer = phat(training.atf[:, j] * np.conj(training.atf[:, i]))
            power += np.real(np.conj(steer) @ psi)
    return power


def srp_phat_localize(signals, training: TrainingSet, config: StftConfig) -> float:
    """Azimuth (degrees) maximising the steered response power."""
    return float(training.azimuths[int(np.argmax(srp_phat_response(signals, training, config)))])
