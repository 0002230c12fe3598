"""Speech-like test signals.

Real utterances are not bundled, so experiments default to a crude source-filter
babble: syllables of glottal pulse trains shaped by random formant resonators,
fricative noise bursts, and pauses. What matters for the estimators is that the
signal is non-stationary and sparse in time-frequency, which this provides.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter


def _resonator(freq, bandwidth, fs):
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return [1.0 - r], a


def _voiced(n, fs, rng):
    f0 = rng.uniform(90, 230)
    glide = rng.uniform(-0.3, 0.3)
    t = np.arange(n) / fs
    inst = f0 * (1 + glide * t / max(t[-1], 1e-9)) * (1 + 0.01 * rng.standard_normal(n).cumsum() / np.sqrt(n))
    phase = np.cumsum(inst) / fs
    pulses = np.diff(np.floor(phase), prepend=0.0)
    # glottal flow derivative approximated by a leaky integrator on the pulse train
    src = lfilter([1.0, -1.0], [1.0, -0.97], pulses)
    src += 0.03 * rng.standard_normal(n)
    formants = [(rng.uniform(300, 850), 80), (rng.uniform(850, 2300), 110),
                (rng.uniform(2300, 3400), 160)]
    out = np.zeros(n)
    for f, bw in formants:
        b, a = _resonator(f, bw, fs)
        out += lfilter(b, a, src)
    return out


def _fricative(n, fs, rng):
    noise = rng.standard_normal(n)
    b, a = _resonator(rng.uniform(2500, 6000), rng.uniform(800, 2000), fs)
    return lfilter(b, a, noise) * 0.5


def synthetic_speech(duration: float, sample_rate: float = 16000.0, seed: int = 0) -> np.ndarray:
    """Speech-like signal of ``duration`` seconds, unit RMS, deterministic in ``seed``."""
    fs = sample_rate
    rng = np.random.default_rng(seed)
    total = int(round(duration * fs))
    out = np.zeros(total)
    pos = int(rng.uniform(0.02, 0.1) * fs)
    while pos < total:
        n = int(rng.uniform(0.12, 0.35) * fs)
        seg = _fricative(n, fs, rng) if rng.random() < 0.2 else _voiced(n, fs, rng)
        env = np.hanning(n) ** 0.5 * rng.uniform(0.3, 1.0)
        end = min(total, pos + n)
        out[pos:end] += (seg * env)[:end - pos]
        gap = rng.uniform(0.0, 0.08) if rng.random() < 0.7 else rng.uniform(0.1, 0.3)
        pos = end + int(gap * fs)
    rms = np.sqrt(np.mean(out ** 2))
    return out / rms if rms > 0 else out
