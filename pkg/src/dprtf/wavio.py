"""WAV reading and writing (16-bit PCM or 32-bit float), channels-first arrays."""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile

CANONICAL_RATE = 16000


def read_wav(path, expected_rate: int | None = CANONICAL_RATE) -> tuple[np.ndarray, int]:
    """Return ``(signals, rate)`` with ``signals`` float64 shaped ``(channels, samples)``.

    PCM16 is scaled to [-1, 1). A rate other than ``expected_rate`` is an
    error since resampling is not provided.
    """
    rate, data = wavfile.read(path)
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        out = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        out = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        out = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    out = out[None, :] if out.ndim == 1 else out.T
    return np.ascontiguousarray(out), int(rate)


def write_wav(path, signals, rate: int = CANONICAL_RATE, fmt: str = "float32") -> None:
    """Write ``(channels, samples)`` or 1-D ``signals``; ``fmt`` is ``float32`` or ``pcm16``."""
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("signals must be 1-D or (channels, samples)")
    if fmt == "float32":
        data = x.T.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(x.T * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError("fmt must be 'float32' or 'pcm16'")
    wavfile.write(path, int(rate), data[:, 0] if data.shape[1] == 1 else data)
