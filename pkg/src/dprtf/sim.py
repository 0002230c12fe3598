"""Shoebox image-source simulator and scene mixing."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, sosfilt

from .stft import StftConfig, band_bins, ctf_from_impulse_response

SPEED_OF_SOUND = 343.0
SINC_TAPS = 81
SINC_HALF = SINC_TAPS // 2
NOISE_KINDS = ("uncorrelated", "directional", "mixed")

DEFAULT_ROOM = (8.0, 5.0, 3.0)
DEFAULT_CENTER = (4.0, 1.0, 1.5)
DEFAULT_OFFSETS = ((-0.1, 0.0, 0.0), (0.1, 0.0, 0.0))


class GeometryError(ValueError):
    pass


def direction_vector(azimuth_deg: float, elevation_deg: float = 0.0) -> np.ndarray:
    """Unit vector; azimuth 0 faces +y, positive azimuth turns toward +x."""
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    return np.array([np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el)])


def position_at(center, azimuth_deg: float, distance: float, elevation_deg: float = 0.0) -> tuple:
    p = np.asarray(center, float) + distance * direction_vector(azimuth_deg, elevation_deg)
    return tuple(float(v) for v in p)


def default_noise_position(center=DEFAULT_CENTER) -> tuple:
    # beside the wall: azimuth 120 deg, elevation 30 deg, 2.2 m
    return position_at(center, 120.0, 2.2, 30.0)


@dataclass(frozen=True)
class SceneConfig:
    room_dims: tuple = DEFAULT_ROOM
    t60: float = 0.5
    source_position: tuple = position_at(DEFAULT_CENTER, 0.0, 1.0)
    array_center: tuple = DEFAULT_CENTER
    mic_offsets: tuple = DEFAULT_OFFSETS
    noise_kind: str = "mixed"
    noise_position: tuple = field(default_factory=default_noise_position)
    snr_db: float = math.inf
    seed: int = 0
    sample_rate: float = 16000.0
    absorption: float | None = None  # overrides the Sabine value when set; 1.0 = anechoic

    def __post_init__(self):
        room = np.asarray(self.room_dims, float)
        if room.shape != (3,) or np.any(room <= 0):
            raise GeometryError("room_dims must be three positive lengths")
        if not self.t60 > 0:
            raise ValueError("T60 must be positive")
        if len(self.mic_offsets) < 2:
            raise GeometryError("need at least two microphones")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")
        for name, pos in [("source", self.source_position), ("noise source", self.noise_position)]:
            _check_inside(pos, room, name)
        for i, pos in enumerate(self.mic_positions):
            _check_inside(pos, room, f"microphone {i}")

    @property
    def mic_positions(self) -> np.ndarray:
        return np.asarray(self.array_center, float) + np.asarray(self.mic_offsets, float)

    @property
    def n_mics(self) -> int:
        return len(self.mic_offsets)

    def with_source(self, azimuth_deg: float, distance: float, elevation_deg: float = 0.0) -> "SceneConfig":
        return replace(self, source_position=position_at(self.array_center, azimuth_deg,
                                                          distance, elevation_deg))

    def wall_absorption(self) -> float:
        """Frequency-independent absorption, equal on all six walls."""
        if self.absorption is not None:
            return float(self.absorption)
        return calibrated_absorption(tuple(map(float, self.room_dims)), float(self.t60),
                                     float(self.sample_rate))


def _check_inside(pos, room, name):
    p = np.asarray(pos, float)
    if p.shape != (3,) or np.any(p <= 0) or np.any(p >= room):
        raise GeometryError(f"{name} at {tuple(p)} is not strictly inside the room")


@dataclass(frozen=True, eq=False)
class Brir:
    """Per-microphone impulse responses sharing one time axis.

    Index ``origin`` is time zero, placed on the earliest direct-path
    arrival; the few samples before it hold the leading half of the
    fractional-delay kernels. ``delay_removed`` (samples) is the propagation
    delay dropped from the front, so the absolute direct-path arrival of mic
    ``m`` is ``direct_path_onset[m] - origin + delay_removed``.
    ``first_reflection`` is the first sample touched by the earliest
    reflection, or None for an anechoic response.
    """

    responses: np.ndarray
    sample_rate: float
    direct_path_onset: np.ndarray
    origin: int = 0
    delay_removed: float = 0.0
    first_reflection: np.ndarray | None = None

    @property
    def n_mics(self) -> int:
        return self.responses.shape[0]


def _sinc_kernel(frac_delays: np.ndarray):
    """Hann-windowed sinc taps for delays relative to their rounded centre."""
    offs = np.arange(-SINC_HALF, SINC_HALF + 1)
    x = offs[None, :] - frac_delays[:, None]
    win = 0.5 * (1 + np.cos(np.pi * x / (SINC_HALF + 1)))
    return np.sinc(x) * win, offs


_FRAC_STEPS = 256
_KERNEL_TABLE, _ = _sinc_kernel((np.arange(_FRAC_STEPS) / _FRAC_STEPS) - 0.5)
EXACT_SPAN = 1024  # samples after the direct path rendered with exact fractional delays
HPF_CUTOFF = 100.0  # Hz, applied to reflections only


def _image_sources(src, room, max_dist):
    """Image positions and wall-hit counts of a shoebox, up to ``max_dist`` per axis."""
    src = np.asarray(src, float)
    room = np.asarray(room, float)
    per_axis = []
    for ax in range(3):
        n = int(math.ceil(max_dist / (2 * room[ax]))) + 1
        r = np.arange(-n, n + 1)
        pos = np.concatenate([src[ax] + 2 * r * room[ax], -src[ax] + 2 * r * room[ax]])
        hits = np.concatenate([np.abs(2 * r), np.abs(2 * r - 1)])
        per_axis.append((pos, hits))
    (px, hx), (py, hy), (pz, hz) = per_axis
    gx, gy, gz = np.meshgrid(px, py, pz, indexing="ij")
    cx, cy, cz = np.meshgrid(hx, hy, hz, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return pos, (cx + cy + cz).ravel()


def _render(delay, gain, length):
    """Sum of fractional-delay pulses; late pulses use a quantised kernel table."""
    out = np.zeros(length)
    centre = np.rint(delay).astype(int)
    exact = delay < delay.min() + EXACT_SPAN
    if np.any(exact):
        taps, offs = _sinc_kernel(delay[exact] - centre[exact])
        idx = centre[exact, None] + offs[None, :]
        vals = taps * gain[exact, None]
        ok = (idx >= 0) & (idx < length)
        out += np.bincount(idx[ok], weights=vals[ok], minlength=length)
    late = ~exact
    if np.any(late):
        c = centre[late]
        phase = np.clip(((delay[late] - c + 0.5) * _FRAC_STEPS).astype(int), 0, _FRAC_STEPS - 1)
        pad = length + 2 * SINC_HALF
        ok = (c + SINC_HALF >= 0) & (c + SINC_HALF < pad)
        flat = phase[ok] * pad + c[ok] + SINC_HALF
        trains = np.bincount(flat, weights=gain[late][ok],
                             minlength=_FRAC_STEPS * pad).reshape(_FRAC_STEPS, pad)
        for ph in np.flatnonzero(trains.any(axis=1)):
            # kernel centred on the spike: full convolution shifted by SINC_HALF
            conv = np.convolve(trains[ph], _KERNEL_TABLE[ph])
            out += conv[2 * SINC_HALF:2 * SINC_HALF + length]
    return out


def image_source_responses(mics, src, room, beta, length, fs, delay_offset=0.0,
                           c=SPEED_OF_SOUND):
    """Image-source impulse responses, ``delay_offset`` samples subtracted from every path.

    Returns ``(responses, direct_delays, first_reflection_delays)`` with
    delays in fractional samples on the shifted axis. Paths arriving after
    ``length`` samples are dropped.
    """
    mics = np.atleast_2d(np.asarray(mics, float))
    max_dist = (length + delay_offset + SINC_HALF) * c / fs
    img, hits = _image_sources(src, room, max_dist if beta > 0 else 0.0)
    if beta == 0.0:
        img, hits = img[hits == 0], hits[hits == 0]
    hpf = butter(4, HPF_CUTOFF, btype="highpass", fs=fs, output="sos")
    out = np.zeros((len(mics), length))
    direct = np.empty(len(mics))
    first = np.full(len(mics), np.inf)
    for m, mic in enumerate(mics):
        dist = np.linalg.norm(img - mic, axis=1)
        delay = dist * fs / c - delay_offset
        sel = delay < length + SINC_HALF
        delay, d, h = delay[sel], dist[sel], hits[sel]
        gain = beta ** h / (4 * np.pi * d)
        direct[m] = delay[h == 0][0]
        out[m] = _render(delay[h == 0], gain[h == 0], length)
        if np.any(h > 0):
            first[m] = delay[h > 0].min()
            # positive reflection coefficients pile up at DC; high-pass the reflections only
            out[m] += sosfilt(hpf, _render(delay[h > 0], gain[h > 0], length))
    return out, direct, first


def _energy_arrivals(room, src, mic, length, fs):
    img, hits = _image_sources(src, room, length * SPEED_OF_SOUND / fs)
    dist = np.linalg.norm(img - np.asarray(mic, float), axis=1)
    idx = (dist * fs / SPEED_OF_SOUND).astype(int)
    ok = idx < length
    return idx[ok], hits[ok], 1.0 / (4 * np.pi * dist[ok]) ** 2


@functools.lru_cache(maxsize=64)
def calibrated_absorption(room_dims: tuple, t60: float, sample_rate: float) -> float:
    """Wall absorption whose image-source decay matches ``t60``.

    Sabine's formula gives the starting point. A shoebox image-source field
    is not diffuse, so the absorption is then adjusted by bisection until
    the Schroeder-integral T60 of the (incoherent) energy arrivals equals the
    request. Source and receiver sit at fixed off-centre points so the result
    is a property of the room alone.
    """
    room = np.asarray(room_dims, float)
    lx, ly, lz = room
    sabine = 0.161 * lx * ly * lz / (2 * (lx * ly + lx * lz + ly * lz) * t60)
    if sabine >= 1.0:
        raise ValueError(f"T60={t60} s is too short for this room (Sabine alpha >= 1)")
    length = int(math.ceil(1.5 * t60 * sample_rate))
    idx, hits, spread = _energy_arrivals(room, room * np.array([0.37, 0.41, 0.45]),
                                         room * np.array([0.63, 0.59, 0.55]), length, sample_rate)

    def decay(alpha):
        w = (1.0 - alpha) ** hits * spread
        return edc_t60(np.bincount(idx, weights=w, minlength=length), sample_rate, energy=True)

    lo, hi = 1e-3, 0.999
    if decay(sabine) > t60:
        lo = sabine
    else:
        hi = sabine
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if decay(mid) > t60:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-5:
            break
    return 0.5 * (lo + hi)


def edc_t60(h, fs, energy=False, fit_db=(-5.0, -25.0)) -> float:
    """Reverberation time from a straight-line fit to the Schroeder energy decay curve."""
    e = np.asarray(h, float) if energy else np.asarray(h, float) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(edc / edc[0])
    start = np.argmax(db <= fit_db[0])
    stop = np.argmax(db <= fit_db[1])
    if stop <= start + 1:
        raise ValueError("decay curve too short to fit")
    t = np.arange(len(e)) / fs
    slope = np.polyfit(t[start:stop], db[start:stop], 1)[0]
    return -60.0 / slope


def simulate_brir(scene: SceneConfig, source_position=None, length_s: float | None = None,
                  align: bool = True) -> Brir:
    """Image-source BRIRs from a source to every microphone of ``scene``.

    The response covers ``1.5 * T60`` (or ``length_s``) past the direct
    path. With ``align`` the common propagation delay is removed so that the
    earliest direct path lands exactly on index ``origin = 40``.
    """
    fs = scene.sample_rate
    src = scene.source_position if source_position is None else tuple(source_position)
    _check_inside(src, np.asarray(scene.room_dims, float), "source")
    mics = scene.mic_positions
    beta = math.sqrt(max(0.0, 1.0 - scene.wall_absorption()))
    delays = np.linalg.norm(mics - np.asarray(src), axis=1) * fs / SPEED_OF_SOUND
    if length_s is None:
        length_s = 1.5 * scene.t60 if beta > 0 else 0.0
    shift, origin = (delays.min(), SINC_HALF) if align else (0.0, 0)
    offset = shift - origin
    span = delays.max() - offset
    length = max(int(math.ceil(length_s * fs)), int(math.ceil(span)) + SINC_HALF + 1)
    raw, direct, first = image_source_responses(mics, src, scene.room_dims, beta, length, fs,
                                                delay_offset=offset)
    onset = np.rint(direct).astype(int)
    first_refl = None
    if np.all(np.isfinite(first)):
        first_refl = np.maximum(np.rint(first).astype(int) - SINC_HALF, onset + 1)
    return Brir(raw, fs, onset, origin, float(shift), first_refl)


def truncate_to_direct_path(brir: Brir) -> Brir:
    """Zero every sample from the first reflection onward (anechoic input is returned as is)."""
    if brir.first_reflection is None:
        return brir
    out = brir.responses.copy()
    for m, cut in enumerate(brir.first_reflection):
        out[m, cut:] = 0.0
    return Brir(out, brir.sample_rate, brir.direct_path_onset, brir.origin,
                brir.delay_removed, None)


def direct_path_atf(brir: Brir, config: StftConfig) -> np.ndarray:
    """First CTF tap of every channel, shaped ``(mic, bin)``."""
    return np.stack([
        ctf_from_impulse_response(r, config, 1, origin=brir.origin).taps[:, 0]
        for r in brir.responses
    ])


def ground_truth_dprtf(brir: Brir, config: StftConfig, mic_pair=(0, 1), bins=None):
    """Direct-path RTF ``b0/a0`` between ``mic_pair = (i, j)`` (``i`` is the reference).

    Returns ``(d, valid)``; bins where the reference tap vanishes are marked
    invalid and hold 0 instead of a quotient.
    """
    if bins is None:
        bins = band_bins(config)
    atf = direct_path_atf(brir, config)[:, bins]
    i, j = mic_pair
    a, b = atf[i], atf[j]
    valid = np.abs(a) > 1e-12 * max(np.abs(a).max(), 1e-300)
    d = np.zeros(len(bins), dtype=complex)
    d[valid] = b[valid] / a[valid]
    return d, valid


def direct_to_reverberant_ratio(brir: Brir, mic: int = 0, window_ms: float = 2.5) -> float:
    """DRR in dB with the direct part taken as +-``window_ms`` around the onset."""
    h = brir.responses[mic]
    half = int(round(window_ms * 1e-3 * brir.sample_rate))
    onset = int(brir.direct_path_onset[mic])
    lo, hi = max(0, onset - half), onset + half + 1
    direct = np.sum(h[lo:hi] ** 2)
    rest = np.sum(h ** 2) - direct
    return 10 * np.log10(direct / rest) if rest > 0 else math.inf


def _convolve_channels(signal, responses, n_out):
    from scipy.signal import fftconvolve
    return np.stack([fftconvolve(signal, r)[:n_out] for r in responses])


def mix_scene(speech, scene: SceneConfig, brir: Brir | None = None,
              noise_brir: Brir | None = None, return_parts: bool = False):
    """Reverberant speech plus scaled noise at every microphone.

    Speech and noise are scaled so that the summed speech power over all
    channels and the whole utterance is ``snr_db`` above the summed noise
    power. Output length equals ``len(speech)``. Mixed noise is the sum of
    directional and uncorrelated noise at equal power.
    """
    s = np.asarray(speech, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("speech must be a non-empty 1-D signal")
    if brir is None:
        brir = simulate_brir(scene)
    n = s.size
    clean = _convolve_channels(s, brir.responses, n)
    noise = np.zeros_like(clean)
    if math.isfinite(scene.snr_db):
        rng = np.random.default_rng(scene.seed)
        parts = []
        if scene.noise_kind in ("directional", "mixed"):
            if noise_brir is None:
                noise_brir = simulate_brir(scene, source_position=scene.noise_position)
            lead = noise_brir.responses.shape[1]
            wgn = rng.standard_normal(n + lead)
            # drop the convolution warm-up so the noise is stationary from sample 0
            parts.append(_convolve_channels(wgn, noise_brir.responses, n + lead)[:, lead:])
        if scene.noise_kind in ("uncorrelated", "mixed"):
            parts.append(rng.standard_normal((scene.n_mics, n)))
        for part in parts:
            noise += part / np.sqrt(np.mean(part ** 2))
        p_speech = np.mean(clean ** 2)
        p_noise = np.mean(noise ** 2)
        noise *= np.sqrt(p_speech / (p_noise * 10 ** (scene.snr_db / 10)))
    mixed = clean + noise
    if return_parts:
        return mixed, clean, noise
    return mixed
