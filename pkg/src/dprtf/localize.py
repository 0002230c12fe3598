"""Training lookup table from anechoic direct-path responses and masked nearest-neighbour search."""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .estimate import DpRtfFeature, all_pairs, normalize_feature
from .sim import (DEFAULT_CENTER, DEFAULT_OFFSETS, DEFAULT_ROOM, Brir, SceneConfig,
                  direct_path_atf, simulate_brir, truncate_to_direct_path)
from .stft import StftConfig, band_bins

TABLE_MAGIC = b"DPRTFTAB"
TABLE_VERSION = 1
TRAINING_AZIMUTHS = np.arange(-90.0, 91.0, 5.0)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """``I`` directions with normalised direct-path features.

    ``features`` is ``(I, pairs, bins)``; ``atf`` holds the first CTF tap of
    each mic, ``(I, mics, bins)``, and serves as SRP steering vectors.
    """

    azimuths: np.ndarray
    elevations: np.ndarray
    features: np.ndarray
    bins: np.ndarray
    pairs: tuple
    atf: np.ndarray | None = None
    window_length: int = 256
    frame_step: int = 128
    sample_rate: float = 16000.0

    def __post_init__(self):
        az = np.asarray(self.azimuths, dtype=float)
        el = np.zeros_like(az) if self.elevations is None else np.asarray(self.elevations, float)
        feats = np.asarray(self.features, dtype=complex)
        if feats.ndim != 3 or feats.shape[0] != az.size or el.shape != az.shape:
            raise ValueError("features must be (directions, pairs, bins)")
        if len(set(zip(az.tolist(), el.tolist()))) != az.size:
            raise ValueError("training directions must be unique")
        if not np.all(np.isfinite(feats)):
            raise ValueError("training features must be finite")
        object.__setattr__(self, "azimuths", az)
        object.__setattr__(self, "elevations", el)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=int))
        object.__setattr__(self, "pairs", tuple(tuple(int(v) for v in p) for p in self.pairs))
        if self.atf is not None:
            object.__setattr__(self, "atf", np.asarray(self.atf, dtype=complex))

    @property
    def n_directions(self) -> int:
        return self.azimuths.size

    def feature(self, i: int) -> DpRtfFeature:
        f = self.features[i]
        return DpRtfFeature(f, np.ones(f.shape, bool), self.bins, self.pairs)


def build_training_set(hrirs: list[Brir], azimuths, config: StftConfig, elevations=None,
                       bins=None, pairs=None) -> TrainingSet:
    """Analytic features from direct-path responses, one per direction.

    Bins where any response has a vanishing reference tap are dropped from
    every entry so all features share one layout.
    """
    if bins is None:
        bins = band_bins(config)
    bins = np.asarray(bins, dtype=int)
    if len(hrirs) != len(azimuths):
        raise ValueError("one response per direction required")
    atf = np.stack([direct_path_atf(b, config)[:, bins] for b in hrirs])
    n_mics = atf.shape[1]
    if pairs is None:
        pairs = all_pairs(n_mics)
    ref = np.stack([atf[:, i] for i, _ in pairs], axis=1)
    tgt = np.stack([atf[:, j] for _, j in pairs], axis=1)
    scale = np.abs(atf).max()
    keep = np.all(np.abs(ref) > 1e-12 * scale, axis=(0, 1))
    d = tgt[:, :, keep] / ref[:, :, keep]
    feats = np.stack([normalize_feature(di, np.ones(di.shape, bool)).c for di in d])
    return TrainingSet(np.asarray(azimuths, float), elevations, feats, bins[keep], pairs,
                       atf[:, :, keep], config.window_length, config.frame_step,
                       config.sample_rate)


def anechoic_training_set(config: StftConfig | None = None, azimuths=TRAINING_AZIMUTHS,
                          radius: float = 1.0, room_dims=DEFAULT_ROOM,
                          array_center=DEFAULT_CENTER, mic_offsets=DEFAULT_OFFSETS,
                          bins=None) -> TrainingSet:
    """Lookup table from free-field responses on a circle around the array."""
    config = config or StftConfig.default()
    base = SceneConfig(room_dims=tuple(room_dims), array_center=tuple(array_center),
                       mic_offsets=tuple(map(tuple, mic_offsets)), absorption=1.0,
                       sample_rate=config.sample_rate)
    hrirs = [truncate_to_direct_path(simulate_brir(base.with_source(az, radius)))
             for az in azimuths]
    return build_training_set(hrirs, azimuths, config, bins=bins)


def feature_distances(feature: DpRtfFeature, training: TrainingSet) -> np.ndarray:
    """Masked Euclidean distance to every training entry."""
    if feature.c.shape != training.features.shape[1:]:
        raise ValueError("feature layout does not match the training set")
    if not np.array_equal(feature.bins, training.bins) or feature.pairs != training.pairs:
        raise ValueError("feature bins or pairs differ from the training set")
    h = feature.h
    if not np.any(h):
        raise ValueError("no valid frequencies")
    diff = (feature.c - training.features)[:, h]
    return np.sqrt(np.sum(np.abs(diff) ** 2, axis=1))


def nearest_index(feature: DpRtfFeature, training: TrainingSet) -> int:
    # argmin returns the first minimum, i.e. the lowest training index on ties
    return int(np.argmin(feature_distances(feature, training)))


def nearest_neighbor(feature: DpRtfFeature, training: TrainingSet) -> float:
    """Azimuth (degrees) of the closest training entry."""
    return float(training.azimuths[nearest_index(feature, training)])


def _arrays(training: TrainingSet) -> dict:
    out = {"azimuths": training.azimuths, "elevations": training.elevations,
           "features": training.features, "bins": training.bins,
           "pairs": np.asarray(training.pairs, dtype=int).reshape(-1, 2)}
    if training.atf is not None:
        out["atf"] = training.atf
    return out


def save_training_set(path, training: TrainingSet) -> None:
    """Binary table: magic, version, JSON header length and header, then an npz payload."""
    header = json.dumps({"window_length": training.window_length,
                         "frame_step": training.frame_step,
                         "sample_rate": training.sample_rate,
                         "n_directions": training.n_directions}, sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, **_arrays(training))
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<II", TABLE_VERSION, len(header)))
        fh.write(header)
        fh.write(buf.getvalue())


def load_training_set(path) -> TrainingSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(TABLE_MAGIC)] != TABLE_MAGIC:
        raise ValueError(f"{path}: not a training table")
    pos = len(TABLE_MAGIC)
    version, n_head = struct.unpack_from("<II", blob, pos)
    if version != TABLE_VERSION:
        raise ValueError(f"{path}: unsupported table version {version}")
    pos += 8
    meta = json.loads(blob[pos:pos + n_head])
    with np.load(io.BytesIO(blob[pos + n_head:])) as z:
        arr = {k: z[k] for k in z.files}
    return TrainingSet(arr["azimuths"], arr["elevations"], arr["features"], arr["bins"],
                       [tuple(p) for p in arr["pairs"]], arr.get("atf"),
                       int(meta["window_length"]), int(meta["frame_step"]),
                       float(meta["sample_rate"]))
