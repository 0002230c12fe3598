"""Batch localisation experiments over acoustic condition grids, and noise-statistics curves."""
from __future__ import annotations

import csv
import functools
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .baselines import estimate_rtf_mtf, srp_phat_localize
from .classify import equivalent_sequence_length, erlang_pdf_cdf
from .estimate import estimate_dprtf, q_from_t60
from .localize import TRAINING_AZIMUTHS, TrainingSet, anechoic_training_set, nearest_neighbor
from .psd import estimate_auto_psd
from .sim import NOISE_KINDS, SceneConfig, mix_scene, simulate_brir
from .speech import synthetic_speech
from .stft import StftConfig, stft_analyze
from .wavio import read_wav

log = logging.getLogger(__name__)

METHODS = ("dprtf", "rtf-mtf", "srp-phat")
CSV_COLUMNS = ("t60_s", "distance_m", "snr_db", "noise_kind", "method", "trial",
               "utterance", "truth_deg", "estimate_deg", "abs_error_deg")


@dataclass
class ExperimentConfig:
    """Condition grid and estimator settings.

    ``utterances`` lists WAV paths; when empty, trial ``t`` uses synthetic
    speech seeded with ``seed + t``. Trial ``t`` draws its source azimuth
    and noise from ``seed + t`` as well, so every grid cell sees the same
    sources and utterances.
    """

    t60s: list = field(default_factory=lambda: [0.5])
    distances: list = field(default_factory=lambda: [2.0])
    snrs: list = field(default_factory=lambda: [10.0])
    noise_kinds: list = field(default_factory=lambda: ["mixed"])
    window_length: int = 256
    frame_step: int = 128
    n_avg: int = 12
    q_fraction: float = 0.25
    n_taps: int | None = None
    utterances: list = field(default_factory=list)
    utterance_seconds: float = 3.0
    trials: int = 1
    seed: int = 0
    azimuths: list = field(default_factory=lambda: TRAINING_AZIMUTHS.tolist())
    methods: list = field(default_factory=lambda: list(METHODS))
    workers: int = 1
    output: str = "results.csv"

    def __post_init__(self):
        for name in ("t60s", "distances", "snrs", "noise_kinds", "azimuths", "methods"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                value = [value]
            if len(value) == 0:
                raise ValueError(f"{name} must not be empty")
            setattr(self, name, list(value))
        self.t60s = [float(v) for v in self.t60s]
        self.distances = [float(v) for v in self.distances]
        self.snrs = [float(v) for v in self.snrs]
        self.azimuths = [float(v) for v in self.azimuths]
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = set(self.noise_kinds) - set(NOISE_KINDS)
        if bad:
            raise ValueError(f"unknown noise kinds {sorted(bad)}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def stft(self) -> StftConfig:
        return StftConfig.default(self.window_length, self.frame_step)

    def taps_for(self, t60: float) -> int:
        if self.n_taps is not None:
            return int(self.n_taps)
        return q_from_t60(t60, 16000.0, self.frame_step, self.q_fraction)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResultRow:
    t60_s: float
    distance_m: float
    snr_db: float
    noise_kind: str
    method: str
    trial: int
    utterance: str
    truth_deg: float
    estimate_deg: float
    abs_error_deg: float
    error: str = ""

    def sort_key(self, kinds=NOISE_KINDS):
        return (self.t60_s, self.distance_m, self.snr_db, kinds.index(self.noise_kind),
                self.trial, METHODS.index(self.method))


def localization_error(estimates, truths) -> float:
    """Mean absolute azimuth error in degrees (no wrap-around)."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimates and truths differ in length")
    if est.size == 0:
        raise ValueError("no estimates")
    return float(np.mean(np.abs(est - tru)))


@functools.lru_cache(maxsize=8)
def _training(window_length: int, frame_step: int, azimuths: tuple) -> TrainingSet:
    return anechoic_training_set(StftConfig.default(window_length, frame_step),
                                 azimuths=np.asarray(azimuths))


@functools.lru_cache(maxsize=256)
def _brir(t60: float, position: tuple):
    return simulate_brir(SceneConfig(t60=t60, source_position=position))


def _utterance(cfg: ExperimentConfig, trial: int) -> tuple[str, np.ndarray]:
    if cfg.utterances:
        path = cfg.utterances[trial % len(cfg.utterances)]
        sig, _ = read_wav(path)
        return os.path.basename(str(path)), sig[0]
    seed = cfg.seed + trial
    return f"synthetic-{seed}", synthetic_speech(cfg.utterance_seconds, seed=seed)


def trial_azimuth(cfg: ExperimentConfig, trial: int) -> float:
    rng = np.random.default_rng(cfg.seed + trial)
    return float(cfg.azimuths[rng.integers(len(cfg.azimuths))])


def run_trial(cfg: ExperimentConfig, t60: float, distance: float, snr: float, kind: str,
              trial: int) -> list[ResultRow]:
    """All method rows for one grid cell and trial."""
    truth = trial_azimuth(cfg, trial)
    common = dict(t60_s=t60, distance_m=distance, snr_db=snr, noise_kind=kind, trial=trial,
                  truth_deg=truth)
    try:
        name, speech = _utterance(cfg, trial)
    except (OSError, ValueError) as exc:
        log.warning("trial %d: cannot read utterance: %s", trial, exc)
        return [ResultRow(method=m, utterance="unreadable", estimate_deg=math.nan,
                          abs_error_deg=math.nan, error=str(exc), **common)
                for m in cfg.methods]
    scene = SceneConfig(t60=t60, noise_kind=kind, snr_db=snr, seed=cfg.seed + trial)
    scene = scene.with_source(truth, distance)
    brir = _brir(t60, scene.source_position)
    noise_brir = _brir(t60, scene.noise_position) if kind != "uncorrelated" else None
    signals = mix_scene(speech, scene, brir=brir, noise_brir=noise_brir)
    stft_cfg = cfg.stft()
    training = _training(cfg.window_length, cfg.frame_step, tuple(cfg.azimuths))
    tensor = stft_analyze(signals, stft_cfg)
    rows = []
    for method in cfg.methods:
        try:
            if method == "dprtf":
                est = nearest_neighbor(estimate_dprtf(tensor, stft_cfg, cfg.taps_for(t60),
                                                      cfg.n_avg), training)
            elif method == "rtf-mtf":
                est = nearest_neighbor(estimate_rtf_mtf(tensor, stft_cfg, cfg.n_avg), training)
            else:
                est = srp_phat_localize(tensor, training, stft_cfg)
            err = ""
        except ValueError as exc:
            est, err = math.nan, str(exc)
            log.warning("trial %d %s: %s", trial, method, exc)
        rows.append(ResultRow(method=method, utterance=name, estimate_deg=est,
                              abs_error_deg=abs(est - truth), error=err, **common))
    return rows


def _jobs(cfg: ExperimentConfig):
    for t60 in cfg.t60s:
        for dist in cfg.distances:
            for snr in cfg.snrs:
                for kind in cfg.noise_kinds:
                    for trial in range(cfg.trials):
                        yield (t60, dist, snr, kind, trial)


def _run_job(args):
    cfg, job = args
    return run_trial(cfg, *job)


def run_grid(cfg: ExperimentConfig) -> list[ResultRow]:
    """Every method on every cell and trial, in canonical order."""
    jobs = list(_jobs(cfg))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_job, [(cfg, j) for j in jobs]))
    else:
        parts = [run_trial(cfg, *j) for j in jobs]
    rows = [r for part in parts for r in part]
    return sorted(rows, key=ResultRow.sort_key)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".6g")
    return str(v)


def results_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_results_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(results_csv(rows))


def summarize(rows) -> dict:
    """Mean error per (cell, method) over trials with an estimate."""
    groups: dict = {}
    for r in rows:
        if math.isnan(r.estimate_deg):
            continue
        key = (r.t60_s, r.distance_m, r.snr_db, r.noise_kind, r.method)
        groups.setdefault(key, ([], []))
        groups[key][0].append(r.estimate_deg)
        groups[key][1].append(r.truth_deg)
    return {k: localization_error(*v) for k, v in groups.items()}


def noise_psd_extremes(n_seq: int, n_avg: int, n_sequences: int, config: StftConfig | None = None,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Minimum and maximum of ``n_seq`` consecutive D-frame averaged WGN periodograms.

    Values are in units of ``lambda / D`` (``lambda`` the periodogram mean),
    so each averaged periodogram has mean ``D``. Each usable bin of each
    simulated signal provides one sequence; ``n_sequences`` are returned.
    """
    config = config or StftConfig.rectangular(256)
    rng = np.random.default_rng(seed)
    bins = np.arange(1, config.n_bins - 1)
    n_frames = n_seq + n_avg - 1
    n_samples = (n_frames - 1) * config.frame_step + config.window_length
    lam = np.sum(config.analysis_window ** 2)
    mins, maxs = [], []
    for _ in range(math.ceil(n_sequences / len(bins))):
        x = stft_analyze(rng.standard_normal(n_samples), config).data[0][:, bins]
        xi = estimate_auto_psd(x, n_avg)[n_avg - 1:] * n_avg / lam
        mins.append(xi.min(axis=0))
        maxs.append(xi.max(axis=0))
    return np.concatenate(mins)[:n_sequences], np.concatenate(maxs)[:n_sequences]


def minmax_cdf_curves(n_seq: int, n_avg: int = 12, step: int = 1, n_sequences: int = 10000,
                      points: int = 301, config: StftConfig | None = None, seed: int = 0):
    """Analytic and Monte-Carlo CDFs of the sequence minimum and maximum.

    Returns a dict of equally long columns over ``xi`` in ``[0, 3D]``.
    """
    n_eff = equivalent_sequence_length(n_seq, step, n_avg)
    xi = np.linspace(0.0, 3.0 * n_avg, points)
    _, F = erlang_pdf_cdf(xi, n_avg, 1.0)
    mins, maxs = noise_psd_extremes(n_seq, n_avg, n_sequences, config, seed)
    return {
        "xi": xi,
        "analytic_min": 1.0 - (1.0 - F) ** n_eff,
        "analytic_max": F ** n_eff,
        "empirical_min": np.searchsorted(np.sort(mins), xi, side="right") / mins.size,
        "empirical_max": np.searchsorted(np.sort(maxs), xi, side="right") / maxs.size,
        "n_eff": np.full(points, n_eff),
    }


def curves_csv(curves: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(curves)
    writer.writerow(cols)
    for row in zip(*(curves[c] for c in cols)):
        writer.writerow([format(v, ".6g") for v in row])
    return buf.getvalue()

