"""Command-line interface: simulate, train, localize, bench, stats.

Settings come from an optional YAML file (``--config``) whose top-level keys
are the :class:`~dprtf.experiment.ExperimentConfig` field names; any flag
given on the command line overrides the matching key. Relative output paths
are resolved against ``$DPRTF_OUTPUT_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import yaml

from . import experiment as ex
from .baselines import estimate_rtf_mtf, srp_phat_localize
from .estimate import estimate_dprtf, q_from_t60
from .localize import anechoic_training_set, load_training_set, nearest_neighbor, save_training_set
from .sim import SceneConfig, mix_scene, simulate_brir
from .speech import synthetic_speech
from .stft import StftConfig
from .wavio import read_wav, write_wav

OUTPUT_ENV = "DPRTF_OUTPUT_DIR"


def _output_path(name) -> Path:
    p = Path(name)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def _settings(args, keys) -> dict:
    """Config file values overridden by flags that were actually given."""
    out = _load_config(args.config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _stft(settings) -> StftConfig:
    return StftConfig.default(int(settings.get("window_length", 256)),
                              int(settings.get("frame_step", 128)))


def _add_common(p):
    p.add_argument("--config", help="YAML settings file")
    p.add_argument("--window-length", dest="window_length", type=int)
    p.add_argument("--frame-step", dest="frame_step", type=int)


def cmd_simulate(args) -> int:
    s = _settings(args, ["t60", "azimuth", "distance", "snr", "noise_kind", "seed", "duration",
                         "utterance", "output"])
    scene = SceneConfig(t60=float(s.get("t60", 0.5)), noise_kind=s.get("noise_kind", "mixed"),
                        snr_db=float(s.get("snr", math.inf)), seed=int(s.get("seed", 0)))
    scene = scene.with_source(float(s.get("azimuth", 0.0)), float(s.get("distance", 2.0)))
    if s.get("utterance"):
        speech = read_wav(s["utterance"])[0][0]
    else:
        speech = synthetic_speech(float(s.get("duration", 3.0)), seed=scene.seed)
    brir = simulate_brir(scene)
    mixture = mix_scene(speech, scene, brir=brir)
    stem = _output_path(s.get("output", "scene"))
    write_wav(stem.with_suffix(".wav"), mixture)
    write_wav(stem.with_name(stem.name + "_brir.wav"), brir.responses)
    meta = {"t60_s": scene.t60, "azimuth_deg": float(s.get("azimuth", 0.0)),
            "distance_m": float(s.get("distance", 2.0)), "snr_db": scene.snr_db,
            "noise_kind": scene.noise_kind, "seed": scene.seed,
            "source_position": list(scene.source_position),
            "mic_positions": scene.mic_positions.tolist(),
            "direct_path_onset": brir.direct_path_onset.tolist(), "brir_origin": brir.origin}
    with open(stem.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, allow_nan=True)
        fh.write("\n")
    print(stem.with_suffix(".wav"))
    return 0


def cmd_train(args) -> int:
    s = _settings(args, ["window_length", "frame_step", "radius", "output"])
    table = anechoic_training_set(_stft(s), radius=float(s.get("radius", 1.0)))
    path = _output_path(s.get("output", "table.dprtf"))
    save_training_set(path, table)
    print(f"{path}: {table.n_directions} directions, {len(table.bins)} bins")
    return 0


def cmd_localize(args) -> int:
    s = _settings(args, ["table", "t60", "n_taps", "n_avg", "method"])
    if "table" in s:
        table = load_training_set(s["table"])
        cfg = StftConfig.default(table.window_length, table.frame_step, table.sample_rate)
    else:
        cfg = _stft(s)
        table = anechoic_training_set(cfg)
    signals, _ = read_wav(args.input, int(cfg.sample_rate))
    n_avg = int(s.get("n_avg", 12))
    method = s.get("method", "dprtf")
    if method == "dprtf":
        taps = s.get("n_taps") or q_from_t60(float(s.get("t60", 0.5)), cfg.sample_rate,
                                             cfg.frame_step)
        az = nearest_neighbor(estimate_dprtf(signals, cfg, int(taps), n_avg), table)
    elif method == "rtf-mtf":
        az = nearest_neighbor(estimate_rtf_mtf(signals, cfg, n_avg), table)
    else:
        az = srp_phat_localize(signals, table, cfg)
    print(f"{az:g}")
    return 0


BENCH_KEYS = ["t60s", "distances", "snrs", "noise_kinds", "window_length", "frame_step",
              "n_avg", "q_fraction", "n_taps", "utterances", "utterance_seconds", "trials",
              "seed", "methods", "workers", "output"]


def cmd_bench(args) -> int:
    s = _settings(args, BENCH_KEYS)
    cfg = ex.ExperimentConfig.from_dict(s)
    rows = ex.run_grid(cfg)
    path = _output_path(cfg.output)
    ex.write_results_csv(path, rows)
    for key, err in sorted(ex.summarize(rows).items()):
        print("t60=%g dist=%g snr=%g %s %-8s mean error %.2f deg" % (*key, err))
    print(path)
    return 0


def cmd_stats(args) -> int:
    s = _settings(args, ["n_seq", "n_avg", "step", "sequences", "seed", "output"])
    curves = ex.minmax_cdf_curves(int(s.get("n_seq", 69)), int(s.get("n_avg", 12)),
                                  int(s.get("step", 1)), int(s.get("sequences", 10000)),
                                  seed=int(s.get("seed", 0)))
    text = ex.curves_csv(curves)
    if s.get("output"):
        path = _output_path(s["output"])
        path.write_text(text, encoding="utf-8")
        print(path)
    else:
        sys.stdout.write(text)
    return 0


def _floats(text):
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dprtf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a noisy reverberant scene to WAV")
    _add_common(p)
    p.add_argument("--t60", type=float)
    p.add_argument("--azimuth", type=float)
    p.add_argument("--distance", type=float)
    p.add_argument("--snr", type=float, help="dB; omit for a noise-free scene")
    p.add_argument("--noise-kind", dest="noise_kind",
                   choices=["uncorrelated", "directional", "mixed"])
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="seconds of synthetic speech")
    p.add_argument("--utterance", help="mono WAV to use as the source signal")
    p.add_argument("-o", "--output", help="output stem")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="build the anechoic lookup table")
    _add_common(p)
    p.add_argument("--radius", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localize", help="print the azimuth of the source in a WAV file")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--table")
    p.add_argument("--t60", type=float)
    p.add_argument("--n-taps", dest="n_taps", type=int)
    p.add_argument("--n-avg", dest="n_avg", type=int)
    p.add_argument("--method", choices=list(ex.METHODS))
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("bench", help="run a condition grid and write CSV")
    _add_common(p)
    p.add_argument("--t60s", type=_floats)
    p.add_argument("--distances", type=_floats)
    p.add_argument("--snrs", type=_floats)
    p.add_argument("--noise-kinds", dest="noise_kinds", type=lambda t: t.split(","))
    p.add_argument("--methods", type=lambda t: t.split(","))
    p.add_argument("--utterances", nargs="+")
    p.add_argument("--utterance-seconds", dest="utterance_seconds", type=float)
    p.add_argument("--n-avg", dest="n_avg", type=int)
    p.add_argument("--q-fraction", dest="q_fraction", type=float)
    p.add_argument("--n-taps", dest="n_taps", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", help="min/max statistic CDF curves as CSV")
    p.add_argument("--config")
    p.add_argument("--n-seq", dest="n_seq", type=int)
    p.add_argument("--n-avg", dest="n_avg", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--sequences", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"dprtf {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
