import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dprtf.estimate import DpRtfFeature, estimate_dprtf
from dprtf.localize import (TABLE_MAGIC, TrainingSet, anechoic_training_set, build_training_set,
                            feature_distances, load_training_set, nearest_index, nearest_neighbor,
                            save_training_set)
from dprtf.sim import SceneConfig, mix_scene, simulate_brir, truncate_to_direct_path
from dprtf.speech import synthetic_speech
from dprtf.stft import StftConfig


@functools.lru_cache(maxsize=1)
def table():
    return anechoic_training_set(StftConfig.default())


def test_training_grid_size_and_layout():
    t = table()
    assert t.n_directions == 37
    assert t.features.shape == (37, 1, 64)
    assert t.pairs == ((0, 1),)
    assert np.all(np.abs(t.features) < 1)


def test_broadside_has_zero_phase():
    t = table()
    i = int(np.flatnonzero(t.azimuths == 0.0)[0])
    np.testing.assert_allclose(np.angle(t.features[i]), 0.0, atol=1e-9)


def test_rebuild_bit_identical():
    a = anechoic_training_set(StftConfig.default())
    b = anechoic_training_set(StftConfig.default())
    assert a.features.tobytes() == b.features.tobytes()


def test_directions_must_be_unique():
    f = np.zeros((2, 1, 3), complex)
    with pytest.raises(ValueError):
        TrainingSet([0.0, 0.0], None, f, [1, 2, 3], [(0, 1)])


def test_exact_entry_is_found():
    t = table()
    for i in (0, 10, 36):
        assert nearest_neighbor(t.feature(i), t) == t.azimuths[i]


def _random_feature(t, rng, mask_prob=0.3):
    shape = t.features.shape[1:]
    c = 0.7 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    h = rng.random(shape) > mask_prob
    if not h.any():
        h.flat[0] = True
    return DpRtfFeature(c, h, t.bins, t.pairs)


def test_single_bin_mask_oracle():
    t = table()
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = _random_feature(t, rng)
        k = int(rng.integers(t.features.shape[2]))
        h = np.zeros_like(f.h)
        h[0, k] = True
        g = DpRtfFeature(f.c, h, t.bins, t.pairs)
        scalar = np.abs(f.c[0, k] - t.features[:, 0, k])
        assert nearest_index(g, t) == int(np.argmin(scalar))


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_masked_entries_never_matter(seed):
    t = table()
    rng = np.random.default_rng(seed)
    f = _random_feature(t, rng)
    junk = np.where(f.h, f.c, 10 * (rng.standard_normal(f.c.shape) + 1j))
    g = DpRtfFeature(junk, f.h, t.bins, t.pairs)
    # DpRtfFeature zeroes masked entries; compare against the raw distance too
    assert nearest_index(f, t) == nearest_index(g, t)
    d = feature_distances(f, t)
    assert np.all(d >= 0)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=20, deadline=None)
def test_permuting_bins_consistently_keeps_decision(seed):
    t = table()
    rng = np.random.default_rng(seed)
    f = _random_feature(t, rng)
    perm = rng.permutation(t.features.shape[2])
    tp = TrainingSet(t.azimuths, t.elevations, t.features[:, :, perm], t.bins, t.pairs)
    fp = DpRtfFeature(f.c[:, perm], f.h[:, perm], t.bins, t.pairs)
    assert nearest_index(f, t) == nearest_index(fp, tp)


def test_ties_go_to_lowest_index_and_empty_mask_errors():
    feats = np.array([[[0.5]], [[0.5]], [[0.1]]], dtype=complex)
    t = TrainingSet([10.0, 20.0, 30.0], None, feats, [1], [(0, 1)])
    assert nearest_neighbor(DpRtfFeature([[0.5]], [[True]], [1], [(0, 1)]), t) == 10.0
    with pytest.raises(ValueError, match="no valid frequencies"):
        nearest_neighbor(DpRtfFeature([[0.5]], [[False]], [1], [(0, 1)]), t)


def test_layout_mismatch_rejected():
    t = table()
    f = DpRtfFeature(np.zeros((1, 3)), np.ones((1, 3), bool), [1, 2, 3], [(0, 1)])
    with pytest.raises(ValueError):
        nearest_neighbor(f, t)


def test_truncated_response_localizes_exactly():
    cfg = StftConfig.default()
    t = table()
    speech = synthetic_speech(2.0, seed=5)
    for az in (-70.0, -15.0, 35.0, 80.0):
        scene = SceneConfig(t60=0.5).with_source(az, 1.0)
        brir = truncate_to_direct_path(simulate_brir(scene))
        sig = mix_scene(speech, scene, brir=brir)
        assert nearest_neighbor(estimate_dprtf(sig, cfg, 2), t) == az


def test_build_drops_bins_with_vanishing_reference():
    cfg = StftConfig.default()
    base = SceneConfig(absorption=1.0)
    hrirs = [truncate_to_direct_path(simulate_brir(base.with_source(az, 1.0))) for az in (0, 30)]
    dead = type(hrirs[0])(np.zeros_like(hrirs[0].responses), 16000, hrirs[0].direct_path_onset,
                          hrirs[0].origin)
    t = build_training_set([hrirs[1], dead], [30.0, 0.0], cfg, bins=[1, 2, 3])
    assert t.features.shape[2] == 0
    t = build_training_set(hrirs, [0.0, 30.0], cfg)
    assert t.features.shape == (2, 1, 64)
    with pytest.raises(ValueError):
        build_training_set(hrirs, [0.0], cfg)


def test_save_load_roundtrip(tmp_path):
    t = table()
    path = tmp_path / "table.dprtf"
    save_training_set(path, t)
    assert path.read_bytes()[:len(TABLE_MAGIC)] == TABLE_MAGIC
    u = load_training_set(path)
    assert u.features.tobytes() == t.features.tobytes()
    np.testing.assert_array_equal(u.atf, t.atf)
    assert (u.window_length, u.frame_step, u.sample_rate) == (256, 128, 16000.0)
    assert u.pairs == t.pairs


def test_load_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(b"NOTATABLE")
    with pytest.raises(ValueError, match="not a training table"):
        load_training_set(bad)
    t = table()
    path = tmp_path / "table.dprtf"
    save_training_set(path, t)
    blob = bytearray(path.read_bytes())
    blob[len(TABLE_MAGIC)] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="version"):
        load_training_set(path)
