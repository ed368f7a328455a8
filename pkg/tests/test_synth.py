import json

import numpy as np
import pytest
from scipy.signal import fftconvolve

from echoforge import synth
from echoforge.errors import ConfigError

FAST_SPEC = dict(synth.DEFAULT_SUITE_SPEC, clips_per_class=1, duration_s=1.5,
                 path_len=400)


class TestEchoPath:
    def test_zero_rt60_is_delta(self):
        h = synth.gen_echo_path(0, 0.0, 256)
        assert h[0] == 1.0 and np.all(h[1:] == 0.0)

    def test_determinism(self):
        a = synth.gen_echo_path(7, 300.0, 4800)
        b = synth.gen_echo_path(7, 300.0, 4800)
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        h = synth.gen_echo_path(3, 200.0, 2000)
        assert np.linalg.norm(h) == pytest.approx(1.0)

    def test_rt60_decay_by_regression(self):
        # fitted log-energy slope should drop 60 dB over rt60
        h = synth.gen_echo_path(11, 300.0, 4800)
        n = np.arange(1, len(h))  # skip the direct-path spike
        logsq = 10 * np.log10(h[1:] ** 2 + 1e-30)
        slope = np.polyfit(n, logsq, 1)[0]  # dB per sample
        drop = -slope * 4800
        assert abs(drop - 60.0) <= 3.0


class TestEffects:
    def test_small_gain_sigmoid_is_identity(self):
        rng = np.random.default_rng(0)
        x = 0.5 * rng.standard_normal(1000)
        y = synth.apply_effects(x, [synth.EffectDescriptor("sigmoid_nl", {"gain": 1e-4})])
        assert np.max(np.abs(y - x)) < 1e-4

    def test_full_level_clip_is_identity(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(500)
        y = synth.apply_effects(x, [synth.EffectDescriptor("clip", {"level": 1.0})])
        assert np.array_equal(x, y)

    def test_bandlimit_removes_high_band(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(16000)
        y = synth.apply_effects(x, [synth.EffectDescriptor("bandlimit", {"cutoff_hz": 4000.0})])
        spec = np.abs(np.fft.rfft(y)) ** 2
        freqs = np.arange(spec.size) * 16000 / len(y)
        hi = np.sum(spec[freqs > 4100])
        lo = np.sum(spec[freqs <= 4000])
        assert 10 * np.log10(hi / lo + 1e-30) < -60.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            synth.apply_effects(np.ones(10), [synth.EffectDescriptor("reverb")])


class TestMixScenario:
    def test_eq1_reconstruction_exact(self):
        scn = synth.build_scenario("dt", 9, FAST_SPEC)
        assert np.array_equal(scn.mic, scn.echo + scn.near_end + scn.noise)

    def test_no_echo_with_infinite_ser(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(8000)
        s = synth.speech_like(4, 0.5)
        scn = synth.mix_scenario(x, s, synth.gen_echo_path(5, 50.0, 100),
                                 ser_db=np.inf)
        assert np.all(scn.echo == 0.0)
        assert np.array_equal(scn.mic, scn.near_end)

    def test_far_end_single_talk(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(8000)
        path = synth.gen_echo_path(6, 50.0, 100)
        scn = synth.mix_scenario(x, None, path, ser_db=None)
        assert np.all(scn.near_end == 0.0)
        assert np.allclose(scn.mic, fftconvolve(x, path)[:8000])

    def test_silent_nearend_with_finite_ser_rejected(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ConfigError, match="SER"):
            synth.mix_scenario(rng.standard_normal(8000), np.zeros(8000),
                               synth.gen_echo_path(6, 50.0, 100), ser_db=0.0)

    def test_ser_zero_equal_energies(self):
        x = synth.speech_like(7, 2.0)
        s = synth.speech_like(8, 2.0)
        scn = synth.mix_scenario(x, s, synth.gen_echo_path(9, 100.0, 400),
                                 ser_db=0.0)
        active = synth._active_mask(scn.near_end)
        measured = 10 * np.log10(np.sum(scn.near_end[active] ** 2)
                                 / np.sum(scn.echo[active] ** 2))
        assert abs(measured) <= 0.1

    def test_ser_accuracy_across_levels(self):
        for ser in (-6.0, 3.0, 10.0):
            scn = synth.mix_scenario(synth.speech_like(10, 1.0),
                                     synth.speech_like(11, 1.0),
                                     synth.gen_echo_path(12, 100.0, 400),
                                     ser_db=ser)
            active = synth._active_mask(scn.near_end)
            measured = 10 * np.log10(np.sum(scn.near_end[active] ** 2)
                                     / np.sum(scn.echo[active] ** 2))
            assert abs(measured - ser) <= 0.1


class TestSuite:
    def test_counts_and_manifests(self, tmp_path):
        spec = dict(FAST_SPEC, clips_per_class=2)
        dirs = synth.gen_suite(spec, tmp_path / "suite")
        assert len(dirs) == 10  # 5 classes x 2
        for d in dirs:
            man = synth.load_manifest(d)
            assert set(man["files"]) == {"mic", "farend", "nearend", "echo", "noise"}
            assert (d / "mic.wav").exists()

    def test_path_change_recorded(self, tmp_path):
        spec = dict(FAST_SPEC, classes=["dt_pathchange"])
        (d,) = synth.gen_suite(spec, tmp_path / "suite")
        man = synth.load_manifest(d)
        assert "path_change_sample" in man
        assert (d / "echo_path_after.npy").exists()

    def test_master_seed_determinism(self, tmp_path):
        spec = dict(FAST_SPEC, classes=["dt", "st_fe"])
        synth.gen_suite(spec, tmp_path / "a")
        synth.gen_suite(spec, tmp_path / "b")
        for rel in ["dt_000/mic.wav", "st_fe_000/mic.wav", "dt_000/manifest.json"]:
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes()

    def test_path_change_uses_new_path_after_switch(self):
        spec = dict(FAST_SPEC, noise_snr_db=None, effect_probability=0.0)
        scn = synth.build_scenario("st_fe_pathchange", 13, spec)
        at, new_path = scn.path_change
        # well after the crossfade, echo equals far end through the new path
        ref = fftconvolve(synth.apply_effects(
            np.concatenate([np.zeros(scn.delay), scn.far_end])[: len(scn.far_end)],
            scn.effects), new_path)[: len(scn.far_end)]
        # mix_scenario rescales echo for SER only in DT; st_fe keeps scale
        tail = slice(at + 1000, len(scn.far_end))
        assert np.allclose(scn.echo[tail], ref[tail], atol=1e-10)
