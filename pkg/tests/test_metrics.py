import json

import numpy as np
import pytest

from echoforge import audio_io, metrics, synth


def make_clip(tmp_path, cls="st_fe", seed=0):
    spec = dict(synth.DEFAULT_SUITE_SPEC, duration_s=1.5, path_len=400)
    scn = synth.build_scenario(cls, seed, spec)
    return synth.save_scenario(scn, tmp_path, cls, 0), scn


class TestErle:
    def test_identity_output_is_zero_db(self):
        rng = np.random.default_rng(0)
        mic = rng.standard_normal(16000)
        assert metrics.erle(mic, mic) == 0.0

    def test_perfect_cancellation_hits_cap(self):
        rng = np.random.default_rng(1)
        mic = rng.standard_normal(16000)
        assert metrics.erle(mic, np.zeros_like(mic)) == metrics.ERLE_CAP_DB

    def test_known_attenuation(self):
        rng = np.random.default_rng(2)
        mic = rng.standard_normal(16000)
        assert metrics.erle(mic, mic * 0.1) == pytest.approx(20.0)

    def test_cap_applies_to_tiny_residual(self):
        rng = np.random.default_rng(3)
        mic = rng.standard_normal(16000)
        assert metrics.erle(mic, mic * 1e-9) == metrics.ERLE_CAP_DB

    def test_mask_restricts_measurement(self):
        mic = np.ones(1000)
        out = np.ones(1000)
        out[:500] = 0.0  # cancelled only in the masked half
        mask = np.zeros(1000, dtype=bool)
        mask[:500] = True
        assert metrics.erle(mic, out, mask) == metrics.ERLE_CAP_DB
        assert metrics.erle(mic, out) == pytest.approx(10 * np.log10(2.0))

    def test_silent_input_is_zero(self):
        assert metrics.erle(np.zeros(100), np.ones(100)) == 0.0


class TestErleCurve:
    def test_one_value_per_second(self):
        rng = np.random.default_rng(4)
        mic = rng.standard_normal(3 * 16000 + 10)
        curve = metrics.erle_curve(mic, mic * 0.5)
        assert len(curve) == 4
        assert all(v == pytest.approx(10 * np.log10(4.0)) for v in curve)

    def test_inactive_seconds_skipped(self):
        mic = np.ones(2 * 16000)
        mask = np.zeros(2 * 16000, dtype=bool)
        mask[:16000] = True
        curve = metrics.erle_curve(mic, mic, active_mask=mask)
        assert len(curve) == 1


class TestNearendDistortion:
    def test_exact_output_hits_floor(self):
        s = synth.speech_like(5, 1.0)
        assert metrics.nearend_distortion(s, s) == -metrics.ERLE_CAP_DB

    def test_known_error_level(self):
        s = synth.speech_like(6, 1.0)
        d = metrics.nearend_distortion(s * 1.1, s)  # 10% amplitude error
        assert d == pytest.approx(20 * np.log10(0.1), abs=1e-6)

    def test_silent_nearend_is_none(self):
        assert metrics.nearend_distortion(np.ones(16000), np.zeros(16000)) is None


class TestEchoActiveMask:
    def test_excludes_nearend_active_regions(self):
        echo = np.ones(1600)
        near = np.zeros(1600)
        near[:800] = 1.0
        mask = metrics.echo_active_mask(echo, near)
        assert not np.any(mask[:800])
        assert np.all(mask[800:])


class TestEvaluateClip:
    def test_perfect_oracle_processor(self, tmp_path):
        clip_dir, scn = make_clip(tmp_path, "dt", seed=7)
        truth = scn.near_end + scn.noise

        def oracle(mic, far):
            return truth, {"delay_estimate": scn.delay}

        rep = metrics.evaluate_clip(clip_dir, oracle)
        assert rep.scenario_class == "dt"
        assert rep.delay_err == 0
        # residual is the 30 dB SNR noise floor the oracle keeps
        assert rep.erle_db > 25.0
        assert rep.nearend_distortion_db < -20.0

    def test_identity_processor_scores_zero_erle(self, tmp_path):
        clip_dir, _ = make_clip(tmp_path, "st_fe", seed=8)
        rep = metrics.evaluate_clip(clip_dir, lambda mic, far: (mic, {}))
        assert rep.erle_db == pytest.approx(0.0, abs=1e-9)
        assert rep.delay_err is None
        assert len(rep.erle_curve) >= 1

    def test_st_ne_clip_has_no_erle(self, tmp_path):
        clip_dir, _ = make_clip(tmp_path, "st_ne", seed=9)
        rep = metrics.evaluate_clip(clip_dir, lambda mic, far: (mic, {}))
        assert rep.erle_db is None
        assert rep.nearend_distortion_db is not None


class TestReporting:
    def _reports(self):
        return [
            metrics.EvalReport("a_000", "st_fe", erle_db=30.0, delay_err=1),
            metrics.EvalReport("a_001", "st_fe", erle_db=20.0, delay_err=-1),
            metrics.EvalReport("b_000", "dt", erle_db=15.0,
                               nearend_distortion_db=-12.0),
        ]

    def test_aggregate_means(self):
        summary = metrics.aggregate(self._reports())
        assert summary["st_fe"]["erle_db"] == pytest.approx(25.0)
        assert summary["st_fe"]["mean_abs_delay_err"] == pytest.approx(1.0)
        assert summary["st_fe"]["nearend_distortion_db"] is None
        assert summary["dt"]["n_clips"] == 1

    def test_write_reports_files(self, tmp_path):
        reports = self._reports()
        metrics.write_reports(reports, metrics.aggregate(reports), tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert len(payload["clips"]) == 3
        tsv = (tmp_path / "summary.tsv").read_text().splitlines()
        assert tsv[0].split("\t") == ["clip", "class", "erle_db",
                                      "nearend_distortion_db", "delay_err"]
        assert len(tsv) == 4
        assert tsv[1].split("\t")[2] == "30.00"

    def test_format_summary_table(self):
        text = metrics.format_summary(metrics.aggregate(self._reports()))
        assert "st_fe" in text and "25.00" in text and "-" in text


class TestFigures:
    def test_render_figures_writes_pngs(self, tmp_path):
        from echoforge import report
        reports = [
            metrics.EvalReport("a_000", "st_fe", erle_db=30.0,
                               erle_curve=[10.0, 20.0, 30.0],
                               nearend_distortion_db=None),
            metrics.EvalReport("b_000", "dt", erle_db=15.0,
                               erle_curve=[5.0, 15.0],
                               nearend_distortion_db=-12.0),
        ]
        paths = report.render_figures(reports, metrics.aggregate(reports), tmp_path)
        names = {p.name for p in paths}
        assert "erle_curves.png" in names
        assert "erle_by_class.png" in names
        assert "nearend_distortion.png" in names
        for p in paths:
            assert p.stat().st_size > 0
