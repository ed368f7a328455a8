import pytest

from fsmn_trainer.data import run_engine_synth


@pytest.fixture(scope="session")
def small_suite(tmp_path_factory):
    """Four short clips (2 per class) generated through the engine CLI."""
    out = tmp_path_factory.mktemp("suite") / "small"
    spec = {"classes": ["st_fe", "st_ne"], "clips_per_class": 2,
            "duration_s": 1.5, "rt60_ms": 30.0, "path_len": 400,
            "delay_range": [0, 400], "noise_snr_db": None,
            "effect_probability": 0.0, "master_seed": 99}
    run_engine_synth(spec, out)
    return out
