"""Dataset construction through the engine's CLI and file formats."""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import features as F

log = logging.getLogger(__name__)

ENGINE = "echoforge"


@dataclass
class ClipData:
    name: str
    scenario_class: str
    features: np.ndarray   # (T, 240) float32, un-normalized
    targets: np.ndarray    # (T, 161) float32 in [0, 1]


def read_wav(path: str | Path) -> np.ndarray:
    rate, data = wavfile.read(str(path))
    if rate != F.SAMPLE_RATE:
        raise ValueError(f"{path}: expected {F.SAMPLE_RATE} Hz, got {rate}")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    return data.astype(np.float64)


def run_engine_synth(spec: dict | None, out_dir: str | Path) -> list[Path]:
    """Generate a labeled suite with the engine; returns clip directories."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cmd = [ENGINE, "synth", "--out", str(out)]
    if spec is not None:
        spec_path = out / "suite_spec.json"
        spec_path.write_text(json.dumps(spec))
        cmd += ["--spec", str(spec_path)]
    subprocess.run(cmd, check=True, capture_output=True, text=True)
    return sorted(d for d in out.iterdir() if (d / "manifest.json").exists())


def run_engine_linear(clip_dir: str | Path, work_dir: str | Path) -> Path:
    """Run the engine's linear stage over one clip; returns the spectra
    dump (.npz with `s_hat` and `x_aligned`)."""
    clip_dir = Path(clip_dir)
    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)
    spectra = work / f"{clip_dir.name}_spectra.npz"
    subprocess.run(
        [ENGINE, "linear",
         "--mic", str(clip_dir / "mic.wav"),
         "--farend", str(clip_dir / "farend.wav"),
         "--out", str(work / f"{clip_dir.name}_shat.wav"),
         "--dump-spectra", str(spectra)],
        check=True, capture_output=True, text=True)
    return spectra


def build_clip(clip_dir: str | Path, work_dir: str | Path) -> ClipData:
    clip_dir = Path(clip_dir)
    manifest = json.loads((clip_dir / "manifest.json").read_text())
    spectra_path = run_engine_linear(clip_dir, work_dir)
    with np.load(spectra_path) as z:
        s_hat = z["s_hat"]
        x_aligned = z["x_aligned"]
    feats = F.features_from_spectra(s_hat, x_aligned)
    near = read_wav(clip_dir / manifest["files"]["nearend"])
    s_spec = F.stft(near)[: len(s_hat)]
    targets = F.psm_target(s_spec, s_hat[: len(s_spec)])
    T = min(len(feats), len(targets))
    return ClipData(name=clip_dir.name, scenario_class=manifest["class"],
                    features=feats[:T].astype(np.float32),
                    targets=targets[:T].astype(np.float32))


def build_dataset(suite_dir: str | Path, work_dir: str | Path | None = None) -> list[ClipData]:
    suite = Path(suite_dir)
    work = Path(work_dir) if work_dir else suite / "_trainer_cache"
    clip_dirs = sorted(d for d in suite.iterdir()
                       if (d / "manifest.json").exists())
    if not clip_dirs:
        raise ValueError(f"no clips with manifests under {suite}")
    clips = []
    for d in clip_dirs:
        clips.append(build_clip(d, work))
        log.info("built %s: %d frames", d.name, len(clips[-1].features))
    return clips


def compute_norm(clips: list[ClipData], std_floor: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean/std over all frames; the floor keeps constant
    dimensions (e.g. silent-channel fbanks) from dividing by zero."""
    all_feats = np.concatenate([c.features for c in clips], axis=0)
    mean = all_feats.mean(axis=0)
    std = np.maximum(all_feats.std(axis=0), std_floor)
    return mean.astype(np.float32), std.astype(np.float32)
