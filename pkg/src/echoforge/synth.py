"""Synthetic echo scenario generation.

The mic capture follows d(t) = x(t)*a(t) + s(t) + v(t): a delayed far end
pushed through an echo path (optionally after nonlinear loudspeaker
effects), plus near-end speech and additive noise. Everything is seeded
and reconstructible bit-exactly from the scenario description.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, lfilter

from . import audio_io
from .errors import ConfigError

log = logging.getLogger(__name__)

SCENARIO_CLASSES = ["st_fe", "st_fe_pathchange", "st_ne", "dt", "dt_pathchange"]


@dataclass
class EffectDescriptor:
    kind: str                      # clip | bandlimit | eq | sigmoid_nl
    params: dict = field(default_factory=dict)


@dataclass
class EchoScenario:
    far_end: np.ndarray
    near_end: np.ndarray
    echo_path: np.ndarray
    noise: np.ndarray
    echo: np.ndarray
    mic: np.ndarray
    ser_db: float | None
    delay: int
    effects: list[EffectDescriptor]
    seed: int
    sample_rate: int = 16000
    path_change: tuple[int, np.ndarray] | None = None  # (sample index, new path)


def gen_echo_path(seed: int, rt60_ms: float, length: int,
                  sample_rate: int = 16000) -> np.ndarray:
    """Exponentially decaying random echo path with a direct-path spike.

    The noise envelope drops 60 dB over rt60; the result has unit l2 norm.
    """
    if length < 1:
        raise ConfigError("echo path length must be >= 1")
    h = np.zeros(length)
    if rt60_ms > 0 and length > 1:
        rng = np.random.default_rng(seed)
        n = np.arange(length)
        envelope = 10.0 ** (-3.0 * n / (rt60_ms * 1e-3 * sample_rate))
        h = 0.5 * envelope * rng.standard_normal(length)
    h[0] = 1.0
    return h / np.linalg.norm(h)


def speech_like(seed: int, duration_s: float, sample_rate: int = 16000) -> np.ndarray:
    """Seeded speech-like surrogate: pitched harmonics under a syllabic
    on/off envelope plus shaped noise. No corpus dependency."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * sample_rate)
    t = np.arange(n) / sample_rate

    f0 = 120.0 + 60.0 * rng.random() + 20.0 * np.sin(2 * np.pi * (2.3 + rng.random()) * t)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voiced = sum(np.sin(k * phase) / k for k in range(1, 6))
    fricative = lfilter([1, -0.92], [1], rng.standard_normal(n)) * 0.25

    # syllabic gating at ~3 Hz with random pauses
    gate = np.zeros(n)
    pos = 0
    while pos < n:
        seg = int(sample_rate * (0.15 + 0.25 * rng.random()))
        if rng.random() < 0.7:
            ramp = min(seg // 4, 160)
            g = np.ones(seg)
            g[:ramp] = np.linspace(0, 1, ramp)
            g[-ramp:] = np.linspace(1, 0, ramp)
            gate[pos: pos + seg] = g[: max(0, n - pos)][: seg]
        pos += seg
    x = gate * (voiced + fricative)
    peak = np.max(np.abs(x))
    return 0.5 * x / peak if peak > 0 else x


def apply_effects(signal: np.ndarray, effects: list[EffectDescriptor],
                  sample_rate: int = 16000) -> np.ndarray:
    """Loudspeaker-style distortions applied in order."""
    y = np.asarray(signal, dtype=np.float64).copy()
    for eff in effects:
        p = eff.params
        if eff.kind == "clip":
            lim = p.get("level", 0.8) * np.max(np.abs(y)) if y.size else 0.0
            y = np.clip(y, -lim, lim) if lim > 0 else y
        elif eff.kind == "bandlimit":
            cutoff = p.get("cutoff_hz", 4000.0)
            spec = np.fft.rfft(y)
            freqs = np.arange(spec.size) * sample_rate / y.size
            spec[freqs > cutoff] = 0.0
            y = np.fft.irfft(spec, n=y.size)
        elif eff.kind == "eq":
            rng = np.random.default_rng(p.get("seed", 0))
            n_knots = p.get("knots", 6)
            depth = p.get("depth_db", 6.0)
            spec = np.fft.rfft(y)
            knots = depth * (2 * rng.random(n_knots) - 1)
            gains_db = np.interp(np.linspace(0, 1, spec.size),
                                 np.linspace(0, 1, n_knots), knots)
            y = np.fft.irfft(spec * 10 ** (gains_db / 20.0), n=y.size)
        elif eff.kind == "sigmoid_nl":
            g = p.get("gain", 2.0)
            y = np.tanh(g * y) / np.tanh(g) if g > 1e-8 else y.copy()
        else:
            raise ConfigError(f"unknown effect kind {eff.kind!r}")
    return y


def _delay_signal(x: np.ndarray, delay: int) -> np.ndarray:
    if delay == 0:
        return x.copy()
    return np.concatenate([np.zeros(delay), x])[: x.size]


def _active_mask(s: np.ndarray, frame: int = 160, threshold_db: float = -40.0) -> np.ndarray:
    """Energy-threshold activity detection relative to the peak frame."""
    n_frames = s.size // frame
    if n_frames == 0:
        return np.zeros(s.size, dtype=bool)
    e = np.sum(s[: n_frames * frame].reshape(n_frames, frame) ** 2, axis=1)
    peak = np.max(e)
    mask_f = e > peak * 10 ** (threshold_db / 10.0) if peak > 0 else e > 0
    mask = np.zeros(s.size, dtype=bool)
    mask[: n_frames * frame] = np.repeat(mask_f, frame)
    return mask


def _render_echo(x: np.ndarray, path: np.ndarray, delay: int,
                 effects: list[EffectDescriptor], sample_rate: int,
                 path_change: tuple[int, np.ndarray] | None,
                 crossfade: int = 320) -> np.ndarray:
    far = apply_effects(_delay_signal(x, delay), effects, sample_rate)
    echo = fftconvolve(far, path)[: x.size]
    if path_change is not None:
        at, new_path = path_change
        echo2 = fftconvolve(far, new_path)[: x.size]
        fade = np.zeros(x.size)
        fade[at: at + crossfade] = np.linspace(0, 1, min(crossfade, x.size - at))
        fade[at + crossfade:] = 1.0
        echo = (1 - fade) * echo + fade * echo2
    return echo


def mix_scenario(x: np.ndarray, s: np.ndarray | None, path: np.ndarray,
                 effects: list[EffectDescriptor] | None = None,
                 ser_db: float | None = 0.0, delay: int = 0,
                 noise_snr_db: float | None = None, seed: int = 0,
                 sample_rate: int = 16000,
                 path_change: tuple[int, np.ndarray] | None = None) -> EchoScenario:
    """Mix one labeled clip; the echo is scaled to hit ser_db over
    near-end-active regions. s=None with ser_db=None gives far-end single
    talk; ser_db=None with s given leaves the echo at its natural level."""
    x = np.asarray(x, dtype=np.float64)
    effects = effects or []
    n = x.size
    if s is None:
        s_arr = np.zeros(n)
        if ser_db is not None and np.isfinite(ser_db):
            raise ConfigError("SER is undefined with silent near end")
    else:
        s_arr = np.asarray(s, dtype=np.float64)[:n]
        s_arr = np.pad(s_arr, (0, n - s_arr.size))

    echo = _render_echo(x, path, delay, effects, sample_rate, path_change)

    if ser_db is not None and np.isfinite(ser_db):
        active = _active_mask(s_arr)
        e_s = np.sum(s_arr[active] ** 2)
        e_echo = np.sum(echo[active] ** 2)
        if e_s <= 0:
            raise ConfigError("SER is undefined with silent near end")
        if e_echo > 0:
            echo = echo * np.sqrt(e_s / e_echo * 10 ** (-ser_db / 10.0))
    elif ser_db is not None and ser_db == np.inf:
        echo = np.zeros(n)

    clean_mix = echo + s_arr
    if noise_snr_db is not None:
        rng = np.random.default_rng(seed ^ 0x5EED)
        v = rng.standard_normal(n)
        e_sig = np.sum(clean_mix ** 2)
        v *= np.sqrt(e_sig / np.sum(v ** 2) * 10 ** (-noise_snr_db / 10.0)) \
            if e_sig > 0 else 0.0
    else:
        v = np.zeros(n)

    return EchoScenario(far_end=x, near_end=s_arr, echo_path=path, noise=v,
                        echo=echo, mic=clean_mix + v, ser_db=ser_db,
                        delay=delay, effects=effects, seed=seed,
                        sample_rate=sample_rate, path_change=path_change)


# ---------------------------------------------------------------------------
# Suite generation

DEFAULT_SUITE_SPEC = {
    "classes": SCENARIO_CLASSES,
    "clips_per_class": 2,
    "duration_s": 4.0,
    "rt60_ms": 200.0,
    "path_len": 1600,
    "delay_range": [0, 3200],
    "ser_range_db": [-6.0, 10.0],
    "noise_snr_db": 30.0,
    "effect_probability": 0.5,
    "master_seed": 1234,
}


def _random_effects(rng: np.random.Generator, probability: float) -> list[EffectDescriptor]:
    if rng.random() >= probability:
        return []
    kind = rng.choice(["clip", "bandlimit", "eq", "sigmoid_nl"])
    if kind == "clip":
        return [EffectDescriptor("clip", {"level": float(rng.uniform(0.5, 0.9))})]
    if kind == "bandlimit":
        return [EffectDescriptor("bandlimit", {"cutoff_hz": float(rng.uniform(3000, 7000))})]
    if kind == "eq":
        return [EffectDescriptor("eq", {"seed": int(rng.integers(1 << 31)),
                                        "knots": 6, "depth_db": 6.0})]
    return [EffectDescriptor("sigmoid_nl", {"gain": float(rng.uniform(0.5, 4.0))})]


def build_scenario(cls: str, seed: int, spec: dict) -> EchoScenario:
    if cls not in SCENARIO_CLASSES:
        raise ConfigError(f"unknown scenario class {cls!r}")
    rng = np.random.default_rng(seed)
    sr = 16000
    dur = spec["duration_s"]
    n = int(dur * sr)
    delay = int(rng.integers(spec["delay_range"][0], spec["delay_range"][1] + 1))
    path = gen_echo_path(int(rng.integers(1 << 31)), spec["rt60_ms"], spec["path_len"], sr)
    effects = _random_effects(rng, spec["effect_probability"])

    far = speech_like(int(rng.integers(1 << 31)), dur, sr)
    near = speech_like(int(rng.integers(1 << 31)), dur, sr)
    ser = float(rng.uniform(*spec["ser_range_db"]))
    noise_snr = spec.get("noise_snr_db")

    path_change = None
    if cls.endswith("pathchange"):
        new_path = gen_echo_path(int(rng.integers(1 << 31)), spec["rt60_ms"],
                                 spec["path_len"], sr)
        path_change = (n // 2, new_path)
    if cls.startswith("st_fe"):
        near_arg, ser_arg = None, None
    elif cls == "st_ne":
        far = np.zeros(n)
        near_arg, ser_arg = near, None
    else:
        near_arg, ser_arg = near, ser

    return mix_scenario(far, near_arg, path, effects, ser_arg, delay,
                        noise_snr, seed=seed, sample_rate=sr,
                        path_change=path_change)


def save_scenario(scn: EchoScenario, out_dir: Path, cls: str, index: int) -> Path:
    clip_dir = out_dir / f"{cls}_{index:03d}"
    clip_dir.mkdir(parents=True, exist_ok=True)
    for name, sig in [("mic", scn.mic), ("farend", scn.far_end),
                      ("nearend", scn.near_end), ("echo", scn.echo),
                      ("noise", scn.noise)]:
        audio_io.write_wav(str(clip_dir / f"{name}.wav"), sig, scn.sample_rate)
    np.save(clip_dir / "echo_path.npy", scn.echo_path)
    manifest = {
        "class": cls,
        "files": {n: f"{n}.wav" for n in ["mic", "farend", "nearend", "echo", "noise"]},
        "echo_path": "echo_path.npy",
        "delay": scn.delay,
        "ser_db": scn.ser_db,
        "seed": scn.seed,
        "sample_rate": scn.sample_rate,
        "effects": [{"kind": e.kind, "params": e.params} for e in scn.effects],
    }
    if scn.path_change is not None:
        manifest["path_change_sample"] = int(scn.path_change[0])
        np.save(clip_dir / "echo_path_after.npy", scn.path_change[1])
        manifest["echo_path_after"] = "echo_path_after.npy"
    (clip_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return clip_dir


def gen_suite(spec: dict | None, out_dir: str | Path) -> list[Path]:
    """Emit a labeled scenario suite; returns the clip directories."""
    spec = DEFAULT_SUITE_SPEC | (spec or {})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clip_dirs = []
    master = int(spec["master_seed"])
    for ci, cls in enumerate(spec["classes"]):
        for k in range(int(spec["clips_per_class"])):
            seed = master + 1000 * ci + k
            scn = build_scenario(cls, seed, spec)
            clip_dirs.append(save_scenario(scn, out, cls, k))
    (out / "suite.json").write_text(json.dumps(
        {"spec": {k: v for k, v in spec.items()},
         "clips": [d.name for d in clip_dirs]}, indent=2))
    return clip_dirs


def load_manifest(clip_dir: str | Path) -> dict:
    clip_dir = Path(clip_dir)
    manifest = json.loads((clip_dir / "manifest.json").read_text())
    manifest["_dir"] = str(clip_dir)
    return manifest
