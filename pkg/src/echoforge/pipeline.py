"""Streaming orchestration: TDC -> wRLS -> FSMN mask, frame by frame.

Output samples become available only once every contributing analysis
frame has been processed, so the emitted stream lags the consumed one by
frame_len - hop samples (10 ms at defaults), plus one extra hop when the
neural stage is on (its feature splice looks one frame ahead). Content is
never shifted: emitted sample t is the processed input sample t.
"""

from __future__ import annotations

import os
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio_io, dsp, fsmn, tdc, wrls
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    frame: dsp.FrameConfig = field(default_factory=dsp.FrameConfig)
    wrls: wrls.WrlsConfig = field(default_factory=wrls.WrlsConfig)
    tdc: tdc.CrossCorrState = field(default_factory=tdc.CrossCorrState)
    model_path: str | None = None
    enable_wrls: bool = True
    enable_fsmn: bool = True    # effective only with a model present
    output_gain: float = 1.0
    threads: int = 1

    def __post_init__(self):
        env = os.environ.get("ECHOFORGE_THREADS")
        if env is not None:
            try:
                self.threads = max(1, min(self.threads if self.threads > 1
                                          else int(env), int(env)))
            except ValueError:
                raise ConfigError(f"ECHOFORGE_THREADS={env!r} is not an integer")
        if self.enable_fsmn and self.model_path and not self.enable_wrls:
            raise ConfigError("the neural stage requires the linear stage output")

    @property
    def fsmn_active(self) -> bool:
        return self.enable_fsmn and self.model_path is not None


_CONFIG_KEYS = {
    "sample_rate": ("frame", "sample_rate", int),
    "frame_len": ("frame", "frame_len", int),
    "hop": ("frame", "hop", int),
    "fft_size": ("frame", "fft_size", int),
    "taps": ("wrls", "taps", int),
    "smoothing": ("wrls", "smoothing", float),
    "beta": ("wrls", "beta", float),
    "eta": ("wrls", "eta", float),
    "weight_floor": ("wrls", "weight_floor", float),
    "diag_load": ("wrls", "diag_load", float),
    "tdc_fft_size": ("tdc", "tdc_fft_size", int),
    "max_delay": ("tdc", "max_delay", int),
    "update_period": ("tdc", "update_period", int),
    "alpha": ("tdc", "alpha", float),
    "model": (None, "model_path", str),
    "enable_wrls": (None, "enable_wrls", lambda v: v.lower() in ("1", "true", "yes")),
    "enable_fsmn": (None, "enable_fsmn", lambda v: v.lower() in ("1", "true", "yes")),
    "output_gain": (None, "output_gain", float),
    "threads": (None, "threads", int),
}


def parse_config_file(path: str) -> PipelineConfig:
    """Flat `key = value` config file mirroring PipelineConfig."""
    frame_kw, wrls_kw, tdc_kw, top_kw = {}, {}, {}, {}
    groups = {"frame": frame_kw, "wrls": wrls_kw, "tdc": tdc_kw, None: top_kw}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = (t.strip() for t in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        group, attr, conv = _CONFIG_KEYS[key]
        try:
            groups[group][attr] = conv(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {e}") from e
    return PipelineConfig(frame=dsp.FrameConfig(**frame_kw),
                          wrls=wrls.WrlsConfig(**wrls_kw),
                          tdc=tdc.CrossCorrState(**tdc_kw), **top_kw)


@dataclass
class LatencyReport:
    algorithmic_latency_ms: float
    stage_ms: dict  # stage -> {mean, p95, max}
    frames: int

    def format(self) -> str:
        lines = [f"frames processed : {self.frames}",
                 f"algorithmic latency : {self.algorithmic_latency_ms:.1f} ms",
                 f"{'stage':<12}{'mean ms':>9}{'p95 ms':>9}{'max ms':>9}"]
        for name, s in self.stage_ms.items():
            lines.append(f"{name:<12}{s['mean']:>9.3f}{s['p95']:>9.3f}{s['max']:>9.3f}")
        return "\n".join(lines)


class AecPipeline:
    """One echo-cancellation stream. Not shareable across streams."""

    def __init__(self, cfg: PipelineConfig | None = None,
                 model: fsmn.FsmnModel | None = None):
        self.cfg = cfg or PipelineConfig()
        fc = self.cfg.frame
        self.model = model
        if self.model is None and self.cfg.fsmn_active:
            self.model = fsmn.load_model(self.cfg.model_path)
        self._use_fsmn = self.model is not None and self.cfg.enable_fsmn

        self._mic_buf = np.zeros(0)
        self._far_buf = np.zeros(0)
        self._mic_framer = dsp.StreamFramer(fc)
        self._far_framer = dsp.StreamFramer(fc)
        self._ola = dsp.OlaSynthesizer(fc)
        self._tdc = tdc.TdcEstimator(self.cfg.tdc, hop=fc.hop)
        self._delay_line = tdc.DelayLine(self.cfg.tdc.max_delay)
        self._wrls = wrls.WrlsBank(fc.n_bins, self.cfg.wrls)
        self._frame_index = 0
        self._pending_s_hat = None
        self.underruns = 0
        self.samples_in = 0
        self.samples_out = 0
        self._stage_times = {"tdc": [], "wrls": [], "res": []}

        if self._use_fsmn:
            fb = dsp.FbankConfig(sample_rate=fc.sample_rate, fft_size=fc.fft_size,
                                 fmax=min(8000.0, fc.sample_rate / 2))
            self._splicer = fsmn.FeatureSplicer(self.model, fb)
            self._runtime = fsmn.FsmnRuntime(self.model)
            if self.model.mask_dim != fc.n_bins:
                raise ConfigError(
                    f"model mask dim {self.model.mask_dim} != {fc.n_bins} bins")
        if self.cfg.threads > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.cfg.threads)
            bounds = np.linspace(0, fc.n_bins, self.cfg.threads + 1).astype(int)
            self._bin_slices = [slice(bounds[i], bounds[i + 1])
                                for i in range(self.cfg.threads)]
        else:
            self._pool = None

    @property
    def latency_samples(self) -> int:
        fc = self.cfg.frame
        return fc.frame_len - fc.hop + (fc.hop if self._use_fsmn else 0)

    # -- frame machinery ----------------------------------------------------

    def _wrls_step(self, d_bins: np.ndarray, x_bins: np.ndarray) -> np.ndarray:
        if self._pool is None:
            return self._wrls.step(d_bins, x_bins)
        parts = list(self._pool.map(
            lambda sl: (sl, self._wrls.step(d_bins, x_bins, sl)), self._bin_slices))
        out = np.empty(self.cfg.frame.n_bins, dtype=np.complex128)
        for sl, val in parts:
            out[sl] = val
        return out

    def _emit(self, s_hat: np.ndarray) -> np.ndarray:
        out = self._ola.push(s_hat) * self.cfg.output_gain
        self.samples_out += out.size
        return out

    def _process_frame(self, mic_frame: np.ndarray, far_frame: np.ndarray) -> np.ndarray:
        fc = self.cfg.frame
        t0 = time.perf_counter()
        d_bins = np.fft.rfft(mic_frame, n=fc.fft_size)
        x_bins = np.fft.rfft(far_frame, n=fc.fft_size)
        if self.cfg.enable_wrls:
            s_hat = self._wrls_step(d_bins, x_bins)
        else:
            s_hat = d_bins
        t1 = time.perf_counter()
        self._stage_times["wrls"].append(t1 - t0)

        if not self._use_fsmn:
            self._frame_index += 1
            return self._emit(s_hat)

        feat = self._splicer.push(s_hat, x_bins)
        out = np.zeros(0)
        if feat is not None:
            mask = self._runtime.forward(feat)
            out = self._emit(fsmn.apply_mask(self._pending_s_hat, mask))
        self._pending_s_hat = s_hat
        self._stage_times["res"].append(time.perf_counter() - t1)
        self._frame_index += 1
        return out

    # -- public streaming API -----------------------------------------------

    def push(self, mic_chunk: np.ndarray, far_chunk: np.ndarray) -> np.ndarray:
        """Feed any amount of synchronized input; returns finalized output.

        A short far-end chunk is an underrun: the missing reference is
        treated as silence for the affected frames.
        """
        hop = self.cfg.frame.hop
        self._mic_buf = np.concatenate([self._mic_buf, np.asarray(mic_chunk, dtype=np.float64).ravel()])
        self._far_buf = np.concatenate([self._far_buf, np.asarray(far_chunk, dtype=np.float64).ravel()])
        self.samples_in += np.asarray(mic_chunk).size
        out = []
        while self._mic_buf.size >= hop:
            mic_hop = self._mic_buf[:hop]
            self._mic_buf = self._mic_buf[hop:]
            if self._far_buf.size >= hop:
                far_hop = self._far_buf[:hop]
                self._far_buf = self._far_buf[hop:]
            else:
                far_hop = np.zeros(hop)
                self.underruns += 1
            t0 = time.perf_counter()
            self._tdc.push_frame(mic_hop, far_hop)
            self._delay_line.set_delay(self._tdc.state.current_delay)
            far_aligned = self._delay_line.process(far_hop)
            self._stage_times["tdc"].append(time.perf_counter() - t0)
            mic_frames = self._mic_framer.push(mic_hop)
            far_frames = self._far_framer.push(far_aligned)
            for mf, ff in zip(mic_frames, far_frames):
                out.append(self._process_frame(mf, ff))
        return np.concatenate(out) if out else np.zeros(0)

    def flush(self) -> np.ndarray:
        """Drain buffered tails; emits everything not yet finalized."""
        out = []
        if self._mic_buf.size:
            pad = -self._mic_buf.size % self.cfg.frame.hop
            out.append(self.push(np.zeros(pad), np.zeros(pad)))
        for mf, ff in zip(self._mic_framer.flush(), self._far_framer.flush()):
            out.append(self._process_frame(mf, ff))
        if self._use_fsmn and self._pending_s_hat is not None:
            feat = self._splicer.flush()
            mask = self._runtime.forward(feat)
            out.append(self._emit(fsmn.apply_mask(self._pending_s_hat, mask)))
            self._pending_s_hat = None
        tail = self._ola.flush() * self.cfg.output_gain
        self.samples_out += tail.size
        out.append(tail)
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None
        return np.concatenate(out) if out else np.zeros(0)

    def run(self, mic: np.ndarray, far: np.ndarray) -> np.ndarray:
        """Offline convenience: process whole signals, return output
        trimmed/padded to the mic length."""
        out = np.concatenate([self.push(mic, far), self.flush()])
        n = len(mic)
        return out[:n] if out.size >= n else np.pad(out, (0, n - out.size))

    def latency_report(self) -> LatencyReport:
        fc = self.cfg.frame
        stages = {}
        for name, times in self._stage_times.items():
            if not times:
                continue
            ms = 1e3 * np.asarray(times)
            stages[name] = {"mean": float(np.mean(ms)),
                            "p95": float(np.percentile(ms, 95)),
                            "max": float(np.max(ms))}
        total = [sum(t) for t in zip(*[v for v in self._stage_times.values() if v])]
        if total:
            ms = 1e3 * np.asarray(total)
            stages["total"] = {"mean": float(np.mean(ms)),
                               "p95": float(np.percentile(ms, 95)),
                               "max": float(np.max(ms))}
        return LatencyReport(
            algorithmic_latency_ms=1e3 * self.latency_samples / fc.sample_rate,
            stage_ms=stages,
            frames=len(self._stage_times["wrls"]))


def run_file(mic_path: str, far_path: str, out_path: str | None,
             cfg: PipelineConfig | None = None, allow_resample: bool = False,
             dump_aligned: str | None = None,
             dump_features: str | None = None,
             dump_spectra: str | None = None) -> dict:
    """File-to-file processing; returns a small info dict with the final
    delay estimate and the latency report."""
    cfg = cfg or PipelineConfig()
    sr = cfg.frame.sample_rate
    mic = audio_io.read_wav(mic_path, sr, allow_resample)
    far = audio_io.read_wav(far_path, sr, allow_resample)
    pipe = AecPipeline(cfg)
    out = pipe.run(mic, far)
    if out_path:
        audio_io.write_wav(out_path, out, sr)
    info = {
        "delay_estimate": pipe._tdc.state.current_delay,
        "delay_confidence": pipe._tdc.state.confidence,
        "underruns": pipe.underruns,
        "latency": pipe.latency_report(),
    }
    if dump_aligned:
        line = tdc.DelayLine(cfg.tdc.max_delay)
        line.set_delay(pipe._tdc.state.current_delay)
        audio_io.write_wav(dump_aligned, line.process(far), sr)
    if dump_features or dump_spectra:
        _dump_linear(mic, far, pipe._tdc.state.current_delay, cfg,
                     dump_features, dump_spectra)
    return info


def _dump_linear(mic: np.ndarray, far: np.ndarray, delay: int,
                 cfg: PipelineConfig, feat_path: str | None,
                 spectra_path: str | None) -> None:
    """Re-run the linear stage at a fixed delay and dump its per-frame
    products for external consumers: the un-normalized spliced feature
    matrix (T, 240) and/or the complex bin spectra of the linear output
    and the aligned far end (npz keys `s_hat`, `x_aligned`, each (T, bins))."""
    fc = cfg.frame
    line = tdc.DelayLine(cfg.tdc.max_delay)
    line.set_delay(delay)
    far_aligned = line.process(far)
    bank = wrls.WrlsBank(fc.n_bins, cfg.wrls)
    fb = dsp.FbankConfig(sample_rate=fc.sample_rate, fft_size=fc.fft_size,
                         fmax=min(8000.0, fc.sample_rate / 2))
    d_spec = dsp.stft(mic, fc)
    x_spec = dsp.stft(far_aligned, fc)
    n = min(len(d_spec), len(x_spec))
    s_hat = np.empty((n, fc.n_bins), dtype=np.complex128)
    for t in range(n):
        s_hat[t] = bank.step(d_spec[t], x_spec[t])
    if spectra_path:
        np.savez(spectra_path, s_hat=s_hat, x_aligned=x_spec[:n])
    if not feat_path:
        return
    base = np.empty((n, 2 * fb.n_mels))
    for t in range(n):
        base[t] = np.concatenate([dsp.log_fbank(s_hat[t], fb),
                                  dsp.log_fbank(x_spec[t], fb)])
    feats = np.empty((n, 6 * fb.n_mels))
    zero = np.zeros(2 * fb.n_mels)
    for t in range(n):
        past = base[t - 1] if t > 0 else zero
        fut = base[t + 1] if t + 1 < n else zero
        feats[t] = np.concatenate([past, base[t], fut])
    np.save(feat_path, feats.astype(np.float32))
