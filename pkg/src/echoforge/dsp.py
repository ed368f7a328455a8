"""Framing, STFT/ISTFT with overlap-add, and log-mel filterbank features.

Conventions (fixed so that model weights are reproducible):
  - analysis and synthesis windows are the periodic square-root Hann,
    which satisfies constant overlap-add at 50% overlap;
  - forward DFT is unnormalized, inverse carries the 1/N factor
    (numpy rfft/irfft defaults).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def sqrt_hann(n: int) -> np.ndarray:
    """Periodic square-root Hann window of length n."""
    t = np.arange(n)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * t / n))


@dataclass
class FrameConfig:
    sample_rate: int = 16000
    frame_len: int = 320   # 20 ms
    hop: int = 160         # 10 ms
    fft_size: int = 320

    def __post_init__(self):
        if not (self.hop <= self.frame_len <= self.fft_size):
            raise ConfigError(
                f"require hop <= frame_len <= fft_size, got "
                f"{self.hop}/{self.frame_len}/{self.fft_size}"
            )
        self.window = sqrt_hann(self.frame_len)
        # COLA check for the squared window at this hop
        acc = np.zeros(self.hop)
        w2 = self.window ** 2
        for off in range(0, self.frame_len, self.hop):
            seg = w2[off:off + self.hop]
            acc[: len(seg)] += seg
        if np.max(np.abs(acc - acc[0])) > 1e-6 * abs(acc[0]):
            raise ConfigError("window does not satisfy COLA at this hop")
        self.cola_gain = float(acc[0])

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass
class Spectrum:
    """One frame of one-sided complex STFT coefficients."""

    bins: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)


def frame_signal(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Slice a signal into windowed frames.

    Frame k covers samples [k*hop, k*hop + frame_len); the tail frame is
    zero-padded. Returns an (n_frames, frame_len) array; empty input
    yields an empty array.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        return np.zeros((0, cfg.frame_len))
    n_frames = int(np.ceil(x.size / cfg.hop))
    padded = np.zeros(n_frames * cfg.hop + cfg.frame_len - cfg.hop)
    padded[: x.size] = x
    frames = np.empty((n_frames, cfg.frame_len))
    for k in range(n_frames):
        frames[k] = padded[k * cfg.hop: k * cfg.hop + cfg.frame_len]
    return frames * cfg.window


def stft_frame(frame: np.ndarray, cfg: FrameConfig, frame_index: int = 0) -> Spectrum:
    """Forward DFT of one (already windowed) frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size != cfg.frame_len:
        raise ConfigError(f"frame length {frame.size} != {cfg.frame_len}")
    if cfg.fft_size > frame.size:
        frame = np.pad(frame, (0, cfg.fft_size - frame.size))
    return Spectrum(np.fft.rfft(frame), frame_index)


def stft(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """STFT of a whole signal: (n_frames, n_bins) complex array."""
    frames = frame_signal(samples, cfg)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=-1)


def istft_ola(spectra: np.ndarray, cfg: FrameConfig, length: int | None = None) -> np.ndarray:
    """Inverse STFT by windowed overlap-add.

    Normalizes by the accumulated squared-window sum so that
    istft_ola(stft(x)) == x on the covered region, edges included.
    """
    spectra = np.asarray(spectra)
    if spectra.ndim != 2 or spectra.shape[1] != cfg.n_bins:
        raise ConfigError(
            f"expected (n_frames, {cfg.n_bins}) spectra, got {spectra.shape}"
        )
    n_frames = spectra.shape[0]
    if n_frames == 0:
        return np.zeros(0)
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(total)
    wsum = np.zeros(total)
    frames = np.fft.irfft(spectra, n=cfg.fft_size, axis=-1)[:, : cfg.frame_len]
    frames = frames * cfg.window
    w2 = cfg.window ** 2
    for k in range(n_frames):
        out[k * cfg.hop: k * cfg.hop + cfg.frame_len] += frames[k]
        wsum[k * cfg.hop: k * cfg.hop + cfg.frame_len] += w2
    out /= np.maximum(wsum, 1e-12)
    if length is not None:
        out = out[:length] if out.size >= length else np.pad(out, (0, length - out.size))
    return out


def spectrum_energy(bins: np.ndarray, fft_size: int) -> float:
    """Time-domain frame energy from a one-sided spectrum (Parseval)."""
    b = np.asarray(bins)
    e = np.abs(b[0]) ** 2 + np.abs(b[-1]) ** 2 + 2.0 * np.sum(np.abs(b[1:-1]) ** 2)
    return float(e / fft_size)


# ---------------------------------------------------------------------------
# Streaming helpers

class StreamFramer:
    """Chunk-size-independent framer: push samples, pull windowed frames."""

    def __init__(self, cfg: FrameConfig):
        self.cfg = cfg
        self._buf = np.zeros(0)
        self._frame_index = 0

    def push(self, samples: np.ndarray) -> list[np.ndarray]:
        self._buf = np.concatenate([self._buf, np.asarray(samples, dtype=np.float64).ravel()])
        frames = []
        while self._buf.size >= self.cfg.frame_len:
            frames.append(self._buf[: self.cfg.frame_len] * self.cfg.window)
            self._buf = self._buf[self.cfg.hop:]
            self._frame_index += 1
        return frames

    def flush(self) -> list[np.ndarray]:
        """Emit zero-padded tail frames covering all buffered samples."""
        frames = []
        while self._buf.size > 0:
            frame = np.zeros(self.cfg.frame_len)
            frame[: self._buf.size] = self._buf[: self.cfg.frame_len]
            frames.append(frame * self.cfg.window)
            self._buf = self._buf[self.cfg.hop:]
            self._frame_index += 1
        return frames


class OlaSynthesizer:
    """Streaming overlap-add with squared-window normalization.

    push() returns the newly finalized samples (those no future frame can
    touch), so output availability lags input by frame_len - hop samples.
    """

    def __init__(self, cfg: FrameConfig):
        self.cfg = cfg
        self._acc = np.zeros(cfg.frame_len)
        self._wsum = np.zeros(cfg.frame_len)
        self._w2 = cfg.window ** 2

    def push(self, bins: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        frame = np.fft.irfft(bins, n=cfg.fft_size)[: cfg.frame_len] * cfg.window
        self._acc += frame
        self._wsum += self._w2
        done = self._acc[: cfg.hop] / np.maximum(self._wsum[: cfg.hop], 1e-12)
        self._acc = np.concatenate([self._acc[cfg.hop:], np.zeros(cfg.hop)])
        self._wsum = np.concatenate([self._wsum[cfg.hop:], np.zeros(cfg.hop)])
        return done

    def flush(self) -> np.ndarray:
        out = self._acc / np.maximum(self._wsum, 1e-12)
        out[self._wsum <= 1e-12] = 0.0
        self._acc = np.zeros(self.cfg.frame_len)
        self._wsum = np.zeros(self.cfg.frame_len)
        return out


# ---------------------------------------------------------------------------
# Log-mel filterbank

@dataclass
class FbankConfig:
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    sample_rate: int = 16000
    fft_size: int = 320

    def __post_init__(self):
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if not (self.fmin < self.fmax <= self.sample_rate / 2):
            raise ConfigError("require fmin < fmax <= sample_rate/2")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be > 0")
        self.weights = mel_matrix(self.n_mels, self.fft_size,
                                  self.sample_rate, self.fmin, self.fmax)
        if np.any(self.weights.sum(axis=1) <= 0):
            raise ConfigError("degenerate mel filter (zero weight sum); "
                              "reduce n_mels or widen the band")


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(n_mels: int, fft_size: int, sample_rate: int,
               fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, fft_size//2+1)."""
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / fft_size
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return weights


def log_fbank(spectrum: Spectrum | np.ndarray, cfg: FbankConfig) -> np.ndarray:
    """log(max(mel energy, floor)) of one spectrum frame."""
    bins = spectrum.bins if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    power = np.abs(bins) ** 2
    energy = cfg.weights @ power
    return np.log(np.maximum(energy, cfg.log_floor))
