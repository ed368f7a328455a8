"""Feature and target computation, implemented independently of the engine.

These mirror the engine's documented feature definition (320-point frames,
hop 160, periodic sqrt-Hann analysis, 40 HTK-style mel filters over
0-8 kHz, natural log with a 1e-10 floor, [t-1, t, t+1] splicing) so that
features built here from the engine's spectra dumps line up with the
engine's own feature dumps.
"""

from __future__ import annotations

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 320
HOP = 160
N_MELS = 40
N_BINS = FRAME_LEN // 2 + 1
LOG_FLOOR = 1e-10
PSM_EPS = 1e-12


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(n_mels: int = N_MELS, fft_size: int = FRAME_LEN,
               sample_rate: int = SAMPLE_RATE, fmin: float = 0.0,
               fmax: float = 8000.0) -> np.ndarray:
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


_MEL = mel_matrix()


def log_fbank(bins: np.ndarray) -> np.ndarray:
    """Log mel energies of complex bin spectra; last axis is the bin axis."""
    power = np.abs(np.asarray(bins)) ** 2
    return np.log(np.maximum(power @ _MEL.T, LOG_FLOOR))


def stft(signal: np.ndarray) -> np.ndarray:
    """(T, 161) complex spectra on the engine's grid: frame t covers
    samples [t*HOP, t*HOP + FRAME_LEN), zero-padded tail, one frame per
    started hop."""
    x = np.asarray(signal, dtype=np.float64)
    n_frames = max(1, int(np.ceil(x.size / HOP)))
    padded = np.pad(x, (0, n_frames * HOP + FRAME_LEN - HOP - x.size))
    window = np.sqrt(np.hanning(FRAME_LEN + 1)[:FRAME_LEN])
    frames = np.stack([padded[t * HOP: t * HOP + FRAME_LEN] * window
                       for t in range(n_frames)])
    return np.fft.rfft(frames, n=FRAME_LEN, axis=1)


def splice(base: np.ndarray) -> np.ndarray:
    """[t-1, t, t+1] context splice with zero frames past the edges."""
    T, d = base.shape
    out = np.zeros((T, 3 * d))
    out[:, d: 2 * d] = base
    out[1:, :d] = base[:-1]
    out[:-1, 2 * d:] = base[1:]
    return out


def features_from_spectra(s_hat: np.ndarray, x_aligned: np.ndarray) -> np.ndarray:
    """Un-normalized (T, 240) training features from the engine's
    linear-stage spectra dump: spliced [fbank(S_hat) | fbank(X_aligned)]."""
    if s_hat.shape != x_aligned.shape:
        raise ValueError("spectra streams must share a shape")
    base = np.concatenate([log_fbank(s_hat), log_fbank(x_aligned)], axis=1)
    return splice(base)


def psm_target(s: np.ndarray, s_hat: np.ndarray) -> np.ndarray:
    """Phase-sensitive mask target (|S|/|S_hat|) Re(S/S_hat), clipped to
    [0,1]; where the estimate is degenerate the target is 0 for a silent
    reference and 1 otherwise."""
    s = np.asarray(s)
    s_hat = np.asarray(s_hat)
    mag = np.abs(s_hat)
    safe = np.where(mag < PSM_EPS, 1.0, s_hat)
    raw = (np.abs(s) / np.abs(safe)) * np.real(s / safe)
    raw = np.where(mag < PSM_EPS, np.where(np.abs(s) < PSM_EPS, 0.0, 1.0), raw)
    return np.clip(raw, 0.0, 1.0)
