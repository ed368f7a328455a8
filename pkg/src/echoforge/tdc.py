"""GCC-PHAT time-delay estimation with amortized per-frequency updates.

The cross-spectrum lives on its own long FFT grid (16384 points covers a
500 ms relative delay at 16 kHz). Its per-bin update is spread evenly over
`update_period` frames: bins are partitioned into `update_period`
contiguous slices updated round-robin, and the delay is re-estimated once
per period. Only non-negative lags are searched (the far end is rendered
before it is captured).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class DelayEstimate:
    tau: int
    confidence: float


@dataclass
class CrossCorrState:
    tdc_fft_size: int = 16384
    max_delay: int = 8000          # 500 ms at 16 kHz
    update_period: int = 25        # frames (250 ms)
    alpha: float = 0.9
    current_delay: int = 0
    confidence: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ConfigError(f"alpha must be in [0,1), got {self.alpha}")
        if self.max_delay >= self.tdc_fft_size // 2:
            raise ConfigError("max_delay must be below half the TDC FFT size")
        self.n_bins = self.tdc_fft_size // 2 + 1
        self.phi = np.zeros(self.n_bins, dtype=np.complex128)
        self.slice_index = 0
        # contiguous bin slices, one per frame of the period
        bounds = np.linspace(0, self.n_bins, self.update_period + 1).astype(int)
        self.slices = [slice(bounds[i], bounds[i + 1])
                       for i in range(self.update_period)]


def gcc_update(state: CrossCorrState, x_bins: np.ndarray, d_bins: np.ndarray) -> CrossCorrState:
    """Smooth X·conj(D) into phi on this frame's scheduled bin slice."""
    if x_bins.shape != (state.n_bins,) or d_bins.shape != (state.n_bins,):
        raise ConfigError(
            f"TDC spectra must have {state.n_bins} bins, got "
            f"{x_bins.shape} / {d_bins.shape}")
    sl = state.slices[state.slice_index]
    cross = x_bins[sl] * np.conj(d_bins[sl])
    state.phi[sl] = state.alpha * state.phi[sl] + (1.0 - state.alpha) * cross
    state.slice_index = (state.slice_index + 1) % state.update_period
    return state


def _lag_correlation(state: CrossCorrState) -> np.ndarray:
    """Phase-normalized correlation evaluated at lags 0..max_delay.

    With phi = X·conj(D) and the mic lagging the far end by tau, the
    inverse transform peaks at index (-tau) mod N.
    """
    mag = np.abs(state.phi)
    norm = np.where(mag > 1e-12, state.phi / np.maximum(mag, 1e-12), 0.0)
    corr = np.fft.irfft(norm, n=state.tdc_fft_size)
    idx = (-np.arange(state.max_delay + 1)) % state.tdc_fft_size
    return corr[idx]


def phat_delay(state: CrossCorrState) -> DelayEstimate:
    """Re-estimate the delay from the current smoothed cross-spectrum.

    Confidence is the peak-to-mean-absolute ratio of the lag correlation,
    affinely mapped so that a ratio of 10 saturates at 1. A new peak is
    adopted only if confidence >= 0.5 and it beats the previous lag's
    correlation by 10% (hysteresis against double-talk wobble).
    """
    if not np.any(np.abs(state.phi) > 1e-12):
        state.confidence = 0.0
        return DelayEstimate(state.current_delay, 0.0)
    lag_corr = _lag_correlation(state)
    peak = int(np.argmax(lag_corr))
    mean_abs = float(np.mean(np.abs(lag_corr))) + 1e-30
    ratio = float(lag_corr[peak]) / mean_abs
    confidence = float(np.clip((ratio - 1.0) / 9.0, 0.0, 1.0))
    if peak != state.current_delay:
        prev_val = float(lag_corr[state.current_delay])
        if confidence >= 0.5 and float(lag_corr[peak]) > 1.1 * prev_val:
            state.current_delay = peak
            state.confidence = confidence
        # else: keep the previous estimate; confidence reflects the old peak
    else:
        state.confidence = confidence
    return DelayEstimate(state.current_delay, state.confidence)


class DelayLine:
    """Ring-buffer delay for the far-end stream.

    Delay changes take effect only at frame boundaries (i.e. between
    process() calls); out-of-range requests are clamped with a warning.
    """

    def __init__(self, max_delay: int = 8000):
        self.max_delay = max_delay
        self._buf = np.zeros(max_delay)
        self.tau = 0

    def set_delay(self, tau: int) -> None:
        if tau < 0 or tau > self.max_delay:
            log.warning("delay %d outside [0, %d]; clamping", tau, self.max_delay)
            tau = int(np.clip(tau, 0, self.max_delay))
        self.tau = int(tau)

    def process(self, chunk: np.ndarray) -> np.ndarray:
        """Return the chunk delayed by the current tau (zero history at start)."""
        chunk = np.asarray(chunk, dtype=np.float64).ravel()
        full = np.concatenate([self._buf, chunk])
        out = full[len(full) - len(chunk) - self.tau:
                   len(full) - self.tau] if self.tau > 0 else chunk.copy()
        keep = min(self.max_delay, len(full))
        self._buf = full[len(full) - keep:]
        if keep < self.max_delay:
            self._buf = np.concatenate([np.zeros(self.max_delay - keep), self._buf])
        return out


class TdcEstimator:
    """Frame-driven wrapper: block buffering, amortized updates, hand-off.

    Feed one hop of mic and (undelayed) far-end samples per frame. A new
    16384-sample analysis block is transformed once per period; each frame
    then updates its scheduled bin slice, and the delay is re-estimated
    when the cycle completes.
    """

    def __init__(self, state: CrossCorrState | None = None, hop: int = 160):
        # the caller's state acts as a template: each stream gets its own
        # copy so pipelines built from one config don't share tracker state
        self.state = copy.deepcopy(state) if state is not None else CrossCorrState()
        self.hop = hop
        n = self.state.tdc_fft_size
        self._far = np.zeros(n)
        self._mic = np.zeros(n)
        self._x_spec = None
        self._d_spec = None
        self.history: list[tuple[int, DelayEstimate]] = []
        self._frame = 0

    def push_frame(self, mic_hop: np.ndarray, far_hop: np.ndarray) -> int:
        """Consume one hop of each signal; returns the current delay."""
        self._far = np.roll(self._far, -len(far_hop))
        self._far[-len(far_hop):] = far_hop
        self._mic = np.roll(self._mic, -len(mic_hop))
        self._mic[-len(mic_hop):] = mic_hop

        if self.state.slice_index == 0:
            self._x_spec = np.fft.rfft(self._far)
            self._d_spec = np.fft.rfft(self._mic)
        gcc_update(self.state, self._x_spec, self._d_spec)
        if self.state.slice_index == 0:  # cycle just completed
            est = phat_delay(self.state)
            self.history.append((self._frame, est))
        self._frame += 1
        return self.state.current_delay
