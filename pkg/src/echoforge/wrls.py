"""Weighted recursive least squares linear echo canceller.

Per frequency bin f the echo is modeled on the last L aligned far-end
STFT values x = [X(t'), ..., X(t'-L+1)]. The separation view of the
problem reduces to one learned unmixing row, giving the recursion

    R <- lam*R + (1-lam) * phi * x x^H
    r <- lam*r + (1-lam) * phi * x conj(D)
    w  = -(R + delta*I)^{-1} r
    S_hat = D + w^H x

where the per-sample weight phi comes from the assumed super-Gaussian
near-end density with contrast exponent beta: phi(|r|) = beta*|r|^(beta-2)
(up to the source-scale eta). Small beta downweights frames where the
residual is large, i.e. where the near end talks, which is what makes the
filter double-talk friendly. beta=2 gives a constant weight and reduces to
plain exponentially-weighted RLS; beta=0 is handled as the log-contrast
limit phi = 1/|r|^2.

Since the current frame's separated source is unknown at update time, the
weight argument is the prior estimate: previous taps applied to the
current data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class WrlsConfig:
    taps: int = 5
    smoothing: float = 0.8      # lam
    beta: float = 0.2
    eta: float = 1.0
    weight_floor: float = 1e-6  # eps on |r| inside the contrast weight
    diag_load: float = 1e-6     # scales the running far-end power
    diag_floor: float = 1e-10

    def __post_init__(self):
        if self.taps < 1:
            raise ConfigError("taps must be >= 1")
        if not (0.0 < self.smoothing < 1.0):
            raise ConfigError("smoothing must be in (0,1)")
        if not (0.0 <= self.beta <= 2.0):
            raise ConfigError("beta must be in [0,2]")
        if min(self.eta, self.weight_floor, self.diag_load) <= 0.0:
            raise ConfigError("eta, weight_floor and diag_load must be > 0")


def contrast_weight(r_mag, cfg: WrlsConfig):
    """Per-sample correlation weight phi(|r|); scalar or vector."""
    r = np.maximum(np.asarray(r_mag, dtype=np.float64), cfg.weight_floor)
    if cfg.beta == 0.0:
        return 1.0 / r ** 2
    return cfg.beta * r ** (cfg.beta - 2.0) / cfg.eta ** cfg.beta


def solve_taps(R: np.ndarray, r: np.ndarray, delta) -> np.ndarray:
    """Solve (R + delta*I) w = -r for one bin or a batch of bins.

    R: (..., L, L) Hermitian, r: (..., L), delta: scalar or (...) vector.
    """
    R = np.asarray(R, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    L = R.shape[-1]
    eye = np.eye(L)
    delta = np.asarray(delta, dtype=np.float64)
    A = R + delta[..., None, None] * eye if delta.ndim else R + delta * eye
    try:
        return -np.linalg.solve(A, r[..., None])[..., 0]
    except np.linalg.LinAlgError:
        log.warning("tap solve failed; keeping previous coefficients")
        return None


class WrlsBank:
    """Independent wRLS states for all frequency bins of one stream."""

    def __init__(self, n_bins: int, cfg: WrlsConfig | None = None):
        self.cfg = cfg or WrlsConfig()
        self.n_bins = n_bins
        L = self.cfg.taps
        self.R = np.zeros((n_bins, L, L), dtype=np.complex128)
        self.R[:] = self.cfg.diag_floor * np.eye(L)
        self.r = np.zeros((n_bins, L), dtype=np.complex128)
        self.w = np.zeros((n_bins, L), dtype=np.complex128)
        self.x_hist = np.zeros((n_bins, L), dtype=np.complex128)
        self.far_power = np.zeros(n_bins)
        self.reset_events = 0

    def _reset_bins(self, bad: np.ndarray) -> None:
        L = self.cfg.taps
        self.R[bad] = self.cfg.diag_floor * np.eye(L)
        self.r[bad] = 0.0
        self.w[bad] = 0.0
        self.x_hist[bad] = 0.0
        self.far_power[bad] = 0.0
        self.reset_events += int(np.sum(bad))
        log.warning("non-finite input: reset %d wRLS bins", int(np.sum(bad)))

    def step(self, d_bins: np.ndarray, x_bins: np.ndarray,
             bins: slice = slice(None)) -> np.ndarray:
        """Advance one frame; returns the linear-stage output S_hat.

        `bins` restricts the update to a slice of frequency bins so that a
        caller may split a frame's work across threads; slices must tile
        the full range exactly once per frame.
        """
        cfg = self.cfg
        lam = cfg.smoothing
        d = np.asarray(d_bins, dtype=np.complex128)[bins]
        x_new = np.asarray(x_bins, dtype=np.complex128)[bins]

        bad = ~(np.isfinite(d.real) & np.isfinite(d.imag)
                & np.isfinite(x_new.real) & np.isfinite(x_new.imag))
        if np.any(bad):
            full = np.zeros(self.n_bins, dtype=bool)
            full[bins] = bad
            self._reset_bins(full)
            d = np.where(bad, 0.0, d)
            x_new = np.where(bad, 0.0, x_new)

        xh = np.roll(self.x_hist[bins], 1, axis=1)
        xh[:, 0] = x_new
        self.x_hist[bins] = xh

        prior = d + np.sum(np.conj(self.w[bins]) * xh, axis=-1)
        phi = contrast_weight(np.abs(prior), cfg)

        outer = xh[:, :, None] * np.conj(xh[:, None, :])
        R = lam * self.R[bins] + (1.0 - lam) * phi[:, None, None] * outer
        self.R[bins] = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
        self.r[bins] = lam * self.r[bins] \
            + (1.0 - lam) * phi[:, None] * xh * np.conj(d)[:, None]

        self.far_power[bins] = lam * self.far_power[bins] \
            + (1.0 - lam) * np.abs(x_new) ** 2
        delta = np.maximum(cfg.diag_load * self.far_power[bins], cfg.diag_floor)
        w = solve_taps(self.R[bins], self.r[bins], delta)
        if w is not None:
            self.w[bins] = w

        return d + np.sum(np.conj(self.w[bins]) * xh, axis=-1)


def wrls_step(bank: WrlsBank, d_bin: complex, x_bin: complex):
    """Single-bin convenience wrapper (bank built with n_bins == 1)."""
    out = bank.step(np.array([d_bin]), np.array([x_bin]))
    return out[0], bank


def batch_weighted_ls(x_hist: np.ndarray, d: np.ndarray, phi: np.ndarray,
                      delta: float) -> np.ndarray:
    """Whole-utterance weighted least-squares taps for one bin (oracle aid).

    x_hist: (T, L) tap vectors, d: (T,) mic bins, phi: (T,) weights.
    """
    R = np.einsum("t,ti,tj->ij", phi, x_hist, np.conj(x_hist)) / len(d)
    r = np.einsum("t,ti,t->i", phi, x_hist, np.conj(d)) / len(d)
    return -np.linalg.solve(R + delta * np.eye(x_hist.shape[1]), r)
