"""Causal deep FSMN mask estimator for residual echo suppression.

The network maps spliced log-fbank features of the linear-stage output and
the aligned far end to a real [0,1] mask over the STFT bins:

    p1      = ReLU(U0 @ f_in + v0)
    block j: h    = ReLU(U1 @ p + v)
             pbar = U2 @ h
             out  = p + pbar + sum_{i=0..N} m_i * pbar[t-i]    (elementwise)
    mask    = Sigmoid(Uout @ pJ + vout)

The additive `p` term is the skip connection between memory blocks; no
other paths exist. Splicing takes frames [t-1, t, t+1], so inference runs
one frame behind its input (10 ms algorithmic latency), which the pipeline
charges to its output alignment.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import dsp
from .errors import ModelFormatError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"FSMN"
MODEL_VERSION = 1


@dataclass
class FsmnBlock:
    u1: np.ndarray      # (hidden, proj)
    v: np.ndarray       # (hidden,)
    u2: np.ndarray      # (proj, hidden)
    mem: np.ndarray     # (N+1, proj), row i weights pbar[t-i]


@dataclass
class FsmnModel:
    input_dim: int
    n_blocks: int
    hidden: int
    proj: int
    lookback: int
    mask_dim: int
    norm_mean: np.ndarray
    norm_std: np.ndarray
    u_in: np.ndarray    # (proj, input_dim)
    v_in: np.ndarray    # (proj,)
    blocks: list[FsmnBlock]
    u_out: np.ndarray   # (mask_dim, proj)
    v_out: np.ndarray   # (mask_dim,)

    def __post_init__(self):
        c = (self.u_in.shape == (self.proj, self.input_dim)
             and self.v_in.shape == (self.proj,)
             and self.u_out.shape == (self.mask_dim, self.proj)
             and self.v_out.shape == (self.mask_dim,)
             and self.norm_mean.shape == (self.input_dim,)
             and self.norm_std.shape == (self.input_dim,)
             and len(self.blocks) == self.n_blocks)
        for b in self.blocks:
            c = c and (b.u1.shape == (self.hidden, self.proj)
                       and b.v.shape == (self.hidden,)
                       and b.u2.shape == (self.proj, self.hidden)
                       and b.mem.shape == (self.lookback + 1, self.proj))
        if not c:
            raise ModelFormatError("inconsistent tensor shapes for declared dims")
        if np.any(self.norm_std <= 0):
            raise ModelFormatError("feature std must be strictly positive")

    @property
    def param_count(self) -> int:
        """Trainable parameters (normalization stats excluded)."""
        n = self.u_in.size + self.v_in.size + self.u_out.size + self.v_out.size
        for b in self.blocks:
            n += b.u1.size + b.v.size + b.u2.size + b.mem.size
        return int(n)

    def _tensors(self) -> list[np.ndarray]:
        out = [self.norm_mean, self.norm_std, self.u_in, self.v_in]
        for b in self.blocks:
            out += [b.u1, b.v, b.u2, b.mem]
        out += [self.u_out, self.v_out]
        return out


def default_model_shapes() -> dict:
    return dict(input_dim=240, n_blocks=9, hidden=256, proj=256,
                lookback=20, mask_dim=161)


def random_model(seed: int = 0, scale: float = 0.1, **shape_overrides) -> FsmnModel:
    """Seeded random weights in the production layout (test fixture aid)."""
    s = default_model_shapes() | shape_overrides
    rng = np.random.default_rng(seed)

    def t(*shape):
        return (scale * rng.standard_normal(shape)).astype(np.float32)

    blocks = [FsmnBlock(t(s["hidden"], s["proj"]), t(s["hidden"]),
                        t(s["proj"], s["hidden"]), t(s["lookback"] + 1, s["proj"]))
              for _ in range(s["n_blocks"])]
    return FsmnModel(norm_mean=np.zeros(s["input_dim"], dtype=np.float32),
                     norm_std=np.ones(s["input_dim"], dtype=np.float32),
                     u_in=t(s["proj"], s["input_dim"]), v_in=t(s["proj"]),
                     blocks=blocks,
                     u_out=t(s["mask_dim"], s["proj"]), v_out=t(s["mask_dim"]),
                     **s)


# ---------------------------------------------------------------------------
# Binary model format
#
# little-endian: magic "FSMN", u32 version, u32 x6 dims
# {input_dim, J, hidden, proj, N, mask_dim}, tensors as raw float32
# row-major in declared order, trailing u64 = total float count.

def save_model(model: FsmnModel, path: str) -> None:
    header = MODEL_MAGIC + struct.pack(
        "<7I", MODEL_VERSION, model.input_dim, model.n_blocks,
        model.hidden, model.proj, model.lookback, model.mask_dim)
    with open(path, "wb") as f:
        f.write(header)
        total = 0
        for t in model._tensors():
            data = np.ascontiguousarray(t, dtype="<f4")
            f.write(data.tobytes())
            total += data.size
        f.write(struct.pack("<Q", total))


def load_model(path: str) -> FsmnModel:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 32 or blob[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path!r}: bad magic (not an FSMN model file)")
    version, input_dim, n_blocks, hidden, proj, lookback, mask_dim = \
        struct.unpack_from("<7I", blob, 4)
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"{path!r}: version {version} unsupported (expected {MODEL_VERSION})")
    shapes = [(input_dim,), (input_dim,), (proj, input_dim), (proj,)]
    for _ in range(n_blocks):
        shapes += [(hidden, proj), (hidden,), (proj, hidden), (lookback + 1, proj)]
    shapes += [(mask_dim, proj), (mask_dim,)]
    total = sum(int(np.prod(s)) for s in shapes)
    expected = 32 + 4 * total + 8
    if len(blob) != expected:
        raise ModelFormatError(
            f"{path!r}: truncated or oversized file "
            f"({len(blob)} bytes, expected {expected})")
    (checksum,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if checksum != total:
        raise ModelFormatError(
            f"{path!r}: structure checksum {checksum} != {total}")
    tensors = []
    off = 32
    for s in shapes:
        n = int(np.prod(s))
        tensors.append(np.frombuffer(blob, dtype="<f4", count=n,
                                     offset=off).reshape(s).copy())
        off += 4 * n
    it = iter(tensors)
    norm_mean, norm_std, u_in, v_in = next(it), next(it), next(it), next(it)
    blocks = [FsmnBlock(next(it), next(it), next(it), next(it))
              for _ in range(n_blocks)]
    u_out, v_out = next(it), next(it)
    return FsmnModel(input_dim=input_dim, n_blocks=n_blocks, hidden=hidden,
                     proj=proj, lookback=lookback, mask_dim=mask_dim,
                     norm_mean=norm_mean, norm_std=norm_std,
                     u_in=u_in, v_in=v_in, blocks=blocks,
                     u_out=u_out, v_out=v_out)


# ---------------------------------------------------------------------------
# Streaming runtime

def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    return expit(x)


class FeatureSplicer:
    """Per-frame 80-dim fbank pairs -> 240-dim [t-1, t, t+1] splice.

    The feature for frame t is returned while consuming frame t+1 (one
    frame of lookahead); the stream start uses a zero past slot.
    """

    def __init__(self, model: FsmnModel, fbank_cfg: dsp.FbankConfig | None = None):
        self.model = model
        self.fbank_cfg = fbank_cfg or dsp.FbankConfig()
        self.base_dim = 2 * self.fbank_cfg.n_mels
        if 3 * self.base_dim != model.input_dim:
            raise ModelFormatError(
                f"model input dim {model.input_dim} incompatible with "
                f"{self.base_dim}-dim frame features")
        self._past = np.zeros(self.base_dim)
        self._cur: np.ndarray | None = None

    def frame_feature(self, s_hat_bins: np.ndarray, x_aligned_bins: np.ndarray) -> np.ndarray:
        return np.concatenate([dsp.log_fbank(s_hat_bins, self.fbank_cfg),
                               dsp.log_fbank(x_aligned_bins, self.fbank_cfg)])

    def push(self, s_hat_bins: np.ndarray, x_aligned_bins: np.ndarray) -> np.ndarray | None:
        """Returns the normalized spliced feature of the previous frame."""
        fut = self.frame_feature(s_hat_bins, x_aligned_bins)
        out = None
        if self._cur is not None:
            spliced = np.concatenate([self._past, self._cur, fut])
            out = (spliced - self.model.norm_mean) / self.model.norm_std
            self._past = self._cur
        self._cur = fut
        return out

    def flush(self) -> np.ndarray | None:
        """Final frame's feature, with a zero future slot."""
        if self._cur is None:
            return None
        spliced = np.concatenate([self._past, self._cur, np.zeros(self.base_dim)])
        out = (spliced - self.model.norm_mean) / self.model.norm_std
        self._past, self._cur = self._cur, None
        return out


class FsmnRuntime:
    """Per-stream inference state: one pbar ring buffer per block."""

    def __init__(self, model: FsmnModel):
        self.model = model
        n = model.lookback + 1
        self._rings = [np.zeros((n, model.proj)) for _ in model.blocks]
        self._heads = [0] * len(model.blocks)
        self.fault_frames = 0

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Mask for one frame; fails open (all-ones) on numerical faults."""
        m = self.model
        p = _relu(m.u_in @ features + m.v_in)
        n = m.lookback + 1
        for j, b in enumerate(m.blocks):
            h = _relu(b.u1 @ p + b.v)
            pbar = b.u2 @ h
            ring, head = self._rings[j], self._heads[j]
            ring[head] = pbar
            # rows of b.mem weight pbar[t-i]; gather the ring in that order
            idx = (head - np.arange(n)) % n
            mem = np.sum(b.mem * ring[idx], axis=0)
            p = p + pbar + mem
            self._heads[j] = (head + 1) % n
        mask = _sigmoid(m.u_out @ p + m.v_out)
        if not np.all(np.isfinite(mask)):
            self.fault_frames += 1
            log.warning("non-finite activation; emitting pass-through mask")
            return np.ones(m.mask_dim)
        return mask


def fsmn_forward(features: np.ndarray, model: FsmnModel,
                 runtime: FsmnRuntime) -> np.ndarray:
    return runtime.forward(features)


def fsmn_forward_batch(features: np.ndarray, model: FsmnModel) -> np.ndarray:
    """Whole-utterance forward pass, (T, input_dim) -> (T, mask_dim).

    Reference path for the streaming runtime: identical math expressed as
    full-sequence matrix ops plus an explicit memory convolution.
    """
    feats = np.asarray(features, dtype=np.float64)
    T = feats.shape[0]
    p = _relu(feats @ model.u_in.T + model.v_in)
    for b in model.blocks:
        h = _relu(p @ b.u1.T + b.v)
        pbar = h @ b.u2.T
        mem = np.zeros_like(pbar)
        for i in range(model.lookback + 1):
            mem[i:] += b.mem[i] * pbar[: T - i]
        p = p + pbar + mem
    return _sigmoid(p @ model.u_out.T + model.v_out)


def apply_mask(s_hat_bins: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.asarray(s_hat_bins) * np.asarray(mask)


def psm_target(s_bins: np.ndarray, s_hat_bins: np.ndarray,
               tiny: float = 1e-12) -> np.ndarray:
    """Phase-sensitive mask target (|S|/|S_hat|)*Re(S/S_hat), clipped to [0,1].

    Degenerate bins: |S_hat| below tiny maps to 0 when S is also silent,
    else to 1.
    """
    s = np.asarray(s_bins, dtype=np.complex128)
    sh = np.asarray(s_hat_bins, dtype=np.complex128)
    mag_sh = np.abs(sh)
    safe = np.where(mag_sh < tiny, 1.0, sh)
    val = (np.abs(s) / np.abs(safe)) * np.real(s / safe)
    val = np.clip(val, 0.0, 1.0)
    return np.where(mag_sh < tiny, np.where(np.abs(s) < tiny, 0.0, 1.0), val)
