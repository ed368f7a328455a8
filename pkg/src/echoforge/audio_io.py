"""Mono WAV reading/writing (16-bit PCM and 32-bit float).

Non-16 kHz files are rejected by default; an explicit allow_resample flag
enables linear-phase polyphase resampling instead.
"""

from __future__ import annotations

import io
import sys

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioIOError


def read_wav(path: str, target_rate: int = 16000,
             allow_resample: bool = False) -> np.ndarray:
    """Read a mono WAV file as float64 in [-1, 1] at target_rate."""
    try:
        if path == "-":
            rate, data = wavfile.read(io.BytesIO(sys.stdin.buffer.read()))
        else:
            rate, data = wavfile.read(path)
    except FileNotFoundError as e:
        raise AudioIOError(f"cannot open {path!r}: {e}") from e
    except ValueError as e:
        raise AudioIOError(f"cannot parse {path!r} as WAV: {e}") from e

    if data.ndim != 1:
        raise AudioIOError(f"{path!r}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise AudioIOError(f"{path!r}: unsupported sample format {data.dtype} "
                           "(need int16 or float32)")
    if rate != target_rate:
        if not allow_resample:
            raise AudioIOError(
                f"{path!r}: sample rate {rate} != {target_rate} Hz; "
                "pass --resample to convert")
        g = np.gcd(int(rate), int(target_rate))
        x = resample_poly(x, target_rate // g, rate // g)
    return x


def write_wav(path: str, samples: np.ndarray, rate: int = 16000,
              fmt: str = "float32") -> None:
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if fmt == "float32":
        data = samples.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise AudioIOError(f"unsupported output format {fmt!r}")
    try:
        if path == "-":
            buf = io.BytesIO()
            wavfile.write(buf, rate, data)
            sys.stdout.buffer.write(buf.getvalue())
        else:
            wavfile.write(path, rate, data)
    except OSError as e:
        raise AudioIOError(f"cannot write {path!r}: {e}") from e
