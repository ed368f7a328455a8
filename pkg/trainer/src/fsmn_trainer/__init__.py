"""FSMN mask trainer for the echoforge engine.

The trainer talks to the engine only through its public surfaces: the
`echoforge` CLI (suite synthesis and linear-stage spectra dumps), WAV and
manifest files, and the binary model format it exports into.
"""

from .features import (FRAME_LEN, HOP, N_MELS, features_from_spectra,
                       log_fbank, mel_matrix, psm_target, splice, stft)
from .model import FsmnNet
from .data import ClipData, build_dataset, compute_norm, run_engine_linear
from .train import TrainConfig, train
from .export import export_model

__all__ = [
    "FRAME_LEN", "HOP", "N_MELS", "features_from_spectra", "log_fbank",
    "mel_matrix", "psm_target", "splice", "stft", "FsmnNet", "ClipData",
    "build_dataset", "compute_norm", "run_engine_linear", "TrainConfig",
    "train", "export_model",
]
