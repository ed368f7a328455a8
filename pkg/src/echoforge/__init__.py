"""echoforge: streaming acoustic echo cancellation.

Three cascaded stages: GCC-PHAT time-delay compensation, a weighted-RLS
frequency-domain linear canceller derived from a source-separation view,
and a causal deep-FSMN mask for residual echo suppression. Ships with a
synthetic scenario generator and an objective evaluation harness.
"""

from .dsp import FbankConfig, FrameConfig, Spectrum
from .fsmn import FsmnModel, FsmnRuntime, load_model, save_model
from .pipeline import AecPipeline, PipelineConfig
from .tdc import CrossCorrState, DelayEstimate
from .wrls import WrlsBank, WrlsConfig

__version__ = "0.1.0"

__all__ = [
    "AecPipeline", "PipelineConfig", "FrameConfig", "FbankConfig", "Spectrum",
    "FsmnModel", "FsmnRuntime", "load_model", "save_model",
    "CrossCorrState", "DelayEstimate", "WrlsBank", "WrlsConfig",
    "__version__",
]
