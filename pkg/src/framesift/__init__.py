"""framesift: keyframe filtration, masking, detection, and evaluation for checkout videos."""

__version__ = "0.1.0"

from .ingest import FramePixels, FrameSequence, PreprocessSpec, load_frame_dir
from .signals import BinaryMask, SignalSeries
from .config import PipelineConfig
from .detect import Detection, dedupe, run_pipeline
from .evaluation import GroundTruthEvent, macro_f1, match

__all__ = [
    "__version__",
    "FramePixels",
    "FrameSequence",
    "PreprocessSpec",
    "load_frame_dir",
    "BinaryMask",
    "SignalSeries",
    "PipelineConfig",
    "Detection",
    "dedupe",
    "run_pipeline",
    "GroundTruthEvent",
    "macro_f1",
    "match",
]
