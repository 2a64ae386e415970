"""Score-guided photo enhancement with generated 1D curves and fused 3D grids.

The model conditions a small convolutional backbone on a downsampled image
plus replicated score (and optional skin-tone label) planes, then applies
the emitted per-channel Lab curves and a weighted blend of basis 3D grids
to the full-resolution image.  Training, subjective-score processing,
skin-tone clustering, a CLI, and an HTTP service live in the submodules.
"""

from .color import Colorspace, ImageBuffer, LabPixel, RgbPixel
from .engine import EnhanceRequest, enhance, enhance_multi_round
from .errors import ToneguideError
from .lut import BasisLutBank, Lut1D, Lut1DTriple, Lut3D
from .skintone import SkinToneCenters
from .trainer import (
    ModelCheckpoint,
    Sample,
    TrainConfig,
    TrainingPair,
    finetune,
    initialize_checkpoint,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BasisLutBank",
    "Colorspace",
    "EnhanceRequest",
    "ImageBuffer",
    "LabPixel",
    "Lut1D",
    "Lut1DTriple",
    "Lut3D",
    "ModelCheckpoint",
    "RgbPixel",
    "Sample",
    "SkinToneCenters",
    "ToneguideError",
    "TrainConfig",
    "TrainingPair",
    "enhance",
    "enhance_multi_round",
    "finetune",
    "initialize_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "__version__",
]
