"""Click-based interactive image segmentation toolkit.

Core pieces: cascade-forward refinement inference (fixed and adaptive inner
loops), iterative-click-loss training of a small differentiable segmenter,
SUEM copy-paste augmentation, a deterministic NoC benchmark harness, an
external-process segmenter protocol, and a session HTTP service.
"""

__version__ = "0.1.0"

from .core import (
    BinaryMask,
    Click,
    ClickSequence,
    DimensionMismatchError,
    ProbabilityMap,
    RasterImage,
    binarize,
    connected_components,
    distance_transform,
    iou,
    pixel_delta,
)
from .encoding import ClickMaps, ModelInput, assemble_model_input, encode_click_maps
from .cfr import CfrConfig, SegmentationSession, interact, undo
from .segmenter import (
    ScriptedMockSegmenter,
    Segmenter,
    ToyModelParams,
    ToySegmenter,
    load_params,
    save_params,
)
from .simulator import (
    SimulatorConfig,
    next_eval_click,
    next_training_click,
    sample_initial_clicks,
)
from .training import IclConfig, icl_total_loss, nfl_loss_and_grad, train
from .augment import AnnotatedSample, SuemConfig, augment_sample
from .bench import EvalConfig, evaluate_dataset, evaluate_instance

__all__ = [
    "__version__",
    "BinaryMask",
    "Click",
    "ClickSequence",
    "ClickMaps",
    "CfrConfig",
    "DimensionMismatchError",
    "EvalConfig",
    "IclConfig",
    "ModelInput",
    "ProbabilityMap",
    "RasterImage",
    "AnnotatedSample",
    "ScriptedMockSegmenter",
    "SegmentationSession",
    "Segmenter",
    "SimulatorConfig",
    "SuemConfig",
    "ToyModelParams",
    "ToySegmenter",
    "assemble_model_input",
    "augment_sample",
    "binarize",
    "connected_components",
    "distance_transform",
    "encode_click_maps",
    "evaluate_dataset",
    "evaluate_instance",
    "icl_total_loss",
    "interact",
    "iou",
    "load_params",
    "nfl_loss_and_grad",
    "next_eval_click",
    "next_training_click",
    "pixel_delta",
    "sample_initial_clicks",
    "save_params",
    "train",
    "undo",
]
