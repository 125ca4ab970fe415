"""Content-aware image retargeting in CNN feature space."""

from .backbone import (
    WeightsBundle,
    extract_pyramid,
    forward_between,
    load_weights,
    loss_and_gradient,
    save_weights,
)
from .inversion import InversionConfig, invert
from .nnf import NNField, fuse, patchmatch, vote_reconstruct, warp
from .pipeline import RetargetConfig, RetargetResult, retarget
from .tensors import Axis, FeatureMap, FeaturePyramid, Image, bilinear_resize, transpose_spatial
from .urs import ObscurityProfile, select_columns, urs_retarget

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "FeatureMap",
    "FeaturePyramid",
    "Image",
    "InversionConfig",
    "NNField",
    "ObscurityProfile",
    "RetargetConfig",
    "RetargetResult",
    "WeightsBundle",
    "bilinear_resize",
    "extract_pyramid",
    "forward_between",
    "fuse",
    "invert",
    "load_weights",
    "loss_and_gradient",
    "patchmatch",
    "retarget",
    "save_weights",
    "select_columns",
    "transpose_spatial",
    "urs_retarget",
    "vote_reconstruct",
    "warp",
]
