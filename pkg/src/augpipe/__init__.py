"""Exposure-robust perception data pipeline for visuomotor policy learning.

Color augmentation (AugBlender), camera-exposure corruption, depth maps and
their external backends, episode datasets, fused RGB+depth observations and an
exposure-sweep evaluation harness.
"""

from augpipe.augblender import AugBlenderConfig, AugmentationPlan, OpRange, augblend, execute_plan, sample_plan
from augpipe.corruption import simulate_exposure, sweep_levels
from augpipe.depthio import DepthBackendSpec, synthetic_depth_oracle
from augpipe.imagecore import ColorOp, apply_chain, apply_color_op, blend

__version__ = "0.1.0"

__all__ = [
    "AugBlenderConfig",
    "AugmentationPlan",
    "ColorOp",
    "DepthBackendSpec",
    "OpRange",
    "apply_chain",
    "apply_color_op",
    "augblend",
    "blend",
    "execute_plan",
    "sample_plan",
    "simulate_exposure",
    "sweep_levels",
    "synthetic_depth_oracle",
]
