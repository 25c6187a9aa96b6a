"""Python surface of the region-prompted model core.

Everything heavy lives in the C++ extension; this package re-exports the
bound operations.
"""

from ._core import (  # noqa: F401
    Model,
    ModelConfig,
    RespondResult,
    conv2d,
    difficulty_filter,
    mask_from_rle,
    mask_to_bbox,
    mask_to_rle,
    matmul,
    plan_tiles,
    resize_bilinear,
    resize_mask_nearest,
    roi_align,
    sample_frames,
    score_mcq,
)

__all__ = [
    "Model",
    "ModelConfig",
    "RespondResult",
    "conv2d",
    "difficulty_filter",
    "mask_from_rle",
    "mask_to_bbox",
    "mask_to_rle",
    "matmul",
    "plan_tiles",
    "resize_bilinear",
    "resize_mask_nearest",
    "roi_align",
    "sample_frames",
    "score_mcq",
]
