"""Coding-prior guided compressed-video quality enhancement."""

from ._core import (
    SUPPORTED_QPS,
    Container,
    InvalidArgument,
    Model,
    ParseError,
    __version__,
    ablation_variants,
    block_motion_search,
    default_model_config,
    default_train_config,
    encode,
    make_toy_sequence,
    psnr,
    quant_step,
    read_raw,
    ssim,
    write_raw,
)

__all__ = [
    "SUPPORTED_QPS",
    "Container",
    "InvalidArgument",
    "Model",
    "ParseError",
    "__version__",
    "ablation_variants",
    "block_motion_search",
    "default_model_config",
    "default_train_config",
    "encode",
    "make_toy_sequence",
    "psnr",
    "quant_step",
    "read_raw",
    "ssim",
    "write_raw",
]
