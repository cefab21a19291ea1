"""Skull stripping with 2D U-Nets."""

from ._stripnet import (
    ARCHITECTURES,
    PUBLISHED_PARAMETERS,
    UNet,
    adam_scalar_step,
    analytic_parameter_count,
    augment,
    bce_loss,
    dice,
    effective_lr,
    gradcheck,
    half_bits_to_float,
    float_to_half_bits,
    phantom_scan,
    phantom_slice,
    predict,
    preprocess,
    read_nifti,
    read_npy,
    skull_strip,
    train,
    write_npy,
    znorm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
