"""Texture descriptor classification (LBP, LBPRIU, VAR, WLD) with a GLCM baseline."""

from .classify import (
    FORMAT_VERSION,
    ClassModel,
    ModelSet,
    bhattacharyya,
    build_class_model,
    classify_image,
    classify_image_fast,
    classify_image_naive,
    classify_pixel,
    load_model,
    save_model,
    train_models,
)
from .descriptors import MULTI_SCALE, DescriptorConfig, Histogram, bin_count
from .raster import LabelMask, Raster, Rect, load_pgm, save_pgm

__version__ = "0.1.0"

__all__ = [
    "FORMAT_VERSION", "ClassModel", "ModelSet", "bhattacharyya", "build_class_model",
    "classify_image", "classify_image_fast", "classify_image_naive", "classify_pixel",
    "load_model", "save_model", "train_models", "MULTI_SCALE", "DescriptorConfig",
    "Histogram", "bin_count", "LabelMask", "Raster", "Rect", "load_pgm", "save_pgm",
]
