"""Model adapter layer: uniform handle over VLSM architectures plus a test stub."""

from .adapter import VlsmHandle, build_handle, load_checkpoint
from .preprocess import preprocess, resize_intensity, to_unit_range
from .spec import ModelKind, ModelSpec
from .stub import VlsmStub, build_stub

__all__ = [
    "VlsmHandle",
    "build_handle",
    "load_checkpoint",
    "preprocess",
    "resize_intensity",
    "to_unit_range",
    "ModelKind",
    "ModelSpec",
    "VlsmStub",
    "build_stub",
]
