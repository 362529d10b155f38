from .camus import parse_metadata, scan_camus, split_diagnostics, split_official
from .masks import binarize_mask
from .readers import SUPPORTED_EXTENSIONS, load_image, load_mask
from .sdm import scan_sdm

__all__ = [
    "SUPPORTED_EXTENSIONS",
    "binarize_mask",
    "load_image",
    "load_mask",
    "parse_metadata",
    "scan_camus",
    "scan_sdm",
    "split_diagnostics",
    "split_official",
]
