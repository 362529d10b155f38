"""Array readers for the on-disk image/mask formats the pipeline accepts.

Images come back as float32 intensity arrays, masks as integer arrays read
without any interpolation.  Supported: ``.npy``, ``.png``/``.jpg``, and
MetaImage ``.mhd``/``.mha`` (2D, or 3D with singleton leading axes).
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError

SUPPORTED_EXTENSIONS = (".npy", ".png", ".jpg", ".jpeg", ".mhd", ".mha")

_METAIMAGE_DTYPES = {
    "MET_UCHAR": np.uint8,
    "MET_CHAR": np.int8,
    "MET_USHORT": np.uint16,
    "MET_SHORT": np.int16,
    "MET_UINT": np.uint32,
    "MET_INT": np.int32,
    "MET_FLOAT": np.float32,
    "MET_DOUBLE": np.float64,
}


def _read_metaimage(path: Path) -> np.ndarray:
    header: dict[str, str] = {}
    raw_offset = None
    with open(path, "rb") as fh:
        while True:
            pos = fh.tell()
            line = fh.readline()
            if not line:
                break
            try:
                text = line.decode("ascii").strip()
            except UnicodeDecodeError:
                raw_offset = pos
                break
            if "=" not in text:
                raw_offset = pos
                break
            key, value = (part.strip() for part in text.split("=", 1))
            header[key] = value
            if key == "ElementDataFile":
                raw_offset = fh.tell()
                break

    for key in ("DimSize", "ElementType", "ElementDataFile"):
        if key not in header:
            raise DataError(f"{path}: MetaImage header missing {key}")

    dims = [int(tok) for tok in header["DimSize"].split()]
    dtype = _METAIMAGE_DTYPES.get(header["ElementType"])
    if dtype is None:
        raise DataError(f"{path}: unsupported MetaImage ElementType {header['ElementType']!r}")

    data_file = header["ElementDataFile"]
    if data_file.upper() == "LOCAL":
        with open(path, "rb") as fh:
            fh.seek(raw_offset)
            blob = fh.read()
    else:
        with open(path.parent / data_file, "rb") as fh:
            blob = fh.read()
    if header.get("CompressedData", "False").lower() == "true":
        blob = zlib.decompress(blob)

    count = int(np.prod(dims))
    array = np.frombuffer(blob, dtype=dtype, count=count)
    # MetaImage DimSize is (x, y[, z]); numpy wants slowest-varying first.
    array = array.reshape(tuple(reversed(dims)))
    while array.ndim > 2 and array.shape[0] == 1:
        array = array[0]
    if array.ndim != 2:
        raise DataError(f"{path}: expected a 2D image, got shape {array.shape}")
    return np.ascontiguousarray(array)


def _load_array(path: Path) -> np.ndarray:
    suffix = path.suffix.lower()
    if suffix == ".npy":
        return np.load(path)
    if suffix in (".png", ".jpg", ".jpeg"):
        with Image.open(path) as img:
            if img.mode == "P":
                return np.asarray(img)  # palette indices are the labels
            if img.mode not in ("L", "I", "I;16", "F"):
                img = img.convert("L")
            return np.asarray(img)
    if suffix in (".mhd", ".mha"):
        return _read_metaimage(path)
    raise DataError(
        f"{path}: unsupported extension {suffix!r}; supported: {SUPPORTED_EXTENSIONS}"
    )


def load_image(ref: str | Path) -> np.ndarray:
    """Load an intensity image as a 2D float32 array."""
    path = Path(ref)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    array = _load_array(path)
    if array.ndim == 3 and array.shape[-1] in (3, 4):
        array = array[..., :3].mean(axis=-1)
    if array.ndim != 2:
        raise DataError(f"{path}: expected a 2D image, got shape {array.shape}")
    return array.astype(np.float32)


def load_mask(ref: str | Path) -> np.ndarray:
    """Load a multiclass mask as a 2D integer array, never interpolated."""
    path = Path(ref)
    if not path.is_file():
        raise DataError(f"mask file not found: {path}")
    array = _load_array(path)
    if array.ndim != 2:
        raise DataError(f"{path}: expected a 2D mask, got shape {array.shape}")
    if np.issubdtype(array.dtype, np.floating):
        rounded = np.rint(array)
        if not np.allclose(array, rounded, atol=1e-6):
            raise DataError(f"{path}: mask has non-integer values")
        array = rounded
    return array.astype(np.int64)
