"""File formats: Middlebury ``.flo`` flow files, 8-bit images, occlusion masks."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

FLO_MAGIC = 202021.25
UNKNOWN_FLOW = 1e9


class FloError(IOError):
    """Base class for malformed ``.flo`` files."""

    code = "flo-error"


class BadMagic(FloError):
    code = "bad-magic"


class TruncatedPayload(FloError):
    code = "truncated"


class DimensionMismatch(FloError):
    code = "dimension-mismatch"


def write_flo(flow, path) -> None:
    """Write an ``(H, W, 2)`` field as little-endian float32 ``.flo``."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must have shape (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], "<f4").tobytes())
        fh.write(np.array([w, h], "<i4").tobytes())
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    """Read a ``.flo`` file into a float32 ``(H, W, 2)`` array.

    Raises :class:`BadMagic`, :class:`TruncatedPayload` or
    :class:`DimensionMismatch` for the corresponding defects.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or np.frombuffer(data[:4], "<f4")[0] != np.float32(FLO_MAGIC):
        raise BadMagic(f"{path}: not a .flo file (bad magic tag)")
    if len(data) < 12:
        raise TruncatedPayload(f"{path}: header truncated")
    w, h = (int(v) for v in np.frombuffer(data[4:12], "<i4"))
    if w <= 0 or h <= 0:
        raise DimensionMismatch(f"{path}: invalid dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise TruncatedPayload(f"{path}: expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise DimensionMismatch(f"{path}: {len(data) - need} bytes beyond the declared {w}x{h} field")
    return np.frombuffer(data[12:], "<f4").reshape(h, w, 2).astype(np.float32)


def unknown_mask(flow) -> np.ndarray:
    """Pixels marked as unknown flow (any component above 1e9 in magnitude, or non-finite)."""
    flow = np.asarray(flow, dtype=np.float64)
    return ~np.all(np.isfinite(flow), -1) | np.any(np.abs(flow) > UNKNOWN_FLOW, -1)


def read_image(path) -> np.ndarray:
    """Read a PNG/PPM (or any Pillow format) as RGB float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return arr.astype(np.float64) / 255.0


def write_image(img, path) -> None:
    """Write a float image in [0, 1] (grey or RGB) as 8-bit."""
    arr = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def write_occlusion(occ, path) -> None:
    """Occlusion mask as 8-bit grey PNG, 255 = occluded."""
    Image.fromarray(np.where(np.asarray(occ) != 0, 255, 0).astype(np.uint8)).save(path)


def read_occlusion(path) -> np.ndarray:
    """Inverse of :func:`write_occlusion`; any value >= 128 counts as occluded."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.uint8)
