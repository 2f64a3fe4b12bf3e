"""PNG load/save and 8-bit conversion.

Pixel decoding/encoding is delegated to Pillow; the header is checked here
first so that unsupported variants (16-bit, palette, interlaced) fail with a
typed error instead of being silently converted.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgument, PngDecodeError, PngUnsupportedError
from .resample import resize_bilinear

__all__ = ["PngMeta", "read_png_meta", "load_png", "save_png", "save_gray_png",
           "quantize", "resize_bilinear"]

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_COLOR_TYPES = {0: "gray", 2: "rgb", 3: "palette", 4: "gray_alpha", 6: "rgba"}


@dataclass(frozen=True)
class PngMeta:
    width: int
    height: int
    bit_depth: int
    color_type: str
    interlaced: bool


def read_png_meta(data: bytes) -> PngMeta:
    if data[:8] != PNG_SIGNATURE:
        raise PngDecodeError("not a PNG file (bad signature)")
    if len(data) < 33:
        raise PngDecodeError("truncated PNG header")
    length, tag = struct.unpack(">I4s", data[8:16])
    if tag != b"IHDR" or length != 13:
        raise PngDecodeError("first chunk is not a valid IHDR")
    body = data[16:29]
    (crc,) = struct.unpack(">I", data[29:33])
    if zlib.crc32(data[12:29]) != crc:
        raise PngDecodeError("IHDR CRC mismatch")
    width, height, depth, ctype, _comp, _filt, interlace = struct.unpack(">IIBBBBB", body)
    if ctype not in _COLOR_TYPES:
        raise PngDecodeError(f"invalid color type {ctype}")
    return PngMeta(width, height, depth, _COLOR_TYPES[ctype], interlace == 1)


def load_png(path) -> np.ndarray:
    """Decode an 8-bit PNG to an ``(H, W, 3)`` float32 array (v / 255).

    Grayscale is replicated to three channels and any alpha channel is dropped.
    """
    data = Path(path).read_bytes()
    meta = read_png_meta(data)
    if meta.bit_depth != 8:
        raise PngUnsupportedError(f"{path}: bit depth {meta.bit_depth} (only 8-bit is supported)")
    if meta.color_type == "palette":
        raise PngUnsupportedError(f"{path}: palette images are not supported")
    if meta.interlaced:
        raise PngUnsupportedError(f"{path}: interlaced PNGs are not supported")
    try:
        with Image.open(path) as im:
            im.load()
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError, zlib.error) as exc:
        raise PngDecodeError(f"{path}: {exc}") from exc
    if rgb.shape[:2] != (meta.height, meta.width):
        raise PngDecodeError(f"{path}: decoded size does not match the header")
    return rgb.astype(np.float32) / np.float32(255)


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to 8-bit codes, rounding halves up."""
    v = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    codes = quantize(image)
    if codes.ndim != 3 or codes.shape[2] != 3:
        raise InvalidArgument(f"expected an (H, W, 3) image, got shape {codes.shape}")
    Image.fromarray(codes).save(path, format="PNG")


def save_gray_png(plane: np.ndarray, path) -> None:
    Image.fromarray(quantize(plane)).save(path, format="PNG")
