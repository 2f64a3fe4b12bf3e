"""On-disk model bundle (``.slut``) and ``.cube`` LUT interchange.

Bundle layout, all little-endian::

    "SLUT"                 4 bytes
    version, flags         u16, u16   (version 1, flags 0)
    T, M, N, reserved      u16 x 4
    cells                  T*M*N^3*3 f32, order [t][m][i=red][j=green][k=blue][channel]
    predictor arch id      u16        (1 = conv net, 2 = free logit grid)
    parameter count        u64
    parameters             f32, concatenated in the predictor's fixed name order
    CRC32                  u32 over every preceding byte

The conv net is stored with its standard widths and a 256x256 input; the
grid size of a grid predictor is recovered from the parameter count.
"""

from __future__ import annotations

import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import BundleError, DataError, InvalidArgument
from .lut import Lut3d, LutBank
from .model import Enhancer
from .predictor import ARCH_CONV, ARCH_GRID, ConvArch, ConvPredictor, GridPredictor

MAGIC = b"SLUT"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHHH")
_PRED_HEADER = struct.Struct("<HQ")
_CRC = struct.Struct("<I")
_F32 = np.dtype("<f4")


def _param_arrays(predictor) -> list[np.ndarray]:
    if isinstance(predictor, ConvPredictor):
        standard = ConvArch(t=predictor.arch.t, m=predictor.arch.m)
        if predictor.arch != standard:
            raise BundleError(f"only the standard conv architecture can be bundled, got {predictor.arch}")
        return [predictor.params[k] for k in standard.param_shapes()]
    return [predictor.params["alpha_logits"], predictor.params["omega_logits"]]


def to_bytes(model: Enhancer) -> bytes:
    t, m, n = model.bank.t_scenarios, model.bank.m_categories, model.bank.n_bins
    if max(t, m, n) > 0xFFFF:
        raise BundleError("T, M and N must fit in 16 bits")
    params = [np.ascontiguousarray(p, dtype=_F32).ravel() for p in _param_arrays(model.predictor)]
    count = sum(p.size for p in params)
    parts = [
        _HEADER.pack(MAGIC, VERSION, 0, t, m, n, 0),
        np.ascontiguousarray(model.bank.values, dtype=_F32).tobytes(),
        _PRED_HEADER.pack(model.predictor.arch_id, count),
        *(p.tobytes() for p in params),
    ]
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def from_bytes(data: bytes) -> Enhancer:
    if len(data) < _HEADER.size + _PRED_HEADER.size + _CRC.size:
        raise BundleError("file too short to be a bundle")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) != crc:
        raise BundleError("CRC mismatch: bundle is corrupted")
    magic, version, _flags, t, m, n, _reserved = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise BundleError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BundleError(f"unsupported bundle version {version}")
    if t < 1 or m < 1 or n < 2:
        raise BundleError(f"invalid header sizes T={t} M={m} N={n}")
    pos = _HEADER.size
    n_cells = t * m * n ** 3 * 3
    if len(body) < pos + 4 * n_cells + _PRED_HEADER.size:
        raise BundleError("truncated cell payload")
    cells = np.frombuffer(body, _F32, n_cells, pos).reshape(t, m, n, n, n, 3)
    pos += 4 * n_cells
    arch_id, count = _PRED_HEADER.unpack_from(body, pos)
    pos += _PRED_HEADER.size
    if len(body) - pos != 4 * count:
        raise BundleError(f"predictor section holds {len(body) - pos} bytes, header says {4 * count}")
    flat = np.frombuffer(body, _F32, count, pos).astype(np.float32)

    if arch_id == ARCH_CONV:
        arch = ConvArch(t=t, m=m)
        shapes = arch.param_shapes()
        expected = sum(math.prod(s) for s in shapes.values())
        if count != expected:
            raise BundleError(f"conv predictor needs {expected} parameters, found {count}")
        params, off = {}, 0
        for name, shape in shapes.items():
            size = math.prod(shape)
            params[name] = flat[off:off + size].reshape(shape)
            off += size
        predictor = ConvPredictor(arch, params)
    elif arch_id == ARCH_GRID:
        g = math.isqrt(max(count - t, 0) // m)
        if g < 1 or g * g * m + t != count:
            raise BundleError(f"parameter count {count} does not fit a T={t}, M={m} logit grid")
        predictor = GridPredictor({"alpha_logits": flat[:g * g * m].reshape(g, g, m),
                                   "omega_logits": flat[g * g * m:]})
    else:
        raise BundleError(f"unknown predictor arch id {arch_id}")
    return Enhancer(LutBank(cells.astype(np.float32)), predictor)


def save_bundle(model: Enhancer, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_bundle(path) -> Enhancer:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read bundle {path}: {exc}") from exc
    return from_bytes(data)


# --------------------------------------------------------------------------
# .cube


def write_cube(lut: Lut3d, path, title: str | None = None) -> None:
    """Write a 3D ``.cube`` file; values are clamped to [0, 1].

    Data lines run with red varying fastest, then green, then blue, which is
    the ordering Adobe/IRIDAS readers expect. The internal layout indexes
    red first, so the cells are transposed on the way out.
    """
    n = lut.n_bins
    v = np.clip(np.asarray(lut.values, dtype=np.float64), 0.0, 1.0)
    rows = v.transpose(2, 1, 0, 3).reshape(-1, 3)  # [b][g][r] -> red fastest
    lines = []
    if title:
        lines.append(f'TITLE "{title}"')
    lines.append(f"LUT_3D_SIZE {n}")
    lines.extend(f"{r:.6f} {g:.6f} {b:.6f}" for r, g, b in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_cube(path) -> Lut3d:
    n = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split()[0]
        if head == "LUT_3D_SIZE":
            n = int(line.split()[1])
        elif head == "TITLE":
            continue
        elif head == "LUT_1D_SIZE":
            raise DataError("1D .cube files are not supported")
        elif head in ("DOMAIN_MIN", "DOMAIN_MAX"):
            try:
                vals = [float(x) for x in line.split()[1:]]
            except ValueError:
                raise DataError(f"line {lineno}: bad {head}") from None
            if vals != [0.0 if head == "DOMAIN_MIN" else 1.0] * 3:
                raise DataError(f"line {lineno}: only the unit domain is supported")
        else:
            try:
                rows.append([float(x) for x in line.split()])
            except ValueError:
                raise DataError(f"line {lineno}: cannot parse {line!r}") from None
            if len(rows[-1]) != 3:
                raise DataError(f"line {lineno}: expected 3 values")
    if n is None:
        raise DataError("missing LUT_3D_SIZE")
    if n < 2:
        raise InvalidArgument(f"LUT_3D_SIZE must be >= 2, got {n}")
    if len(rows) != n ** 3:
        raise DataError(f"expected {n ** 3} data lines, found {len(rows)}")
    cells = np.asarray(rows, dtype=np.float32).reshape(n, n, n, 3).transpose(2, 1, 0, 3)
    return Lut3d(np.ascontiguousarray(cells))
