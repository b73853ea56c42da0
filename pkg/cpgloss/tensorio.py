"""
Portable binary tensor files (.cpgt) and grayscale PGM export.

Layout of a .cpgt file, all little-endian:

    magic   4 bytes  b"CPGT"
    version u8       1
    dtype   u8       0 = f32, 1 = i32
    ndim    u8
    reserved u8      0
    dims    ndim x u32
    payload prod(dims) elements, row-major
"""
import io
import struct
from enum import IntEnum
import numpy as np
from PIL import Image

from .maptype import FormatError, ShapeError, UnsupportedError, ArgumentError, DataError

__all__ = ["DType", "MAGIC", "VERSION", "tensor_write", "tensor_read", "tensor_bytes",
           "tensor_from_bytes", "save_tensor", "load_tensor", "export_pgm", "pgm_levels"]

MAGIC = b"CPGT"
VERSION = 1
_HEADER = struct.Struct("<4sBBBB")
_U32_MAX = 2 ** 32 - 1


class DType(IntEnum):
    F32 = 0
    I32 = 1

    @property
    def numpy_type(self):
        return np.dtype("<f4") if self == DType.F32 else np.dtype("<i4")

    @classmethod
    def from_array(cls, a):
        """
        :param a: numpy array.
        :return: DType matching a's kind; floats map to F32, integers and bools to I32.
        """
        if np.issubdtype(a.dtype, np.floating):
            return cls.F32
        if np.issubdtype(a.dtype, np.integer) or a.dtype == np.bool_:
            return cls.I32
        raise UnsupportedError("dtype {} has no .cpgt encoding".format(a.dtype))


def _as_storable(t):
    a = np.asarray(t)
    if a.ndim > 255:
        raise ShapeError("tensor has {} axes, at most 255 are encodable".format(a.ndim))
    if any(d > _U32_MAX for d in a.shape):
        raise ShapeError("axis length exceeds u32 in shape {}".format(a.shape))
    dtype = DType.from_array(a)
    if dtype == DType.I32 and a.size:
        info = np.iinfo(np.int32)
        if a.min() < info.min or a.max() > info.max:
            raise UnsupportedError("integer values do not fit in i32")
    return dtype, np.ascontiguousarray(a, dtype=dtype.numpy_type)


def tensor_write(t, destination):
    """
    Write a tensor in .cpgt format.
    :param t: numpy array (f32/f64 stored as f32, integer stored as i32).
    :param destination: binary file-like object.
    """
    dtype, data = _as_storable(t)
    destination.write(_HEADER.pack(MAGIC, VERSION, int(dtype), data.ndim, 0))
    if data.ndim:
        destination.write(struct.pack("<%dI" % data.ndim, *data.shape))
    destination.write(data.tobytes(order="C"))


def _read_exact(source, n, what):
    buf = source.read(n)
    if buf is None or len(buf) != n:
        raise FormatError("truncated .cpgt stream: expected {} bytes of {}, got {}".format(
            n, what, 0 if buf is None else len(buf)))
    return buf


def tensor_read(source):
    """
    Read one tensor in .cpgt format.
    :param source: binary file-like object positioned at a header.
    :return: numpy array with dtype float32 or int32 (native byte order).
    """
    magic, version, dtype_code, ndim, _reserved = _HEADER.unpack(_read_exact(source, _HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError("bad magic {!r}, expected {!r}".format(magic, MAGIC))
    if version != VERSION:
        raise UnsupportedError("unsupported .cpgt version {}".format(version))
    try:
        dtype = DType(dtype_code)
    except ValueError:
        raise UnsupportedError("unsupported .cpgt dtype code {}".format(dtype_code))

    dims = struct.unpack("<%dI" % ndim, _read_exact(source, 4 * ndim, "dims")) if ndim else ()
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = _read_exact(source, count * dtype.numpy_type.itemsize, "payload")
    data = np.frombuffer(payload, dtype=dtype.numpy_type).reshape(dims)
    return data.astype(dtype.numpy_type.newbyteorder("="))


def tensor_bytes(t):
    buf = io.BytesIO()
    tensor_write(t, buf)
    return buf.getvalue()


def tensor_from_bytes(b):
    return tensor_read(io.BytesIO(b))


def save_tensor(t, path):
    with open(path, "wb") as f:
        tensor_write(t, f)


def load_tensor(path):
    with open(path, "rb") as f:
        return tensor_read(f)


def pgm_levels(t, lo, hi):
    """
    Map values to 8-bit gray levels: round(255 * clamp((v - lo) / (hi - lo), 0, 1)).
    Halves round up, so 0.5 maps to 128. NaN and infinities raise DataError.
    :return: uint8 array with t's shape.
    """
    if not hi > lo:
        raise ArgumentError("PGM range requires hi > lo, got lo={} hi={}".format(lo, hi))
    v = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DataError("cannot map non-finite values to gray levels")
    scaled = 255.0 * np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    return np.floor(scaled + 0.5).astype(np.uint8)


def export_pgm(t, lo, hi, destination):
    """
    Write a 2-D tensor as a binary (P5) PGM with maxval 255.
    :param t: [H, W] array.
    :param lo: value mapped to black.
    :param hi: value mapped to white.
    :param destination: binary file-like object.
    """
    if np.ndim(t) != 2:
        raise ShapeError("PGM export needs a 2-D tensor, got shape {}".format(tuple(np.shape(t))))
    levels = pgm_levels(t, lo, hi)
    h, w = levels.shape
    if h == 0 or w == 0:
        raise ShapeError("PGM export needs a non-empty image, got shape {}".format(levels.shape))
    Image.fromarray(levels).save(destination, format="PPM")
