"""MGT1 tensor container: a flat, self-describing binary format for named arrays.

Layout (all integers little-endian):
    magic "MGT1" | u32 entry count
    per entry: u16 name length | name (UTF-8) | u8 dtype tag | u8 rank
               | rank * u64 dims | raw little-endian array data (C order)
    trailer:   u64 JSON length | JSON metadata (UTF-8)

dtype tags: 0 = float32, 1 = float64, 2 = int64.
"""

import json
import struct

import numpy as np

from .errors import DataError

MAGIC = b"MGT1"

_TAG_FOR_DTYPE = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i8"): 2,
}
_DTYPE_FOR_TAG = {tag: dt for dt, tag in _TAG_FOR_DTYPE.items()}


def write_tensors(path, arrays, metadata=None):
    """Write a name -> ndarray mapping plus a JSON metadata dict to `path`.

    Arrays must be float32, float64, or int64. Key order is preserved so
    identical inputs produce byte-identical files.
    """
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _TAG_FOR_DTYPE:
            raise ValueError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", _TAG_FOR_DTYPE[arr.dtype], arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        blob += arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    blob += struct.pack("<Q", len(meta))
    blob += meta
    with open(path, "wb") as fh:
        fh.write(blob)


def read_tensors(path):
    """Read an MGT1 file; returns (dict name -> ndarray, metadata dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not an MGT1 file (bad magic)")
    offset = 4
    try:
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            tag, rank = struct.unpack_from("<BB", blob, offset)
            offset += 2
            if tag not in _DTYPE_FOR_TAG:
                raise DataError(f"{path}: unknown dtype tag {tag} for entry {name!r}")
            shape = struct.unpack_from(f"<{rank}Q", blob, offset)
            offset += 8 * rank
            dtype = _DTYPE_FOR_TAG[tag]
            size = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(blob, dtype=dtype, count=size, offset=offset)
            arrays[name] = data.reshape(shape).copy()
            offset += size * dtype.itemsize
        (meta_len,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        metadata = json.loads(blob[offset : offset + meta_len].decode("utf-8"))
    except (struct.error, ValueError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: truncated or corrupt MGT1 file ({exc})") from exc
    return arrays, metadata
