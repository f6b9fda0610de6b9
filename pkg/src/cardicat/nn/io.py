"""Parameter file: magic, header length, JSON header, float32 payload.

Layout::

    b"CCPARAMS"                 8 bytes
    header length               uint32, little-endian
    header                      UTF-8 JSON: format_version, names, shapes, extra fields
    payload                     little-endian float32 arrays, in header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"CCPARAMS"
FORMAT_VERSION = 1


def write_params(path: str | Path, arrays: dict[str, np.ndarray], header: dict | None = None) -> None:
    head = dict(header or {})
    head["format_version"] = FORMAT_VERSION
    head["names"] = list(arrays)
    head["shapes"] = [list(np.shape(a)) for a in arrays.values()]
    blob = json.dumps(head, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_params(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter file")
    try:
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')!r}")
    offset = 12 + hlen
    arrays = {}
    for name, shape in zip(header["names"], header["shapes"]):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated payload at {name}")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).astype(np.float32)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return header, arrays
