"""Single-file container: a JSON manifest followed by raw little-endian arrays.

Layout:  8-byte magic | uint64-LE manifest length | manifest JSON (UTF-8) |
concatenated float32-LE array data, row-major. Datasets and checkpoints share
this format and differ only in their manifest contents.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"TWDC0001"


def write_container(path: str | Path, manifest: dict, arrays: list[np.ndarray]) -> None:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_container(path: str | Path) -> tuple[dict, memoryview]:
    """Return (manifest, raw data bytes). Callers slice the data per manifest."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: not a tweendiff container")
    (manifest_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_end = len(MAGIC) + 8 + manifest_len
    if header_end > len(raw):
        raise DataFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[len(MAGIC) + 8 : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: unreadable manifest: {exc}") from exc
    return manifest, memoryview(raw)[header_end:]


def split_arrays(data: memoryview, shapes: list[tuple[int, ...]], path: str | Path) -> list[np.ndarray]:
    """Slice the raw data section into float32 arrays of the given shapes."""
    counts = [int(np.prod(s)) for s in shapes]
    if len(data) != 4 * sum(counts):
        raise DataFormatError(
            f"{path}: data section holds {len(data)} bytes, manifest expects {4 * sum(counts)}"
        )
    out, offset = [], 0
    for shape, count in zip(shapes, counts):
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        out.append(arr.copy())
        offset += 4 * count
    return out
