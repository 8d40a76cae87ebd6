"""Self-describing binary bundle shared by checkpoints and wrapped models.

Layout: 8-byte magic, 8-byte little-endian header length, canonical JSON
header, then the raw little-endian float64 arrays in header order. The same
content always produces the same bytes, so bundles can be content-addressed.
"""

from __future__ import annotations

import json
import struct
from typing import TYPE_CHECKING, Any

import numpy as np

from furnace_control.lib.errors import FurnaceError

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

MAGIC = b"FCBUNDLE"
SCHEMA_VERSION = 1
_LENGTH = struct.Struct("<Q")


class BundleError(FurnaceError):
    """Raised when bytes are not a readable bundle."""


def pack(header: Mapping[str, Any], arrays: Mapping[str, NDArray[np.float64]]) -> bytes:
    layout = [{"name": name, "shape": list(np.shape(a))} for name, a in arrays.items()]
    full = {**header, "schema": SCHEMA_VERSION, "arrays": layout}
    text = json.dumps(full, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return MAGIC + _LENGTH.pack(len(text)) + text + body


def unpack(blob: bytes) -> tuple[dict[str, Any], dict[str, NDArray[np.float64]]]:
    if blob[: len(MAGIC)] != MAGIC:
        msg = "not a bundle (bad magic)"
        raise BundleError(msg)
    start = len(MAGIC) + _LENGTH.size
    if len(blob) < start:
        msg = "bundle truncated in its header"
        raise BundleError(msg)
    (length,) = _LENGTH.unpack_from(blob, len(MAGIC))
    try:
        header: dict[str, Any] = json.loads(blob[start : start + length])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        msg = f"bundle header is not valid JSON: {exc}"
        raise BundleError(msg) from exc
    if header.get("schema") != SCHEMA_VERSION:
        msg = f"unsupported bundle schema {header.get('schema')!r}"
        raise BundleError(msg)
    offset = start + length
    arrays: dict[str, NDArray[np.float64]] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + size > len(blob):
            msg = f"bundle truncated in array '{entry['name']}'"
            raise BundleError(msg)
        arrays[entry["name"]] = (
            np.frombuffer(blob, dtype="<f8", count=size // 8, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += size
    if offset != len(blob):
        msg = f"bundle has {len(blob) - offset} trailing bytes"
        raise BundleError(msg)
    return header, arrays
