"""Tests for furnace_control.lib.bundle."""

from __future__ import annotations

import struct
from typing import TYPE_CHECKING

import numpy as np
import pytest

from furnace_control.lib.bundle import MAGIC, BundleError, pack, unpack

if TYPE_CHECKING:
    from numpy.typing import NDArray


def _arrays() -> dict[str, NDArray[np.float64]]:
    return {"W": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.array([0.5, -1.25])}


def test_pack_is_deterministic() -> None:
    assert pack({"kind": "x", "zone": 2}, _arrays()) == pack({"zone": 2, "kind": "x"}, _arrays())
    assert pack({"kind": "x"}, _arrays()).startswith(MAGIC)


def test_unpack_restores_header_and_arrays() -> None:
    header, arrays = unpack(pack({"kind": "x", "meta": {"a": [1, 2]}}, _arrays()))
    assert header["kind"] == "x"
    assert header["meta"] == {"a": [1, 2]}
    assert list(arrays) == ["W", "b"]
    np.testing.assert_array_equal(arrays["W"], _arrays()["W"])
    assert arrays["W"].flags.writeable


def test_bad_magic() -> None:
    with pytest.raises(BundleError, match="bad magic"):
        unpack(b"NOTABUNDLE")


def test_truncated_header() -> None:
    with pytest.raises(BundleError, match="truncated in its header"):
        unpack(MAGIC + b"\x01")


def test_truncated_array() -> None:
    blob = pack({"kind": "x"}, _arrays())
    with pytest.raises(BundleError, match="truncated in array 'b'"):
        unpack(blob[:-8])


def test_trailing_bytes() -> None:
    with pytest.raises(BundleError, match="trailing"):
        unpack(pack({"kind": "x"}, _arrays()) + b"\x00")


def test_garbage_header() -> None:
    blob = MAGIC + struct.pack("<Q", 3) + b"{{{"
    with pytest.raises(BundleError, match="not valid JSON"):
        unpack(blob)


def test_unknown_schema() -> None:
    text = b'{"arrays":[],"schema":99}'
    with pytest.raises(BundleError, match="unsupported bundle schema 99"):
        unpack(MAGIC + struct.pack("<Q", len(text)) + text)
