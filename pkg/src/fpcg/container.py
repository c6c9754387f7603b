"""Versioned binary container for model persistence.

Layout (documented here and in the README, covered by a roundtrip test):

    bytes 0..7    magic ``b"FPCGMDL\\n"``
    bytes 8..11   header length ``H`` as uint32 little-endian
    bytes 12..12+H  UTF-8 JSON header
    remainder     array payloads, concatenated in header order

The JSON header has the form::

    {
      "format_version": 1,
      "kind": "<free-form model kind tag>",
      "meta": { ... JSON-serializable model metadata ... },
      "arrays": [{"name": str, "shape": [int, ...], "dtype": "<f8"|"<i8"}, ...]
    }

Payloads are little-endian, C-order, and either float64 (``"<f8"``) or
int64 (``"<i8"``). Nothing else is permitted, which keeps the format
self-describing and trivially portable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"FPCGMDL\n"
FORMAT_VERSION = 1
_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def save_container(path: str | Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``arrays`` plus JSON ``meta`` to ``path`` in the container format.

    Float arrays are stored as float64 and integer arrays as int64; the
    insertion order of ``arrays`` is preserved.
    """
    entries = []
    payloads = []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        if np.issubdtype(a.dtype, np.integer) or a.dtype == bool:
            a = a.astype("<i8")
            tag = "<i8"
        else:
            a = a.astype("<f8")
            tag = "<f8"
        entries.append({"name": name, "shape": list(a.shape), "dtype": tag})
        payloads.append(np.ascontiguousarray(a).tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def load_container(path: str | Path, expect_kind: str | None = None) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Read a container; returns ``(kind, meta, arrays)``.

    Raises :class:`ContainerFormatError` on bad magic, version, truncation,
    or (when ``expect_kind`` is given) a kind mismatch.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError(f"{path}: not an fpcg model container")
    (hlen,) = struct.unpack("<I", raw[len(MAGIC): len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(raw[start: start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerFormatError(
            f"{path}: unsupported format_version {header.get('format_version')!r}"
        )
    kind = header.get("kind", "")
    if expect_kind is not None and kind != expect_kind:
        raise ContainerFormatError(f"{path}: kind {kind!r}, expected {expect_kind!r}")
    arrays: dict[str, np.ndarray] = {}
    offset = start + hlen
    for entry in header["arrays"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise ContainerFormatError(f"{path}: disallowed dtype {entry['dtype']!r}")
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        chunk = raw[offset: offset + nbytes]
        if len(chunk) != nbytes:
            raise ContainerFormatError(f"{path}: truncated payload for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return kind, header.get("meta", {}), arrays
