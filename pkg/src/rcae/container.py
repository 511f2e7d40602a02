"""Self-describing binary container used for checkpoints and stats snapshots.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"RCAEBIN1"
    offset 8   8 bytes   uint64 header length L
    offset 16  L bytes   UTF-8 JSON header (sorted keys, no whitespace)
    offset 16+L          array payloads, concatenated in header order

The header is ``{"kind": str, "meta": {...}, "arrays": [{"name", "dtype",
"shape"}, ...]}``. Every payload is a row-major little-endian array whose
dtype is ``<f8`` or ``<i8``. Complex arrays are split on write into
``<name>.real`` and ``<name>.imag`` float64 payloads and re-joined on read.
Nothing time- or host-dependent is written, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"RCAEBIN1"


def save(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries, payloads = [], []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            parts = [(name + ".real", arr.real), (name + ".imag", arr.imag)]
        else:
            parts = [(name, arr)]
        for pname, part in parts:
            dtype = "<i8" if np.issubdtype(part.dtype, np.integer) else "<f8"
            part = np.ascontiguousarray(part, dtype=dtype)
            entries.append({"name": pname, "dtype": dtype, "shape": list(part.shape)})
            payloads.append(part.tobytes(order="C"))
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for p in payloads:
            fh.write(p)


def load(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, returning ``(meta, arrays)`` with complex arrays re-joined."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if raw[:8] != MAGIC or len(raw) < 16:
        raise CheckpointError(f"{path} is not an rcae container")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header in {path}") from exc
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"{path} holds {header.get('kind')!r}, expected {kind!r}")
    offset = 16 + hlen
    parts = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated")
        parts[entry["name"]] = np.frombuffer(raw, dtype, int(np.prod(shape)), offset).reshape(shape).copy()
        offset += nbytes
    arrays = {}
    for name, arr in parts.items():
        if name.endswith(".imag"):
            continue
        if name.endswith(".real") and name[:-5] + ".imag" in parts:
            base = name[:-5]
            joined = np.empty(arr.shape, dtype=np.complex128)
            joined.real = arr
            joined.imag = parts[base + ".imag"]
            arrays[base] = joined
        else:
            arrays[name] = arr
    return header["meta"], arrays
