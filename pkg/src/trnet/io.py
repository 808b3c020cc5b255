"""DTF1 binary tensor files and JSON manifests.

Layout (all little-endian)::

    b"DTF1" | u32 order | order x u64 dims | prod(dims) x f64, row-major
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DTF1"


class DTFError(ValueError):
    pass


def dumps(x) -> bytes:
    x = np.array(x, dtype="<f8", order="C")
    header = MAGIC + struct.pack("<I", x.ndim) + struct.pack(f"<{x.ndim}Q", *x.shape)
    return header + x.tobytes(order="C")


def loads(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise DTFError("not a DTF1 file (bad magic)")
    (order,) = struct.unpack_from("<I", buf, 4)
    head = 8 + 8 * order
    if len(buf) < head:
        raise DTFError("truncated DTF1 header")
    dims = struct.unpack_from(f"<{order}Q", buf, 8)
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) != head + 8 * count:
        raise DTFError(
            f"DTF1 payload has {len(buf) - head} bytes, expected {8 * count} for shape {dims}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=head)
    return data.astype(np.float64).reshape(dims)


def save(path, x) -> None:
    Path(path).write_bytes(dumps(x))


def load(path) -> np.ndarray:
    return loads(Path(path).read_bytes())


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def save_bundle(directory, parts: dict, meta: dict | None = None) -> None:
    """Write each array in ``parts`` as ``<name>.dtf`` plus a ``manifest.json``.

    ``parts`` maps a part name to ``(role, array)``.
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    for name, (role, arr) in parts.items():
        fname = f"{name}.dtf"
        save(Path(directory) / fname, arr)
        entries.append({"name": name, "role": role, "file": fname, "shape": list(np.shape(arr))})
    write_json(Path(directory) / "manifest.json", {"format": "DTF1", "meta": meta or {}, "parts": entries})


def load_bundle(directory):
    """Returns ``(meta, {name: (role, array)})``."""
    with open(Path(directory) / "manifest.json") as f:
        manifest = json.load(f)
    parts = {}
    for e in manifest["parts"]:
        parts[e["name"]] = (e["role"], load(Path(directory) / e["file"]))
    return manifest.get("meta", {}), parts
