"""Single-file array artifacts: one JSON header line, then raw float64.

The header records array names, shapes, and any model metadata; payloads
are little-endian float64 in C order, concatenated in header order.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_MAGIC = "facetsuggest-arrays/1"


def write_array_artifact(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    header = {
        "magic": _MAGIC,
        "meta": meta,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays.items()],
    }
    with Path(path).open("wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_array_artifact(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with Path(path).open("rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: malformed artifact header ({exc})") from exc
        if header.get("magic") != _MAGIC:
            raise ValueError(f"{path}: not an array artifact")
        payload = fh.read()
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated payload for array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes after declared arrays")
    return header["meta"], arrays
