"""Flat binary checkpoints with a JSON header.

Layout: 8-byte magic, 4-byte little-endian header length, UTF-8 JSON
header, then the raw array payload. The header records the config
mapping plus, per array, name/dtype/shape/offset into the payload.
Arrays round-trip bit-exactly: everything is stored C-contiguous in
little-endian byte order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"MTCKPT01"


def save_checkpoint(path: str | Path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": arr.nbytes,
            }
        )
        payload.extend(arr.tobytes())
    header = json.dumps({"config": config, "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    header_len = int.from_bytes(raw[len(MAGIC) : len(MAGIC) + 4], "little")
    header_start = len(MAGIC) + 4
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    payload = raw[header_start + header_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload[start : start + nbytes], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["config"], arrays
