"""Checkpoint container: a JSON header followed by raw little-endian arrays.

Layout::

    b"WUDCKPT1" | uint64 LE header length | header (UTF-8 JSON) | payload

The header holds free-form ``meta`` plus an ordered list of tensor entries
(name, dtype, shape, offset, nbytes).  Key order is sorted and tensor order
preserved, so a save -> load -> save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, ShapeError

MAGIC = b"WUDCKPT1"
_DTYPES = {"<f4": torch.float32, "<f8": torch.float64, "|u1": torch.uint8, "<i8": torch.int64}


def save(path, tensors: dict, meta: dict) -> None:
    entries, chunks, offset = [], [], 0
    for name, t in tensors.items():
        arr = t.detach().cpu().contiguous().numpy()
        if arr.dtype.str not in _DTYPES:
            arr = arr.astype("<f4")
        data = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for c in chunks:
            f.write(c)


def load(path):
    """Return ``(tensors, meta)`` with tensors in file order."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    base = 16 + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(raw[start:start + e["nbytes"]], dtype=e["dtype"]).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.copy())
    return tensors, header["meta"]


def load_into(module: torch.nn.Module, tensors: dict, prefix: str = "") -> None:
    """Copy ``tensors`` into ``module``'s parameters, validating names and shapes."""
    own = dict(module.named_parameters())
    for name, p in own.items():
        key = prefix + name
        if key not in tensors:
            raise ShapeError(f"checkpoint is missing {key}")
        if tuple(tensors[key].shape) != tuple(p.shape):
            raise ShapeError(f"{key}: checkpoint shape {tuple(tensors[key].shape)} != model shape {tuple(p.shape)}")
    with torch.no_grad():
        for name, p in own.items():
            p.copy_(tensors[prefix + name])


def module_tensors(module: torch.nn.Module, prefix: str = "") -> dict:
    return {prefix + name: p for name, p in module.named_parameters()}


def save_model(path, model, kind: str, config: dict) -> None:
    save(path, module_tensors(model), {"kind": kind, "config": config})
