"""Checkpoint container.

Layout::

    b"FERRETCK"                    8-byte magic
    uint64 little-endian           length of the manifest in bytes
    manifest                       UTF-8 JSON, keys sorted
    payload                        float32 little-endian tensors, manifest order

Tensor offsets in the manifest are relative to the start of the payload.
The writer is deterministic: identical state produces identical bytes.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"FERRETCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(parameters, buffers, seed, metadata):
    entries, chunks, offset = [], [], 0
    for kind, items in (("parameter", parameters), ("buffer", buffers)):
        for name, arr in items:
            payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            entries.append({"name": name, "kind": kind, "shape": list(np.shape(arr)),
                            "dtype": "float32", "offset": offset, "nbytes": len(payload)})
            chunks.append(payload)
            offset += len(payload)
    manifest = {"format": "ferretnet-checkpoint", "version": FORMAT_VERSION, "byte_order": "little",
                "seed": seed, "metadata": metadata or {}, "tensors": entries}
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def save_checkpoint(path, model, seed: int | None = None, metadata: dict | None = None) -> None:
    params = [(name, p.data) for name, p in model.named_parameters()]
    blob = _encode(params, list(model.named_buffers()), seed, metadata)
    Path(path).write_bytes(blob)


def read_checkpoint(path):
    """Return (manifest, state) where state maps tensor names to float32 arrays."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a ferretnet checkpoint")
    (n,) = struct.unpack("<Q", blob[8:16])
    try:
        manifest = json.loads(blob[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest") from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
    payload = memoryview(blob)[16 + n:]
    state = OrderedDict()
    for t in manifest["tensors"]:
        end = t["offset"] + t["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: truncated payload for {t['name']}")
        arr = np.frombuffer(payload[t["offset"]:end], dtype="<f4").reshape(t["shape"])
        state[t["name"]] = arr.astype(np.float32)
    return manifest, state


def load_checkpoint(path, model):
    """Load tensors from `path` into `model`; returns the manifest."""
    manifest, state = read_checkpoint(path)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return manifest
