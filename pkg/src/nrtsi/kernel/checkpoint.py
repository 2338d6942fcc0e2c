"""Binary checkpoint container.

Layout: a magic line, one JSON header line, then the raw little-endian
float64 payload of every stored array back to back. The header lists each
array's name, shape and offset, the Adam scalars, and free-form metadata.
Writing is deterministic so identical states give identical bytes.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .adam import AdamState
from .tensor import Tensor

MAGIC = b"NRTSI-CKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, Tensor], adam: AdamState | None = None,
                    meta: dict | None = None) -> None:
    arrays: list[tuple[str, np.ndarray]] = [(f"param/{k}", p.value) for k, p in params.items()]
    adam_head = None
    if adam is not None:
        adam_head = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                     "eps": adam.eps, "step": adam.step}
        arrays += [(f"adam.m/{k}", a) for k, a in adam.m.items()]
        arrays += [(f"adam.v/{k}", a) for k, a in adam.v.items()]
    entries, offset = [], 0
    for name, a in arrays:
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
    header = {"format_version": FORMAT_VERSION, "arrays": entries, "adam": adam_head,
              "meta": meta or {}}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, Tensor], AdamState | None, dict]:
    """Return ``(params, adam_state_or_None, meta)``."""
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from None
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    params: dict[str, Tensor] = {}
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        chunk = payload[e["offset"]:e["offset"] + size]
        if chunk.size != size:
            raise CheckpointError(f"{path}: truncated payload at {e['name']}")
        arr = chunk.astype(np.float64).reshape(e["shape"])
        kind, name = e["name"].split("/", 1)
        if kind == "param":
            params[name] = Tensor(arr, name=name, requires_grad=True)
        elif kind == "adam.m":
            m[name] = arr
        else:
            v[name] = arr
    adam = None
    if header["adam"] is not None:
        adam = AdamState(m=m, v=v, **header["adam"])
    return params, adam, header["meta"]
