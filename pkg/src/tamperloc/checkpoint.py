"""Single-file binary checkpoint: canonical JSON header + raw tensors.

Layout: magic, format version (u32), header length (u64), the header as
canonically serialized JSON (sorted keys, no whitespace), then each
entry's raw bytes little-endian in the order the header lists them.
Entries are sorted by name, so save(load(f)) reproduces f byte for
byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CheckpointData",
    "save_checkpoint",
    "load_checkpoint",
    "collect_entries",
    "apply_checkpoint",
]

MAGIC = b"TLOCCKPT"
FORMAT_VERSION = 1


@dataclass
class CheckpointData:
    model_config: dict
    epoch: int
    step: int = 0
    rng_state: dict | None = None
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def collect_entries(model, optimizer=None) -> dict[str, np.ndarray]:
    """Name every persistent array: param/<name>, buffer/<name>, and the
    optimizer moment buffers adamw/{m,v}/<name>."""
    arrays: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        key = f"param/{name}"
        if key in arrays:
            raise ValueError(f"duplicate parameter name {name!r}")
        arrays[key] = p.data
    for name, b in model.named_buffers():
        arrays[f"buffer/{name}"] = np.asarray(b)
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    return arrays


def _le_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<")
    return dt.str


def save_checkpoint(path: str | Path, data: CheckpointData) -> None:
    names = sorted(data.arrays)
    entries = []
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(data.arrays[name])
        dt = _le_dtype(arr)
        raw = arr.astype(dt, copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": dt,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)
    header = {
        "entries": entries,
        "epoch": data.epoch,
        "step": data.step,
        "model_config": data.model_config,
        "rng_state": data.rng_state,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> CheckpointData:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version = int.from_bytes(fh.read(4), "little")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode())
        body = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for e in header["entries"]:
        start, n = e["offset"], e["nbytes"]
        if start + n > len(body):
            raise ValueError(f"{path}: truncated payload for {e['name']!r}")
        arr = np.frombuffer(body[start : start + n], dtype=e["dtype"])
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return CheckpointData(
        model_config=header["model_config"],
        epoch=header["epoch"],
        step=header.get("step", 0),
        rng_state=header.get("rng_state"),
        arrays=arrays,
    )


def apply_checkpoint(model, data: CheckpointData, optimizer=None) -> None:
    """Load arrays back into a freshly built model (and optimizer)."""
    params = dict(model.named_parameters())
    modules = dict(model.named_modules())
    seen = set()
    for key, arr in data.arrays.items():
        kind, _, name = key.partition("/")
        if kind == "param":
            if name not in params:
                raise KeyError(f"checkpoint parameter {name!r} not in model")
            p = params[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model {p.shape}"
                )
            p.data = arr.astype(p.data.dtype, copy=True)
            seen.add(name)
        elif kind == "buffer":
            mod_path, _, leaf = name.rpartition(".")
            owner = modules.get(mod_path)
            if owner is None or leaf not in owner._buffers:
                raise KeyError(f"checkpoint buffer {name!r} not in model")
            buf = owner._buffers[leaf]
            if tuple(arr.shape) != buf.shape:
                raise ValueError(
                    f"shape mismatch for buffer {name!r}: "
                    f"checkpoint {arr.shape} vs model {buf.shape}"
                )
            np.copyto(buf, arr)
    missing = set(params) - seen
    if missing:
        raise KeyError(f"checkpoint missing parameters: {sorted(missing)[:4]}")
    if optimizer is not None:
        optimizer.load_state_arrays(data.arrays, t=data.step)
