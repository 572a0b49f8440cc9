"""Self-describing, byte-deterministic checkpoint container.

A checkpoint is a single file: an 8-byte magic, a little-endian uint64
header length, a canonical JSON header (sorted keys), then the raw array
buffers concatenated in header order. Writing the same payload twice
produces byte-identical files, which backs the save->load->save
round-trip contract; torch.save is avoided because its zip container is
not byte-stable.

Header layout::

    {
      "format_version": 1,
      "meta": {...},                      # config dict, step counters, ...
      "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]
    }

Array names are namespaced by convention: ``model/<param>``,
``opt/<...>``, ``rng/<stream>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"PVDCKPT\x01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """In-memory view of a checkpoint file."""

    meta: Dict[str, Any]
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def format_version(self) -> int:
        return int(self.meta.get("format_version", FORMAT_VERSION))

    def model_state(self, prefix: str = "model/") -> Dict[str, torch.Tensor]:
        """Extract tensors under `prefix` as a torch state dict."""
        out = {}
        for name, arr in self.arrays.items():
            if name.startswith(prefix):
                out[name[len(prefix):]] = torch.from_numpy(arr.copy())
        return out


def save_checkpoint(path: str | Path, meta: Mapping[str, Any],
                    arrays: Mapping[str, np.ndarray | torch.Tensor]) -> Path:
    """Write a checkpoint; identical payloads yield identical bytes."""
    path = Path(path)
    entries = []
    buffers = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        if isinstance(arr, torch.Tensor):
            arr = arr.detach().cpu().numpy()
        arr = np.asarray(arr)
        shape = list(arr.shape)           # before ascontiguousarray promotes 0-d
        arr = np.ascontiguousarray(arr)
        # canonical little-endian byte order
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        buf = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": shape,
            "offset": offset,
            "nbytes": len(buf),
        })
        buffers.append(buf)
        offset += len(buf)
    header = {
        "format_version": FORMAT_VERSION,
        "meta": dict(meta),
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for buf in buffers:
            f.write(buf)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file: {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"corrupt checkpoint header in {path}: {e}") from e
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format version {version!r} in {path} "
                f"(supported: {FORMAT_VERSION})")
        payload = f.read()
    arrays = {}
    for ent in header["arrays"]:
        start, n = ent["offset"], ent["nbytes"]
        raw = payload[start:start + n]
        if len(raw) != n:
            raise CheckpointError(f"truncated checkpoint payload in {path}")
        arr = np.frombuffer(raw, dtype=np.dtype(ent["dtype"]))
        arrays[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return Checkpoint(meta=header["meta"], arrays=arrays)


def state_dict_arrays(module: torch.nn.Module, prefix: str = "model/") -> Dict[str, np.ndarray]:
    """Flatten a module state dict into named numpy arrays."""
    out = {}
    for key, tensor in module.state_dict().items():
        out[prefix + key] = tensor.detach().cpu().numpy()
    return out


def load_state_dict_arrays(module: torch.nn.Module, ckpt: Checkpoint,
                           prefix: str = "model/") -> None:
    state = ckpt.model_state(prefix)
    missing = set(module.state_dict()) - set(state)
    extra = set(state) - set(module.state_dict())
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match model under '{prefix}': "
            f"missing={sorted(missing)[:4]} extra={sorted(extra)[:4]}")
    try:
        module.load_state_dict({k: v for k, v in state.items()})
    except RuntimeError as e:
        raise CheckpointError(f"checkpoint incompatible with model: {e}") from e


def optimizer_arrays(opt: torch.optim.Optimizer, prefix: str = "opt/") -> tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Split an optimizer state dict into arrays plus a JSON-safe skeleton."""
    sd = opt.state_dict()
    arrays: Dict[str, np.ndarray] = {}
    skeleton: Dict[str, Any] = {"param_groups": sd["param_groups"], "state": {}}
    for pid, st in sd["state"].items():
        entry = {}
        for key, val in st.items():
            if isinstance(val, torch.Tensor):
                arrays[f"{prefix}{pid}/{key}"] = val.detach().cpu().numpy()
                entry[key] = "__tensor__"
            else:
                entry[key] = val
        skeleton["state"][str(pid)] = entry
    return arrays, skeleton


def restore_optimizer(opt: torch.optim.Optimizer, ckpt: Checkpoint,
                      skeleton: Mapping[str, Any], prefix: str = "opt/") -> None:
    state: Dict[int, Dict[str, Any]] = {}
    for pid_str, entry in skeleton["state"].items():
        pid = int(pid_str)
        st = {}
        for key, val in entry.items():
            if val == "__tensor__":
                st[key] = torch.from_numpy(ckpt.arrays[f"{prefix}{pid}/{key}"].copy())
            else:
                st[key] = val
        state[pid] = st
    opt.load_state_dict({"param_groups": skeleton["param_groups"], "state": state})
