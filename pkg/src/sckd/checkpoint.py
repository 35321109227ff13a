"""Self-describing binary checkpoints.

Layout: magic ``SCKDCKPT``, u8 version, u32 header length, JSON header
(kind, epoch, config hash, metadata, blob directory with dtype/shape),
then the raw little-endian blob payloads in directory order.  Arrays
round-trip bit-exactly.  Loading into a module fails fast when blob
names or shapes do not match the module's state dict.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, FrameFormatError

CKPT_MAGIC = b"SCKDCKPT"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str  # "teacher" or "student"
    epoch: int
    config_hash: str
    blobs: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    names = list(ckpt.blobs)
    directory = [
        {
            "name": name,
            "dtype": ckpt.blobs[name].dtype.str,
            "shape": list(ckpt.blobs[name].shape),
        }
        for name in names
    ]
    header = json.dumps(
        {
            "kind": ckpt.kind,
            "epoch": ckpt.epoch,
            "config_hash": ckpt.config_hash,
            "meta": ckpt.meta,
            "blobs": directory,
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<BI", CKPT_VERSION, len(header)))
        fh.write(header)
        for name in names:
            arr = ckpt.blobs[name]
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"),
                                                      copy=False).tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise FrameFormatError(
            f"{path}: bad checkpoint magic at byte 0, got {data[:8]!r}"
        )
    off = len(CKPT_MAGIC)
    version, header_len = struct.unpack_from("<BI", data, off)
    off += struct.calcsize("<BI")
    if version != CKPT_VERSION:
        raise FrameFormatError(
            f"{path}: unsupported checkpoint version {version} at byte 8"
        )
    header = json.loads(data[off : off + header_len])
    off += header_len
    blobs: dict[str, np.ndarray] = {}
    for entry in header["blobs"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        if off + nbytes > len(data):
            raise FrameFormatError(
                f"{path}: truncated at byte {off} while reading blob "
                f"'{entry['name']}' ({nbytes} bytes)"
            )
        arr = np.frombuffer(data[off : off + nbytes], dtype=dtype)
        blobs[entry["name"]] = arr.reshape(entry["shape"]).copy()
        off += nbytes
    if off != len(data):
        raise FrameFormatError(
            f"{path}: {len(data) - off} trailing bytes at byte {off}"
        )
    return Checkpoint(
        kind=header["kind"],
        epoch=header["epoch"],
        config_hash=header["config_hash"],
        blobs=blobs,
        meta=header["meta"],
    )


def module_to_blobs(module: torch.nn.Module, prefix: str = "model.") -> dict:
    return {
        prefix + name: tensor.detach().cpu().numpy().copy()
        for name, tensor in module.state_dict().items()
    }


def load_module_from_blobs(
    module: torch.nn.Module, blobs: dict, prefix: str = "model."
) -> None:
    state = module.state_dict()
    want = {prefix + name for name in state}
    have = {name for name in blobs if name.startswith(prefix)}
    if want != have:
        missing = sorted(want - have)
        extra = sorted(have - want)
        raise ConfigurationError(
            f"checkpoint/model mismatch: missing blobs {missing[:4]}, "
            f"unexpected blobs {extra[:4]}"
        )
    loaded = {}
    for name, tensor in state.items():
        arr = blobs[prefix + name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ConfigurationError(
                f"checkpoint blob '{prefix + name}' has shape {arr.shape}, "
                f"model expects {tuple(tensor.shape)}"
            )
        loaded[name] = torch.from_numpy(arr.copy()).to(tensor.dtype)
    module.load_state_dict(loaded)


def optimizer_to_blobs(
    optimizer: torch.optim.Optimizer, param_names: list[str]
) -> dict:
    """Flatten AdamW state into named blobs; parameter order must match
    the name list used at construction."""
    blobs: dict[str, np.ndarray] = {}
    params = [p for group in optimizer.param_groups for p in group["params"]]
    if len(params) != len(param_names):
        raise ConfigurationError("optimizer param count does not match names")
    for name, param in zip(param_names, params):
        state = optimizer.state.get(param, {})
        for key, value in state.items():
            if isinstance(value, torch.Tensor):
                blobs[f"optim.{name}.{key}"] = value.detach().cpu().numpy().copy()
            else:
                blobs[f"optim.{name}.{key}"] = np.asarray(value)
    return blobs


def torch_rng_blob() -> np.ndarray:
    return torch.get_rng_state().numpy().copy()
