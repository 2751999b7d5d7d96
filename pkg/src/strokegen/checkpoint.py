"""Deterministic binary checkpoint container.

Layout:

    magic line  b"STROKEGEN-CKPT v1\\n"
    8 bytes     big-endian header length
    header      ASCII JSON, sorted keys: kind, config, extra, tensor
                manifest (name/dtype/shape/offset), payload sha256
    payload     raw little-endian C-order tensor bytes, concatenated in
                sorted-name order

The same state always serializes to the same bytes, and the hash catches
truncation or bit rot on load. Tensors come back as numpy arrays.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"STROKEGEN-CKPT v1\n"

_ALLOWED_DTYPES = {"float32", "float64", "int64", "uint8", "int32"}


def _as_array(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    arr = np.asarray(value)
    if arr.ndim > 0:
        # ascontiguousarray would promote 0-d arrays to 1-d, losing the
        # shape of scalar tensors such as Adam's step counter
        arr = np.ascontiguousarray(arr)
    if arr.dtype.name not in _ALLOWED_DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr


@dataclass
class Checkpoint:
    kind: str
    config: dict
    extra: dict
    tensors: dict[str, np.ndarray]


def save_checkpoint(path, kind: str, tensors: dict, config: dict | None = None,
                    extra: dict | None = None) -> None:
    arrays = {name: _as_array(t) for name, t in tensors.items()}
    manifest = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        raw = arr.tobytes()
        manifest.append({"name": name, "dtype": arr.dtype.name,
                         "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "kind": kind,
        "config": config or {},
        "extra": extra or {},
        "manifest": manifest,
        "payload_bytes": offset,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "big"))
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointError(f"{path}: truncated header length")
    hlen = int.from_bytes(blob[pos:pos + 8], "big")
    pos += 8
    try:
        header = json.loads(blob[pos:pos + hlen].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    pos += hlen
    payload = blob[pos:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, "
            f"header says {header['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: payload hash mismatch")
    tensors = {}
    for entry in header["manifest"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(header["kind"], header["config"], header["extra"], tensors)


# ---------------------------------------------------------------------------
# torch module / optimizer / RNG state packing

def pack_module(prefix: str, module: torch.nn.Module, tensors: dict) -> None:
    for name, value in module.state_dict().items():
        tensors[f"{prefix}.{name}"] = value


def unpack_module(prefix: str, module: torch.nn.Module,
                  tensors: dict[str, np.ndarray]) -> None:
    state = {}
    skip = len(prefix) + 1
    for name, arr in tensors.items():
        if name.startswith(prefix + "."):
            state[name[skip:]] = torch.from_numpy(arr.copy())
    missing, unexpected = module.load_state_dict(state, strict=False)
    # buffers registered non-persistent never round-trip; anything else is a bug
    if unexpected:
        raise CheckpointError(f"unexpected tensors for {prefix}: {unexpected}")
    if missing:
        raise CheckpointError(f"missing tensors for {prefix}: {missing}")


def pack_optimizer(opt: torch.optim.Optimizer,
                   tensors: dict) -> dict:
    sd = opt.state_dict()
    scalars: dict[str, dict] = {}
    shapes: dict[str, list[str]] = {}
    for pid, state in sd["state"].items():
        key = str(pid)
        scalars[key] = {}
        shapes[key] = []
        for name, value in state.items():
            if torch.is_tensor(value):
                tensors[f"opt.{pid}.{name}"] = value
                shapes[key].append(name)
            else:
                scalars[key][name] = value
    return {"param_groups": sd["param_groups"], "scalars": scalars,
            "tensor_keys": shapes}


def unpack_optimizer(opt: torch.optim.Optimizer, tensors: dict[str, np.ndarray],
                     meta: dict) -> None:
    state = {}
    for key, names in meta["tensor_keys"].items():
        pid = int(key)
        entry = dict(meta["scalars"].get(key, {}))
        for name in names:
            entry[name] = torch.from_numpy(tensors[f"opt.{pid}.{name}"].copy())
        state[pid] = entry
    opt.load_state_dict({"state": state, "param_groups": meta["param_groups"]})


def pack_rng(tensors: dict, np_rng: np.random.Generator | None = None,
             torch_gen: torch.Generator | None = None) -> dict:
    tensors["rng.torch_global"] = torch.get_rng_state()
    if torch_gen is not None:
        tensors["rng.torch_gen"] = torch_gen.get_state()
    extra = {}
    if np_rng is not None:
        extra["numpy_state"] = np_rng.bit_generator.state
    return extra


def unpack_rng(tensors: dict[str, np.ndarray], extra: dict,
               np_rng: np.random.Generator | None = None,
               torch_gen: torch.Generator | None = None) -> None:
    torch.set_rng_state(torch.from_numpy(tensors["rng.torch_global"].copy()))
    if torch_gen is not None and "rng.torch_gen" in tensors:
        torch_gen.set_state(torch.from_numpy(tensors["rng.torch_gen"].copy()))
    if np_rng is not None and "numpy_state" in extra:
        state = extra["numpy_state"]
        # JSON round-trips the PCG64 state ints losslessly (arbitrary precision)
        np_rng.bit_generator.state = state
    return None
