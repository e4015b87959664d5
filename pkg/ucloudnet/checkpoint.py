# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Versioned checkpoint files.

Layout: 8 magic bytes, format version (u32 little-endian), header length (u64
little-endian), a JSON manifest with sorted keys, then the raw little-endian
tensor payload in manifest order. The manifest lists name, shape, dtype, offset
and byte length of every tensor together with the run config, the epoch count,
the iteration count and the Adam step.
"""

import json
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CheckpointError
from .layers import Layer
from .model import UCloudNet, build
from .optimizer import AdamState
from .runConfig import RunConfig
from .tensor import dtype_mode

MAGIC = b"UCNCKPT\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class Checkpoint():
    def __init__(self, model:UCloudNet, state:AdamState, config:RunConfig, epoch:int, iteration:int):
        self.model = model
        self.state = state
        self.config = config
        self.epoch = epoch # completed epochs
        self.iteration = iteration # completed optimizer steps


def _named_arrays(model:Layer, state:Optional[AdamState]) -> List[Tuple[str, np.ndarray]]:
    res = [("param/" + n, t.data) for n, t in model.named_parameters()]
    res += [("buffer/" + n, t.data) for n, t in model.named_buffers()]
    if state is not None:
        res += [("adam.m/" + n, a) for n, a in state.m.items()]
        res += [("adam.v/" + n, a) for n, a in state.v.items()]
    return res


def save_checkpoint(model:UCloudNet, state:AdamState, config:RunConfig, path:Path, epoch:int=0, iteration:int=0) -> Path:
    path = Path(path)
    tensors, chunks, offset = [], [], 0
    for name, arr in _named_arrays(model, state):
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str,
            "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config.run_config().to_dict(),
        "epoch": epoch,
        "iteration": iteration,
        "adam_t": state.t if state is not None else 0,
        "tensors": tensors,
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        for c in chunks:
            f.write(c)
    # the previous file stays intact until the new one is complete
    os.replace(tmp, path)
    return path


def read_manifest(path:Path) -> Tuple[Dict, bytes]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path} is truncated (no header)")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path} is not a ucloudnet checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    start = _PREFIX.size + header_len
    if len(blob) < start:
        raise CheckpointError(f"{path} is truncated inside the manifest")
    try:
        manifest = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"{path} has a corrupt manifest: {e}") from e

    payload = blob[start:]
    expected = sum(t["nbytes"] for t in manifest["tensors"])
    if len(payload) < expected:
        raise CheckpointError(f"{path} is truncated: payload has {len(payload)} of {expected} bytes")
    return manifest, payload


def _restore(manifest:Dict, payload:bytes, targets:List[Tuple[str, np.ndarray]], path:Path):
    entries = manifest["tensors"]
    for i, (name, arr) in enumerate(targets):
        if i >= len(entries):
            raise CheckpointError(f"{path} has no tensor {name}")
        e = entries[i]
        if e["name"] != name:
            raise CheckpointError(f"{path}: tensor #{i} is {e['name']}, expected {name}")
        if tuple(e["shape"]) != arr.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {tuple(e['shape'])}, model expects {arr.shape}")
        if np.dtype(e["dtype"]) != arr.dtype.newbyteorder("<"):
            raise CheckpointError(f"{path}: tensor {name} is {e['dtype']}, model uses {arr.dtype.str}")
    if len(entries) != len(targets):
        raise CheckpointError(f"{path}: unexpected tensor {entries[len(targets)]['name']}")

    for e, (_, arr) in zip(entries, targets):
        data = np.frombuffer(payload, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
            offset=e["offset"])
        arr[...] = data.reshape(e["shape"])


def load_checkpoint(path:Path, model:Optional[UCloudNet]=None) -> Checkpoint:
    """Restore model, Adam state and run config.

    Without `model` a fresh one is built from the stored config; with one, every
    tensor name and shape must match it.
    """
    path = Path(path)
    manifest, payload = read_manifest(path)
    try:
        config = RunConfig.from_dict(manifest["config"])
    except Exception as e:
        raise CheckpointError(f"{path} has an invalid run config: {e}") from e

    if model is None:
        with dtype_mode(config.dtype):
            model = build(config.k, config.seed)

    params = list(model.named_parameters())
    state = AdamState(params)
    state.t = int(manifest["adam_t"])
    _restore(manifest, payload, _named_arrays(model, state), path)
    return Checkpoint(model, state, config, int(manifest["epoch"]), int(manifest["iteration"]))
