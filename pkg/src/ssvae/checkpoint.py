"""Versioned binary checkpoints.

Layout: 8-byte magic ``SSVAECKP``, u32 version, u32 header length, a UTF-8
JSON header (model spec and the ordered list of parameter names, shapes and
dtypes), then each parameter's raw little-endian bytes in header order.
No timestamps are stored, so equal models give byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelSpec, SsVaeModel
from .tensor import Tensor

MAGIC = b"SSVAECKP"
VERSION = 1


def _spec_to_json(spec: ModelSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["encoder_widths"] = list(spec.encoder_widths)
    d["decoder_widths"] = list(spec.decoder_widths)
    d["num_classes"] = spec.num_classes if isinstance(spec.num_classes, int) else list(spec.num_classes)
    return d


def _spec_from_json(d: dict) -> ModelSpec:
    d = dict(d)
    if isinstance(d.get("num_classes"), list):
        d["num_classes"] = tuple(d["num_classes"])
    return ModelSpec(**d)


def save_checkpoint(model: SsVaeModel, path) -> None:
    header = {
        "spec": _spec_to_json(model.spec),
        "params": [
            {"name": k, "shape": list(p.shape), "dtype": np.dtype(p.dtype).str.lstrip("<>|=")}
            for k, p in model.params.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
            for p in model.params.values():
                f.write(np.ascontiguousarray(p.data, dtype=p.dtype.newbyteorder("<")).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, into: ModelSpec | None = None, rng: np.random.Generator | int = 0) -> SsVaeModel:
    """Load a model; with ``into`` of another variant, transfer the shared weights.

    Raises :class:`CheckpointError` before building anything if the file is
    malformed or its shapes disagree with the stored spec.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<II", raw[off : off + 8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}, expected {VERSION}")
    off += 8
    try:
        header = json.loads(raw[off : off + hlen].decode())
        spec = _spec_from_json(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    off += hlen

    expected = spec.param_shapes()
    found = [(p["name"], tuple(p["shape"])) for p in header["params"]]
    if found != expected:
        raise CheckpointError(f"{path}: parameter layout mismatch; expected {expected}, found {found}")

    params = {}
    for entry in header["params"]:
        dtype = np.dtype("<" + entry["dtype"]) if entry["dtype"][0] in "fi" else np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if off + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated data for {entry['name']}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).reshape(entry["shape"])
        params[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        off += nbytes
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")

    model = SsVaeModel(spec, {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()})
    if into is None or into == spec:
        return model
    if dataclasses.replace(into, variant=spec.variant) != spec:
        raise CheckpointError(f"{path}: stored spec {spec} is not a variant of requested {into}")
    return model.derive(into.variant, rng=rng)
