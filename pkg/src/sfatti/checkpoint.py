"""Lossless JSON checkpoints for float models.

Arrays are stored as base64 of their raw little-endian bytes, so a
save/load round trip is bit-exact and the file itself is deterministic.
"""
from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .network import LayerSpec, LIFParams, NetworkModel
from .provenance import json_default, canonical_json, sha256_text

FORMAT = "sfatti-checkpoint/1"


class CheckpointError(ValueError):
    pass


def _pack(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    le = a.astype(a.dtype.newbyteorder("<"), copy=False)
    return {"dtype": le.dtype.str, "shape": list(a.shape),
            "data": base64.b64encode(le.tobytes()).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    buf = base64.b64decode(d["data"])
    return np.frombuffer(buf, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).astype(
        np.dtype(d["dtype"]).newbyteorder("="))


def model_to_dict(model: NetworkModel) -> dict:
    body = {
        "format": FORMAT,
        "arch": model.arch,
        "layers": [{"lif": asdict(l.lif), "weights": _pack(l.weights)} for l in model.layers],
        "meta": model.meta,
    }
    body["content_hash"] = content_hash(body)
    body["tool_version"] = __version__
    return body


def content_hash(body: dict) -> str:
    core = {k: body[k] for k in ("format", "arch", "layers", "meta")}
    return sha256_text(canonical_json(core))[:16]


def model_from_dict(body: dict, verify: bool = True) -> NetworkModel:
    if body.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {body.get('format')!r}")
    if verify and content_hash(body) != body.get("content_hash"):
        raise CheckpointError("checkpoint content hash mismatch")
    layers = [LayerSpec(_unpack(l["weights"]), LIFParams(**l["lif"])) for l in body["layers"]]
    return NetworkModel(layers, dict(body.get("meta", {})))


def save_model(model: NetworkModel, path) -> str:
    body = model_to_dict(model)
    Path(path).write_text(json.dumps(body, sort_keys=True, indent=1, default=json_default) + "\n")
    return body["content_hash"]


def load_model(path, verify: bool = True) -> NetworkModel:
    try:
        body = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not a checkpoint ({e})") from None
    return model_from_dict(body, verify)


def verify_checkpoint(path) -> bool:
    body = json.loads(Path(path).read_text())
    return content_hash(body) == body.get("content_hash")
