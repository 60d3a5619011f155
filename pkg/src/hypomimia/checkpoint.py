"""HEM1 checkpoint container.

Layout::

    b"HEM1" | manifest length (u32 LE) | manifest (UTF-8 JSON) | float64 LE payload

The manifest is ``{"meta": {...}, "tensors": [{"name": ..., "shape": [...]}, ...]}``
and the payload holds each tensor's values in manifest order, row-major.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from pathlib import Path

import numpy as np

from .classifier import RecurrentClassifier, RnnConfig
from .errors import FormatError
from .expression_model import ExpressionModel, ExpressionModelConfig

MAGIC = b"HEM1"
_LEN = struct.Struct("<I")


def encode_checkpoint(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    manifest = {
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()],
    }
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(np.asarray(v, dtype="<f8").tobytes(order="C") for v in tensors.values())
    return MAGIC + _LEN.pack(len(head)) + head + payload


def decode_checkpoint(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    if len(buf) < 8:
        raise FormatError("truncated manifest length", len(buf))
    (n,) = _LEN.unpack_from(buf, 4)
    if len(buf) < 8 + n:
        raise FormatError(f"truncated manifest: {n} bytes promised", len(buf))
    try:
        manifest = json.loads(buf[8:8 + n].decode("utf-8"))
        specs = [(t["name"], tuple(int(s) for s in t["shape"])) for t in manifest["tensors"]]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable manifest ({exc})", 8) from None
    offset = 8 + n
    tensors = {}
    for name, shape in specs:
        count = math.prod(shape)
        end = offset + 8 * count
        if end > len(buf):
            raise FormatError(f"truncated payload in tensor {name!r}", len(buf))
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(buf):
        raise FormatError("trailing bytes after payload", offset)
    return manifest.get("meta", {}), tensors


def _config_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def save_expression_model(path, model: ExpressionModel, extra: dict | None = None) -> None:
    meta = {"kind": "expression_model", "config": _config_dict(model.config), **(extra or {})}
    Path(path).write_bytes(encode_checkpoint(model.state_dict(), meta))


def load_expression_model(path) -> ExpressionModel:
    meta, tensors = decode_checkpoint(Path(path).read_bytes())
    if meta.get("kind") != "expression_model":
        raise FormatError(f"{path} does not hold an expression model (kind={meta.get('kind')!r})")
    cfg = dict(meta["config"])
    cfg["descriptions"] = tuple(cfg["descriptions"])
    cfg["vocab"] = tuple(cfg["vocab"])
    model = ExpressionModel(ExpressionModelConfig(**cfg))
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return model


def save_classifier(path, model: RecurrentClassifier, mode: str, extra: dict | None = None) -> None:
    meta = {"kind": "classifier", "mode": mode, "config": _config_dict(model.config), **(extra or {})}
    Path(path).write_bytes(encode_checkpoint(model.state_dict(), meta))


def load_classifier(path) -> tuple[RecurrentClassifier, str]:
    meta, tensors = decode_checkpoint(Path(path).read_bytes())
    if meta.get("kind") != "classifier":
        raise FormatError(f"{path} does not hold a classifier (kind={meta.get('kind')!r})")
    model = RecurrentClassifier(RnnConfig(**meta["config"]))
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return model, meta["mode"]
