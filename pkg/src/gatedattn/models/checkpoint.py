"""JSON checkpoints for every parameter container.

Floats are written with Python's shortest round-trip representation, so a
save/load cycle is bit-exact. Infinite LSTM gate biases are written as the
JSON extensions ``Infinity``/``-Infinity``.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from .attention import AttentionParams, DecayedAttentionParams
from .base import value_of
from .gated import DenseGatedRnnParams, GatedRnnParams, SideGatedRnnParams
from .lru import LruLayer, LruParams
from .recurrent import GruLayer, GruParams, LstmLayer, LstmParams

ARCHS = {cls.arch: cls for cls in (AttentionParams, DecayedAttentionParams, GatedRnnParams,
                                   SideGatedRnnParams, DenseGatedRnnParams, LstmParams,
                                   GruParams, LruParams)}
LAYER_TYPES = {"lstm": LstmLayer, "gru": GruLayer, "lru": LruLayer}


def _encode(obj):
    params, shapes, flags = {}, {}, {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, list):
            params[f.name] = [_encode(item)[0] for item in v]
            shapes[f.name] = [_encode(item)[1] for item in v]
        elif v is None:
            params[f.name] = None
        elif isinstance(v, (str, bool)):
            flags[f.name] = v
        else:
            arr = value_of(v)
            params[f.name] = arr.tolist()
            shapes[f.name] = list(arr.shape)
    return params, shapes, flags


def to_checkpoint(model, metadata: dict | None = None) -> dict:
    params, shapes, flags = _encode(model)
    meta = {"created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    meta.update(metadata or {})
    mode = flags.pop("mode", None) or flags.get("lambda_mode")
    return {"arch": model.arch, "shapes": shapes, "params": params,
            "activation_mode": mode, "settings": flags, "metadata": meta}


def from_checkpoint(doc: dict):
    cls = ARCHS[doc["arch"]]
    kwargs = {}
    for name, value in doc["params"].items():
        if value is None:
            kwargs[name] = None
        elif name == "layers":
            layer_cls = LAYER_TYPES[doc["arch"]]
            kwargs[name] = [layer_cls(**{k: (None if v is None else np.array(v, dtype=np.float64))
                                         for k, v in layer.items()}) for layer in value]
        else:
            kwargs[name] = np.array(value, dtype=np.float64).reshape(doc["shapes"][name])
    kwargs.update(doc.get("settings", {}))
    if doc["arch"] in ("lstm", "gru", "lru") and doc.get("activation_mode"):
        kwargs["mode"] = doc["activation_mode"]
    return cls(**kwargs)


def save_checkpoint(model, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_checkpoint(model, metadata)))
    return path


def load_checkpoint(path):
    return from_checkpoint(json.loads(Path(path).read_text()))
