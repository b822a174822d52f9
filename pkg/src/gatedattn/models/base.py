"""Shared plumbing for parameter containers.

Parameter objects are dataclasses whose array fields may hold numpy arrays or
traced tensors. :func:`flatten` and :func:`unflatten` convert between a
container and a flat ``{dotted.name: array}`` mapping, which is what the
optimizer and the checkpoint format work with.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ..autodiff import Tensor


def _is_array(v):
    return isinstance(v, (np.ndarray, Tensor))


def flatten(obj, prefix="") -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        name = prefix + f.name
        if _is_array(v):
            out[name] = v
        elif isinstance(v, list):
            for i, item in enumerate(v):
                if dataclasses.is_dataclass(item):
                    out.update(flatten(item, f"{name}.{i}."))
        elif dataclasses.is_dataclass(v):
            out.update(flatten(v, name + "."))
    return out


def unflatten(obj, arrays: dict, prefix=""):
    changes = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        name = prefix + f.name
        if _is_array(v) and name in arrays:
            changes[f.name] = arrays[name]
        elif isinstance(v, list) and v and dataclasses.is_dataclass(v[0]):
            changes[f.name] = [unflatten(item, arrays, f"{name}.{i}.") for i, item in enumerate(v)]
        elif dataclasses.is_dataclass(v):
            changes[f.name] = unflatten(v, arrays, name + ".")
    return dataclasses.replace(obj, **changes)


def settings(obj) -> dict:
    """Non-array scalar fields (modes, flags) of a container."""
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)
            if isinstance(getattr(obj, f.name), (str, bool, int, float))
            and not isinstance(getattr(obj, f.name), np.ndarray)}


def value_of(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def n_params(obj) -> int:
    return int(sum(value_of(v).size for v in flatten(obj).values()))
