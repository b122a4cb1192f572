from __future__ import annotations

import hashlib
from dataclasses import fields, is_dataclass

import numpy as np

from .layers import LSTMParams
from .tensor import Tensor


class Module:
    """Parameter container: collects Tensors reachable through attributes.

    Attribute traversal follows Tensors, nested Modules, LSTMParams and lists
    of those. Names are dotted attribute paths, sorted for stable ordering.
    """

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key in sorted(vars(self)):
            if key.startswith("_"):
                continue
            _collect(getattr(self, key), f"{prefix}{key}", out)
        return dict(sorted(out.items()))

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.named_parameters()
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, p in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arr.shape} vs model {p.shape}")
            p.data[...] = arr

    def param_hash(self) -> str:
        return params_hash(self.state_dict())

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False


def params_hash(state: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for k in sorted(state):
        arr = np.asarray(state[k], dtype="<f8", order="C")
        h.update(k.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _collect(obj, name: str, out: dict) -> None:
    if isinstance(obj, Tensor):
        out[name] = obj
    elif isinstance(obj, Module):
        out.update(obj.named_parameters(prefix=name + "."))
    elif isinstance(obj, LSTMParams) or (is_dataclass(obj) and not isinstance(obj, type)):
        for f in fields(obj):
            _collect(getattr(obj, f.name), f"{name}.{f.name}", out)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _collect(item, f"{name}.{i}", out)
    elif isinstance(obj, dict):
        for k in sorted(obj):
            _collect(obj[k], f"{name}.{k}", out)
