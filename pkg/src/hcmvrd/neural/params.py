"""Learnable parameters of every architecture variant and their checkpoint files."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import load_features, write_features
from .autodiff import Tensor, parameter
from .layers import LayerParams, Linear

ARCHITECTURES = ("hierarchical", "parallel", "reversed", "pure_object")
PAIR_SPATIAL_DIM = 10
WEIGHTS_RECORD = "params"


@dataclass(frozen=True)
class ModelDims:
    input_dim: int
    hidden: int
    num_predicates: int
    depth: int = 3
    architecture: str = "hierarchical"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if min(self.input_dim, self.hidden, self.num_predicates, self.depth) < 1:
            raise ValueError("dimensions must be positive")

    def shapes(self) -> dict[str, tuple[int, int]]:
        d, h, p, depth = self.input_dim, self.hidden, self.num_predicates, self.depth
        out: dict[str, tuple[int, int]] = {}

        def stack(name, in_dim):
            for i in range(depth):
                fan_in = in_dim if i == 0 else h
                out[f"{name}.{i}.self"] = (fan_in, h)
                out[f"{name}.{i}.neigh"] = (fan_in, h)
                out[f"{name}.{i}.bias"] = (1, h)

        def linear(name, fan_in, fan_out):
            out[f"{name}.w"] = (fan_in, fan_out)
            out[f"{name}.b"] = (1, fan_out)

        arch = self.architecture
        if arch == "reversed":
            stack("temporal", d)
            linear("pair", 2 * h, h)
            linear("rel", h + PAIR_SPATIAL_DIM, h)
            stack("pos", h)
            stack("sem", h)
            linear("gate", 2 * h, h)
            linear("fuse", 2 * h, h)
        else:
            stack("pos", d)
            stack("sem", d)
            linear("gate", 2 * h, h)
            linear("fuse", 2 * h, h)
            if arch == "pure_object":
                stack("temporal", h)
            linear("pair", 2 * h, h)
            linear("rel", h + PAIR_SPATIAL_DIM, h)
            if arch == "hierarchical":
                stack("temporal", h)
            if arch == "parallel":
                linear("raw_pair", 2 * d, h)
                linear("raw_rel", h + PAIR_SPATIAL_DIM, h)
                stack("temporal", h)
                linear("out_gate", 2 * h, h)
                linear("out_fuse", 2 * h, h)
        linear("head.0", h, h)
        linear("head.1", h, p)
        return out

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "num_predicates": self.num_predicates,
            "depth": self.depth,
            "architecture": self.architecture,
        }


class ModelParams:
    """Named parameter tensors in a fixed order, with typed accessors for the layers."""

    def __init__(self, dims: ModelDims, tensors: dict[str, Tensor]):
        expected = dims.shapes()
        if list(tensors) != list(expected):
            raise ValueError("parameter names do not match the architecture")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape} != {shape}")
        self.dims = dims
        self.tensors = tensors

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    def named(self):
        return self.tensors.items()

    def has(self, prefix: str) -> bool:
        return any(k.startswith(prefix + ".") for k in self.tensors)

    def linear(self, name: str) -> Linear:
        return Linear(self.tensors[f"{name}.w"], self.tensors[f"{name}.b"])

    def stack(self, name: str) -> list[LayerParams]:
        return [
            LayerParams(self.tensors[f"{name}.{i}.self"], self.tensors[f"{name}.{i}.neigh"], self.tensors[f"{name}.{i}.bias"])
            for i in range(self.dims.depth)
        ]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: parameter(v.data, k) for k, v in self.tensors.items()})


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in name order from one seeded stream."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, (fan_in, fan_out) in dims.shapes().items():
        if name.endswith(".bias") or name.endswith(".b"):
            data = np.zeros((fan_in, fan_out))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        tensors[name] = parameter(data, name)
    return ModelParams(dims, tensors)


def save_checkpoint(params: ModelParams, path: str | os.PathLike, extra: dict | None = None) -> None:
    """Write ``<path>`` (JSON manifest) and ``<path stem>.bin``.

    The binary holds one float64 record with every tensor flattened and
    concatenated in manifest order.
    """
    path = Path(path)
    weights = path.with_suffix(".bin")
    manifest = {
        "dims": params.dims.to_dict(),
        "shapes": {k: list(t.shape) for k, t in params.named()},
        "weights": weights.name,
    }
    if extra:
        manifest.update(extra)
    flat = np.concatenate([t.data.reshape(-1) for _, t in params.named()])
    write_features({WEIGHTS_RECORD: flat}, weights, double=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    dims = ModelDims(**manifest["dims"])
    records = load_features(path.parent / manifest["weights"])
    if WEIGHTS_RECORD not in records:
        raise ValueError("checkpoint weights record missing")
    flat = records[WEIGHTS_RECORD]
    tensors = {}
    offset = 0
    for name, shape in dims.shapes().items():
        if manifest["shapes"].get(name) != list(shape):
            raise ValueError(f"checkpoint shape mismatch for {name}")
        size = int(np.prod(shape))
        tensors[name] = parameter(flat[offset : offset + size].reshape(shape).copy(), name)
        offset += size
    if offset != flat.size:
        raise ValueError("checkpoint holds extra values")
    return ModelParams(dims, tensors), manifest
