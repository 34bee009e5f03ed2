"""Layers and the MLP backbone: linear, ReLU, batch normalization with shift mode."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import Tensor, relu

__all__ = ["Linear", "BatchNorm", "BackboneConfig", "Backbone", "save_checkpoint", "load_checkpoint"]

TRAIN = "train"
EVAL = "eval"
SHIFT = "shift"  # batch stats + EMA updates, affine frozen, no gradients


class Linear:
    """y = x @ W.T + b with weight shape (out, in)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        scale = np.sqrt(2.0 / in_dim)
        self.weight = Tensor(rng.standard_normal((out_dim, in_dim)) * scale, requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.values.shape[1] != self.weight.values.shape[1]:
            raise ValueError(
                f"linear input width {x.values.shape[1]} != {self.weight.values.shape[1]}"
            )
        out = x @ self.weight.T
        return out + self.bias if self.bias is not None else out

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class BatchNorm:
    """Per-channel batch normalization with an explicit shift-learning mode.

    Modes:
      train: normalize by batch mean/var (biased, divisor m), update running
             stats by EMA, gradients flow to the affine scale/shift.
      eval:  normalize by running stats, no updates, no parameter gradients.
      shift: normalize by batch stats and keep updating the running stats,
             but the affine parameters are frozen and receive no gradient.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        if not 0.0 < momentum <= 1.0:
            raise ValueError("momentum must lie in (0, 1]")
        self.scale = Tensor(np.ones(channels), requires_grad=True)
        self.shift = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.mode = TRAIN

    def __call__(self, h: Tensor) -> Tensor:
        if self.mode == EVAL:
            denom = np.sqrt(self.running_var + self.eps)
            if h.requires_grad:
                x_hat = (h - Tensor(self.running_mean)) / Tensor(denom)
                return self.scale * x_hat + self.shift
            x_hat = (h.values - self.running_mean) / denom
            return Tensor(self.scale.values * x_hat + self.shift.values)
        m = h.values.shape[0]
        if m < 2:
            raise ValueError("batch normalization needs batch size >= 2 in training modes")
        if self.mode == SHIFT:
            # Backbone is frozen during shift learning: pure value path.
            mu = h.values.mean(axis=0)
            var = ((h.values - mu) ** 2).mean(axis=0)
            self._update_running(mu, var)
            x_hat = (h.values - mu) / np.sqrt(var + self.eps)
            return Tensor(self.scale.values * x_hat + self.shift.values)
        mu = h.mean(axis=0)
        diff = h - mu
        var = (diff * diff).mean(axis=0)
        self._update_running(mu.values, var.values)
        x_hat = diff / (var + self.eps).sqrt()
        return self.scale * x_hat + self.shift

    def _update_running(self, mu: np.ndarray, var: np.ndarray):
        self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mu
        self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var

    def parameters(self) -> list[Tensor]:
        return [self.scale, self.shift]


@dataclass
class BackboneConfig:
    in_dim: int
    hidden: list[int] = field(default_factory=list)  # widths of hidden blocks
    batchnorm: bool = True
    bn_momentum: float = 0.1
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.in_dim


class Backbone:
    """MLP feature extractor: repeated [linear -> (BN) -> ReLU] blocks.

    With no hidden widths configured the backbone is the identity map.
    """

    def __init__(self, cfg: BackboneConfig):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB0]))
        self.linears: list[Linear] = []
        self.norms: list[BatchNorm | None] = []
        prev = cfg.in_dim
        for width in cfg.hidden:
            self.linears.append(Linear(prev, width, rng))
            self.norms.append(BatchNorm(width, cfg.bn_momentum) if cfg.batchnorm else None)
            prev = width

    def set_mode(self, mode: str):
        for bn in self.norms:
            if bn is not None:
                bn.mode = mode

    def forward(self, x, mode: str) -> Tensor:
        self.set_mode(mode)
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.values.shape[1] != self.cfg.in_dim:
            raise ValueError(f"input width {h.values.shape[1]} != {self.cfg.in_dim}")
        for lin, bn in zip(self.linears, self.norms):
            h = lin(h)
            if bn is not None:
                h = bn(h)
            h = relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for lin, bn in zip(self.linears, self.norms):
            params.extend(lin.parameters())
            if bn is not None:
                params.extend(bn.parameters())
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All parameter and running-stat arrays keyed by a stable name."""
        out: dict[str, np.ndarray] = {}
        for i, (lin, bn) in enumerate(zip(self.linears, self.norms)):
            out[f"linear{i}.weight"] = lin.weight.values
            out[f"linear{i}.bias"] = lin.bias.values
            if bn is not None:
                out[f"bn{i}.scale"] = bn.scale.values
                out[f"bn{i}.shift"] = bn.shift.values
                out[f"bn{i}.running_mean"] = bn.running_mean
                out[f"bn{i}.running_var"] = bn.running_var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for i, (lin, bn) in enumerate(zip(self.linears, self.norms)):
            lin.weight.values = arrays[f"linear{i}.weight"].copy()
            lin.bias.values = arrays[f"linear{i}.bias"].copy()
            if bn is not None:
                bn.scale.values = arrays[f"bn{i}.scale"].copy()
                bn.shift.values = arrays[f"bn{i}.shift"].copy()
                bn.running_mean = arrays[f"bn{i}.running_mean"].copy()
                bn.running_var = arrays[f"bn{i}.running_var"].copy()


def bn_shift_stats(backbone: Backbone, sampler, steps: int, batch: int) -> None:
    """Refresh BN running statistics under a sampler with everything else frozen."""
    if steps == 0:
        return
    backbone.set_mode(SHIFT)
    for _ in range(steps):
        x, _ = sampler.next_batch(batch)
        backbone.forward(x, SHIFT)


# -- checkpoint format: JSON manifest + flat little-endian f64 blob -------------


def save_checkpoint(path_prefix: str | Path, arrays: dict[str, np.ndarray], meta: dict):
    """Write <prefix>.json (manifest) and <prefix>.bin (f64 LE blob); bit-exact round trip."""
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f8")
            fh.write(arr.tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = {"meta": meta, "entries": entries, "total": offset}
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path_prefix: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    prefix = Path(path_prefix)
    with open(prefix.with_suffix(".json")) as fh:
        manifest = json.load(fh)
    blob = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    arrays = {}
    for entry in manifest["entries"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = (
            blob[entry["offset"] : entry["offset"] + n].reshape(entry["shape"]).astype(np.float64)
        )
    return arrays, manifest["meta"]
