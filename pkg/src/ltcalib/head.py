"""Stage-2 classifier head z = diag(s) (r*W + dW)^T x.

W is the frozen Stage-1 classifier weight. The head degenerates to classifier
re-training (cRT: r=0, s fixed at 1, dW learnable) and to learnable weight
scaling (LWS: r=1, dW fixed at 0, s learnable); the generalized mode learns
both s and dW, with a separate learning-rate multiplier for dW.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["GeneralizedHead"]

HEAD_MODES = ("crt", "lws", "generalized")


class GeneralizedHead:
    def __init__(
        self,
        w: np.ndarray,
        mode: str = "generalized",
        r: float | None = None,
        lr_ratio_dw: float = 1.0,
    ):
        if mode not in HEAD_MODES:
            raise ValueError(f"unknown head mode {mode!r}")
        self.mode = mode
        self.w = np.array(w, dtype=np.float64)  # (M, K), frozen
        if r is None:
            r = 0.0 if mode == "crt" else 1.0
        self.r = float(r)
        self.lr_ratio_dw = float(lr_ratio_dw)
        m, k = self.w.shape
        self.dw = Tensor(np.zeros((m, k)), requires_grad=(mode != "lws"))
        self.s = Tensor(np.ones(k), requires_grad=(mode != "crt"))

    @property
    def num_classes(self) -> int:
        return self.w.shape[1]

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.values.shape[1] != self.w.shape[0]:
            raise ValueError(f"feature width {x.values.shape[1]} != {self.w.shape[0]}")
        eff = Tensor(self.r * self.w) + self.dw
        return (x @ eff) * self.s

    __call__ = forward

    def param_groups(self) -> list[dict]:
        """Learnable groups with LR multipliers; frozen tensors excluded."""
        groups = []
        if self.s.requires_grad:
            groups.append({"params": [self.s], "lr_mult": 1.0})
        if self.dw.requires_grad:
            groups.append({"params": [self.dw], "lr_mult": self.lr_ratio_dw})
        return groups

    def parameters(self) -> list[Tensor]:
        return [p for g in self.param_groups() for p in g["params"]]

    def effective_weight(self) -> np.ndarray:
        return (self.r * self.w + self.dw.values) * self.s.values

    def weight_norms(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-class L2 norms: (effective column norms, raw Stage-1 column norms)."""
        eff = np.linalg.norm(self.effective_weight(), axis=0)
        raw = np.linalg.norm(self.w, axis=0)
        return eff, raw

    def export_weight_norms(self, path: str | Path, class_counts):
        eff, raw = self.weight_norms()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "count", "norm_effective", "norm_w"])
            for j, (c, e, r) in enumerate(zip(class_counts, eff, raw)):
                writer.writerow([j, int(c), repr(float(e)), repr(float(r))])

    def state_arrays(self, prefix: str = "head.") -> dict[str, np.ndarray]:
        return {
            prefix + "w": self.w,
            prefix + "dw": self.dw.values,
            prefix + "s": self.s.values,
            prefix + "r": np.array([self.r]),
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "head."):
        self.w = arrays[prefix + "w"].copy()
        self.dw.values = arrays[prefix + "dw"].copy()
        self.s.values = arrays[prefix + "s"].copy()
        self.r = float(arrays[prefix + "r"][0])
