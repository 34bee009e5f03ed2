"""Two-stage training pipeline.

Stage-1 trains the backbone and a plain linear classifier jointly with
instance-balanced sampling (optionally with mixup). Stage-2 freezes the
backbone and BN affine parameters, switches to class-balanced sampling,
optionally lets BN running statistics drift to the class-balanced input
distribution (shift learning), and retrains only the classifier head with
label-aware smoothing, plain CE, or per-class weighted CE.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import net
from .calib import PredictionLog, ece, split_accuracy
from .data import LongTailedDataset, MixupConfig, Sampler, mixup_batch, one_hot
from .head import GeneralizedHead, HEAD_MODES
from .losses import (
    SmoothingSchedule,
    ce_loss,
    effective_number_weights,
    las_target_matrix,
    soft_ce_loss,
    weighted_ce_loss,
)
from .tensor import Tensor, softmax

__all__ = [
    "TrainConfig",
    "DivergenceError",
    "lr_at",
    "SGD",
    "Model",
    "train_stage1",
    "train_stage2",
    "run",
    "run_ablation_grid",
    "evaluate",
]


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


def lr_at(schedule: dict, epoch: int, total_epochs: int, base_lr: float) -> float:
    """Learning rate at an epoch.

    multistep: base_lr * factor**(number of milestones passed).
    cosine:    base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs)).
    """
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    kind = schedule["kind"]
    if kind == "multistep":
        passed = sum(1 for m in schedule.get("milestones", []) if epoch >= m)
        return base_lr * schedule.get("factor", 0.1) ** passed
    if kind == "cosine":
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))
    raise ValueError(f"unknown schedule kind {kind!r}")


class SGD:
    """Momentum SGD with per-group learning-rate multipliers and L2 decay."""

    def __init__(self, param_groups: list[dict], momentum: float = 0.9):
        self.groups = param_groups
        self.momentum = momentum
        self.velocity = {id(p): np.zeros_like(p.values) for g in param_groups for p in g["params"]}

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"]:
                p.zero_grad()

    def step(self, lr: float):
        for g in self.groups:
            eff_lr = lr * g.get("lr_mult", 1.0)
            wd = g.get("weight_decay", 0.0)
            for p in g["params"]:
                if p.grad is None:
                    continue
                v = self.velocity[id(p)]
                grad = p.grad + wd * p.values if wd else p.grad
                v *= self.momentum
                v += grad
                p.values = p.values - eff_lr * v


@dataclass
class TrainConfig:
    lr: float = 0.1
    batch_size: int = 64
    weight_decay: float = 2e-4
    momentum: float = 0.9
    stage1_epochs: int = 30
    stage1_schedule: dict = field(default_factory=lambda: {"kind": "multistep", "milestones": [20, 26], "factor": 0.1})
    stage2_epochs: int = 10
    stage2_schedule: dict = field(default_factory=lambda: {"kind": "cosine"})
    stage2_lr_scale: float = 0.1  # Stage-2 base LR relative to Stage-1
    hidden: list[int] = field(default_factory=lambda: [32, 16])
    batchnorm: bool = True
    bn_momentum: float = 0.1
    mixup_alpha: float = 0.2
    mixup_stage1: bool = True
    mixup_stage2: bool = False
    mixup_force_lam: float | None = None  # test hook: pin the Beta draw
    shift_bn: bool = True
    stage2_loss: str = "las"  # las | ce | weighted
    las_kind: str = "concave"
    eps1: float = 0.4
    eps_k: float = 0.1
    las_p: float = 2.0
    head_mode: str = "generalized"  # crt | lws | generalized
    lr_ratio_dw: float = 0.2
    batches_per_epoch: int | None = None  # default: ceil(N_total / batch_size)
    bn_warm_steps: int = 0  # optional stats-only pass before Stage-2 training
    bn_concurrent: bool = True  # keep updating BN stats during Stage-2 steps
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.stage1_epochs < 1:
            raise ValueError("stage1_epochs: must be >= 1")
        if self.stage2_epochs < 0:
            raise ValueError("stage2_epochs: must be >= 0")
        ms = self.stage1_schedule.get("milestones", [])
        if any(b <= a for a, b in zip(ms, ms[1:])) or any(m >= self.stage1_epochs for m in ms):
            raise ValueError("stage1_schedule.milestones: must be strictly increasing and < stage1_epochs")
        if not (0.0 <= self.eps_k <= self.eps1 <= 0.5):
            raise ValueError("eps1/eps_k: require 0 <= eps_K <= eps_1 <= 0.5")
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode: unknown mode {self.head_mode!r}")
        if self.stage2_loss not in ("las", "ce", "weighted"):
            raise ValueError(f"stage2_loss: unknown loss {self.stage2_loss!r}")
        if self.mixup_alpha <= 0:
            raise ValueError("mixup_alpha: must be positive")

    def to_json(self, path: str | Path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown config key")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Model:
    """Backbone plus classifier; the classifier is either the Stage-1 weight
    matrix (M, K) or a Stage-2 generalized head."""

    def __init__(self, backbone: net.Backbone, w: Tensor, head: GeneralizedHead | None = None):
        self.backbone = backbone
        self.w = w
        self.head = head

    def logits(self, x, mode: str) -> Tensor:
        feats = self.backbone.forward(x, mode)
        if self.head is not None:
            return self.head(feats)
        return feats @ self.w

    def predict_probs(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x, net.EVAL)).values


def _batches_per_epoch(cfg: TrainConfig, ds: LongTailedDataset) -> int:
    if cfg.batches_per_epoch is not None:
        return cfg.batches_per_epoch
    return math.ceil(len(ds.labels) / cfg.batch_size)


def evaluate(model: Model, ds: LongTailedDataset, bins: int = 15) -> dict:
    """Accuracy, ECE, and split accuracies on the balanced test set."""
    probs = model.predict_probs(ds.test_features)
    log = PredictionLog.from_probs(probs, ds.test_labels)
    report = ece(log, bins)
    out = {"accuracy": float(log.correct.mean() * 100.0), "ece": report.ece_percent}
    out.update({f"acc_{k}": v for k, v in split_accuracy(log, ds.splits).items()})
    return out


def _check_finite(loss_value: float, epoch: int):
    if not np.isfinite(loss_value):
        raise DivergenceError(epoch)


def train_stage1(cfg: TrainConfig, ds: LongTailedDataset, metrics: list | None = None) -> Model:
    """Joint backbone + linear classifier training on instance-balanced batches."""
    k = ds.num_classes
    bb_cfg = net.BackboneConfig(
        in_dim=ds.dim, hidden=list(cfg.hidden), batchnorm=cfg.batchnorm,
        bn_momentum=cfg.bn_momentum, seed=cfg.seed,
    )
    backbone = net.Backbone(bb_cfg)
    w_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x57]))
    w = Tensor(w_rng.standard_normal((bb_cfg.feature_dim, k)) / np.sqrt(bb_cfg.feature_dim),
               requires_grad=True)
    model = Model(backbone, w)

    sampler = Sampler("instance", ds, seed=int(np.random.SeedSequence([cfg.seed, 0x5A]).generate_state(1)[0]))
    mix_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x3F]))
    mix_cfg = MixupConfig(alpha=cfg.mixup_alpha, enabled=cfg.mixup_stage1)

    decayed = [{"params": [lin.weight for lin in backbone.linears] + [w],
                "weight_decay": cfg.weight_decay}]
    plain = [{"params": [lin.bias for lin in backbone.linears]
              + [p for bn in backbone.norms if bn is not None for p in bn.parameters()]}]
    opt = SGD(decayed + plain, momentum=cfg.momentum)

    steps = _batches_per_epoch(cfg, ds)
    for epoch in range(cfg.stage1_epochs):
        lr = lr_at(cfg.stage1_schedule, epoch, cfg.stage1_epochs, cfg.lr)
        losses = []
        for _ in range(steps):
            x, y = sampler.next_batch(cfg.batch_size)
            if cfg.mixup_stage1:
                perm = mix_rng.permutation(len(x))
                x, q = mixup_batch(x, y, x[perm], y[perm], mix_cfg, mix_rng, k,
                                   lam=cfg.mixup_force_lam)
                loss = soft_ce_loss(q, model.logits(x, net.TRAIN))
            else:
                loss = ce_loss(y, model.logits(x, net.TRAIN))
            _check_finite(loss.values.item(), epoch)
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            losses.append(loss.values.item())
        if metrics is not None:
            ev = evaluate(model, ds)
            metrics.append({"epoch": epoch, "stage": 1, "lr": lr,
                            "train_loss": float(np.mean(losses)),
                            "test_acc": ev["accuracy"], "ece": ev["ece"]})
    return model


def train_stage2(cfg: TrainConfig, model: Model, ds: LongTailedDataset,
                 metrics: list | None = None) -> Model:
    """Classifier retraining on class-balanced batches with a frozen backbone."""
    k = ds.num_classes
    head = GeneralizedHead(model.w.values, mode=cfg.head_mode, lr_ratio_dw=cfg.lr_ratio_dw)
    model = Model(model.backbone, model.w, head)

    sampler = Sampler("class", ds, seed=int(np.random.SeedSequence([cfg.seed, 0xC2]).generate_state(1)[0]))
    mix_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x9D]))
    mix_cfg = MixupConfig(alpha=cfg.mixup_alpha, enabled=cfg.mixup_stage2)

    schedule = None
    weights = None
    if cfg.stage2_loss == "las":
        schedule = SmoothingSchedule.from_counts(ds.class_counts, cfg.las_kind, cfg.eps1,
                                                 cfg.eps_k, cfg.las_p)
    elif cfg.stage2_loss == "weighted":
        weights = effective_number_weights(ds.class_counts)

    groups = head.param_groups()
    for g in groups:
        # Weight decay on dW only; the scaling vector s is left undecayed.
        if g["params"][0] is head.dw:
            g["weight_decay"] = cfg.weight_decay
    opt = SGD(groups, momentum=cfg.momentum)

    bn_mode = net.SHIFT if cfg.shift_bn and cfg.bn_concurrent else net.EVAL
    if cfg.shift_bn and cfg.bn_warm_steps:
        net.bn_shift_stats(model.backbone, sampler, cfg.bn_warm_steps, cfg.batch_size)

    base_lr = cfg.lr * cfg.stage2_lr_scale
    steps = _batches_per_epoch(cfg, ds)
    for epoch in range(cfg.stage2_epochs):
        lr = lr_at(cfg.stage2_schedule, epoch, cfg.stage2_epochs, base_lr)
        losses = []
        for _ in range(steps):
            x, y = sampler.next_batch(cfg.batch_size)
            q = None
            if cfg.mixup_stage2:
                perm = mix_rng.permutation(len(x))
                x, q = mixup_batch(x, y, x[perm], y[perm], mix_cfg, mix_rng, k,
                                   lam=cfg.mixup_force_lam)
            feats = model.backbone.forward(x, bn_mode)
            logits = head(Tensor(feats.values))  # backbone frozen: cut the tape
            if q is not None:
                loss = soft_ce_loss(q, logits)
            elif cfg.stage2_loss == "las":
                loss = soft_ce_loss(las_target_matrix(schedule, y, k), logits)
            elif cfg.stage2_loss == "weighted":
                loss = weighted_ce_loss(weights, y, logits)
            else:
                loss = ce_loss(y, logits)
            _check_finite(loss.values.item(), epoch)
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            losses.append(loss.values.item())
        if metrics is not None:
            ev = evaluate(model, ds)
            metrics.append({"epoch": epoch, "stage": 2, "lr": lr,
                            "train_loss": float(np.mean(losses)),
                            "test_acc": ev["accuracy"], "ece": ev["ece"]})
    return model


def run(cfg: TrainConfig, ds: LongTailedDataset) -> dict:
    """Full pipeline; returns final metrics, per-epoch curves, and the model."""
    metrics: list[dict] = []
    model = train_stage1(cfg, ds, metrics)
    if cfg.stage2_epochs > 0:
        model = train_stage2(cfg, model, ds, metrics)
    final = evaluate(model, ds)
    return {"config": asdict(cfg), "final": final, "curves": metrics, "model": model}


ABLATION_CELLS = [(mu, sl, las) for mu in (False, True) for sl in (False, True)
                  for las in (False, True)]


def run_ablation_grid(base_cfg: TrainConfig, ds: LongTailedDataset) -> list[dict]:
    """The 2^3 (mixup, shift-BN, smoothing) toggle grid with per-cell seeds."""
    results = []
    base = asdict(base_cfg)
    for i, (mu, sl, las) in enumerate(ABLATION_CELLS):
        d = dict(base)
        d.update(mixup_stage1=mu, shift_bn=sl, stage2_loss="las" if las else "ce",
                 seed=base_cfg.seed + i)
        cell = {"mixup_stage1": mu, "shift_bn": sl, "las": las, "seed": d["seed"]}
        try:
            res = run(TrainConfig.from_dict(d), ds)
            cell.update(accuracy=res["final"]["accuracy"], ece=res["final"]["ece"])
        except DivergenceError as exc:
            cell.update(error=str(exc))
        results.append(cell)
    return results


def write_metrics_csv(metrics: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "stage", "lr", "train_loss", "test_acc", "ece"])
        for row in metrics:
            writer.writerow([row["epoch"], row["stage"], repr(row["lr"]),
                             repr(row["train_loss"]), repr(row["test_acc"]), repr(row["ece"])])


def save_model(model: Model, path_prefix: str | Path, meta: dict | None = None):
    arrays = {f"backbone.{k}": v for k, v in model.backbone.state_arrays().items()}
    arrays["classifier.w"] = model.w.values
    meta = dict(meta or {})
    meta["backbone"] = {"in_dim": model.backbone.cfg.in_dim,
                        "hidden": list(model.backbone.cfg.hidden),
                        "batchnorm": model.backbone.cfg.batchnorm,
                        "bn_momentum": model.backbone.cfg.bn_momentum,
                        "seed": model.backbone.cfg.seed}
    meta["num_classes"] = int(model.w.values.shape[1])
    if model.head is not None:
        arrays.update(model.head.state_arrays())
        meta["head"] = {"mode": model.head.mode, "r": model.head.r,
                        "lr_ratio_dw": model.head.lr_ratio_dw}
    net.save_checkpoint(path_prefix, arrays, meta)


def load_model(path_prefix: str | Path) -> Model:
    arrays, meta = net.load_checkpoint(path_prefix)
    bb = net.Backbone(net.BackboneConfig(**meta["backbone"]))
    bb.load_state_arrays({k[len("backbone."):]: v for k, v in arrays.items()
                          if k.startswith("backbone.")})
    w = Tensor(arrays["classifier.w"].copy(), requires_grad=True)
    head = None
    if "head" in meta:
        head = GeneralizedHead(arrays["head.w"], mode=meta["head"]["mode"],
                               r=meta["head"]["r"], lr_ratio_dw=meta["head"]["lr_ratio_dw"])
        head.load_state_arrays(arrays)
    return Model(bb, w, head)
