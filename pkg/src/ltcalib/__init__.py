"""Two-stage long-tailed classification with calibration measurement.

Submodules:
  tensor  - float64 tensors with reverse-mode autodiff
  data    - synthetic long-tailed datasets, samplers, mixup
  net     - linear / batch-norm layers and the MLP backbone
  losses  - soft-target CE, weighted CE, label-aware smoothing
  head    - generalized Stage-2 classifier head (cRT / LWS / generalized)
  calib   - ECE, reliability bins, split accuracy, probability distributions
  trainer - the two-stage pipeline and ablation grid
  cli     - command-line interface
"""

from .calib import PredictionLog, ece, reliability_bins, split_accuracy
from .data import LongTailedDataset, MixupConfig, Sampler, gen_gaussian_blobs, make_longtail_profile, mixup_batch
from .head import GeneralizedHead
from .losses import (
    SmoothingSchedule,
    las_optimal_logit_gap,
    las_targets,
    related_fn_eval,
    soft_ce_loss,
    weighted_ce_loss,
)
from .net import Backbone, BackboneConfig, BatchNorm, Linear
from .tensor import Tensor, matmul, relu, softmax
from .trainer import TrainConfig, evaluate, run, run_ablation_grid, train_stage1, train_stage2

__version__ = "0.1.0"
