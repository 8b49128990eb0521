"""Deterministic full-batch gradient-descent trainer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dataset import MemeRecord, resolve_patches
from .encoders import tokenize
from .errors import DivergenceError, ValidationError
from .model import MODALITY_MULTIMODAL, MemeModel, ModelConfig


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 50
    lr: float = 0.5
    lam: float = 1.0          # weight of the category loss
    n_patches: int = 4
    model: ModelConfig = field(default_factory=ModelConfig)


def prepare_examples(dataset, model_cfg: ModelConfig, n_patches: int,
                     base_dir=None):
    """Tokenize and resolve patch grids once, up front."""
    prepared = []
    for record, gold_label, gold_category in dataset:
        tokens = tokenize(record.text, model_cfg.vocab_size)
        patches = None
        if model_cfg.modality == MODALITY_MULTIMODAL:
            patches = resolve_patches(record, model_cfg.raw_dim,
                                      n_patches=n_patches, base_dir=base_dir)
        prepared.append((tokens, patches, bool(gold_label), int(gold_category)))
    return prepared


def train(dataset, cfg: TrainConfig, base_dir=None):
    """Full-batch GD on mean(CE_label + lam * CE_category).

    `dataset` is a list of (MemeRecord, gold_label, gold_category). Returns
    (model, loss_history) with one mean-loss entry per epoch, evaluated at the
    parameters the epoch started from. Reproducible given cfg.seed.
    """
    if not dataset:
        raise ValidationError("empty training dataset")
    if cfg.epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if cfg.lr < 0:
        raise ValidationError("lr must be >= 0")

    model = MemeModel.init(cfg.seed, cfg.model)
    examples = prepare_examples(dataset, cfg.model, cfg.n_patches, base_dir)
    n = len(examples)
    loss_history = []
    for epoch in range(cfg.epochs):
        grads = model.zero_grads()
        total = 0.0
        for tokens, patches, label, category in examples:
            total += model.loss_and_grads(tokens, patches, label, category,
                                          cfg.lam, grads)
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise DivergenceError(epoch)
        loss_history.append(mean_loss)
        scale = -cfg.lr / n
        for name, param in model.param_items():
            param.axpy_(scale, grads[name])
    return model, loss_history
