"""Full-batch end-to-end training."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from tip.autodiff import AdamState, Tape, Tensor, TrainingError, adam_step, backward, log, mean, sub
from tip.encoder import EncoderConfig, Variant
from tip.graph import ContractError, SplitGraph, sample_negatives
from tip.model import ModelConfig, TipModel

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "tip-sum"
    epochs: int = 100
    lr: float = 0.01
    seed_init: int = 0
    seed_split: int = 0
    seed_neg: int = 0
    nn_hidden: int = 16
    encoder_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant).value)
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.for_variant(self.variant, **self.encoder_overrides)

    def model_config(self, split: SplitGraph) -> ModelConfig:
        g = split.train
        return ModelConfig(
            encoder=self.encoder_config(),
            num_proteins=g.num_proteins,
            num_drugs=g.num_drugs,
            num_relations=g.num_relations,
            nn_hidden=self.nn_hidden,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: TipModel
    losses: list[float]
    optimizer: AdamState


def bce_loss(pos_scores, neg_scores) -> Tensor:
    """``-mean(log p_pos) - mean(log(1 - p_neg))`` with logs clamped at 1e-12."""
    pos = pos_scores if isinstance(pos_scores, Tensor) else Tensor(pos_scores)
    neg = neg_scores if isinstance(neg_scores, Tensor) else Tensor(neg_scores)
    if pos.data.size == 0:
        raise ContractError("bce_loss needs at least one positive score")
    loss = mean(log(pos, floor=LOG_FLOOR)) * -1.0
    if neg.data.size:
        loss = sub(loss, mean(log(sub(1.0, neg), floor=LOG_FLOOR)))
    return loss


def triples_from_pairs(pairs: Sequence[np.ndarray]) -> np.ndarray:
    """Stack per-relation pair lists into ``(i, r, j)`` rows."""
    blocks = [
        np.column_stack([p[:, 0], np.full(len(p), r), p[:, 1]])
        for r, p in enumerate(pairs)
        if len(p)
    ]
    if not blocks:
        return np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(blocks, axis=0).astype(np.int64)


def train(
    split: SplitGraph,
    config: TrainConfig,
    model: TipModel | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Adam on the whole training graph each epoch.

    Training negatives are redrawn every epoch against the training
    positives only, so held-out edges never leak in as known positives.
    """
    if model is None:
        model = TipModel.initialise(config.model_config(split), seed=config.seed_init)
    g = split.train
    positives = g.dd_pairs
    pos_triples = triples_from_pairs(positives)
    state = AdamState(lr=config.lr)
    losses: list[float] = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        negs = sample_negatives(positives, g, seed=[config.seed_neg, 1, epoch])
        neg_triples = triples_from_pairs(negs.pairs)
        tape = Tape()
        z, decoder = model.forward(g, tape)
        loss = bce_loss(decoder.score(z, pos_triples), decoder.score(z, neg_triples))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        backward(tape, loss)
        try:
            adam_step(model.params, state)
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        losses.append(value)
        logger.debug("epoch %d loss %.6f (%.3fs)", epoch, value, time.perf_counter() - started)
        if on_epoch is not None:
            on_epoch(epoch, value)
    return TrainResult(model=model, losses=losses, optimizer=state)
