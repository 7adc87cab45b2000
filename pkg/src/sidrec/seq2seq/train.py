"""Mini-batch training loops: next-item fine-tuning and alignment pretraining."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..optim import clip_by_global_norm, make_optimizer
from .data import SequenceExample, make_batch, pair_example
from .model import Seq2SeqModel

ALIGN_STEPS = 2000
ALIGN_LR = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    steps: int = 2000
    clip_norm: float = 1.0
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.lr < 0:
            raise ContractViolation("learning rate must be >= 0")
        if self.batch_size < 1 or self.steps < 0:
            raise ContractViolation("batch_size >= 1 and steps >= 0 required")


def train(model: Seq2SeqModel, examples: list[SequenceExample], tc: TrainConfig) -> Seq2SeqModel:
    """Run ``tc.steps`` optimizer steps over shuffled mini-batches, in place.

    Records (step, loss) pairs on ``model.loss_curve``; raises on a
    non-finite loss. Deterministic given the seed.
    """
    if not examples:
        raise ContractViolation("no training examples")
    rng = np.random.default_rng(tc.seed)
    opt = make_optimizer(tc.optimizer, tc.lr)
    curve: list[tuple[int, float]] = []
    order = np.arange(len(examples))
    pos = len(examples)  # force an initial shuffle
    drop_rng = np.random.default_rng(tc.seed + 1) if model.config.dropout > 0 else None

    for step in range(tc.steps):
        if pos + tc.batch_size > len(order):
            rng.shuffle(order)
            pos = 0
        idx = order[pos : pos + tc.batch_size]
        pos += tc.batch_size
        batch = make_batch([examples[i] for i in idx])
        loss, grads = model.loss_and_grads(batch, rng=drop_rng)
        if not np.isfinite(loss):
            raise DivergenceError(step)
        curve.append((step, loss))
        grads = clip_by_global_norm(grads, tc.clip_norm)
        opt.step(model.params, grads)

    model.loss_curve = getattr(model, "loss_curve", []) + curve
    return model


def align_pretrain(model: Seq2SeqModel, pairs, tc: TrainConfig | None = None) -> Seq2SeqModel:
    """Alignment stage on bidirectional ID-translation pairs (2000 steps at
    lr 1e-4 unless overridden). Touches only the generator's parameters."""
    if tc is None:
        tc = TrainConfig(lr=ALIGN_LR, steps=ALIGN_STEPS)
    examples = [pair_example(src, tgt) for src, tgt in pairs]
    return train(model, examples, tc)


def save_loss_curve(model: Seq2SeqModel, path) -> None:
    """CSV export: step, loss."""
    curve = getattr(model, "loss_curve", [])
    lines = ["step,loss"] + [f"{s},{l:.10g}" for s, l in curve]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
