"""Token-level batch assembly for next-item training and alignment pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import TrainingInstance
from ..errors import ContractViolation
from ..fusion import BOS, EOS, PAD, TokenSequence
from .model import Batch


@dataclass(frozen=True)
class SequenceExample:
    """One (source tokens -> target tokens) pair, unpadded, no BOS/EOS yet."""

    src: tuple[int, ...]
    tgt: tuple[int, ...]


def history_tokens(history, catalog_tokens: dict[str, TokenSequence]) -> tuple[int, ...]:
    """Concatenate the token sequences of the history items, oldest first."""
    out: list[int] = []
    for item in history:
        out.extend(catalog_tokens[item].tokens)
    return tuple(out)


def instance_example(inst: TrainingInstance, catalog_tokens: dict[str, TokenSequence]) -> SequenceExample:
    return SequenceExample(
        src=history_tokens(inst.history, catalog_tokens),
        tgt=tuple(catalog_tokens[inst.target].tokens),
    )


def pair_example(src_seq: TokenSequence, tgt_seq: TokenSequence) -> SequenceExample:
    return SequenceExample(src=tuple(src_seq.tokens), tgt=tuple(tgt_seq.tokens))


def make_batch(examples: list[SequenceExample]) -> Batch:
    """Right-pad sources and teacher-forced targets (BOS prefix / EOS suffix)."""
    if not examples:
        raise ContractViolation("empty batch")
    max_src = max(len(e.src) for e in examples)
    max_tgt = max(len(e.tgt) for e in examples) + 1  # room for BOS/EOS shift
    b = len(examples)
    src = np.full((b, max_src), PAD, dtype=np.int64)
    tgt_in = np.full((b, max_tgt), PAD, dtype=np.int64)
    tgt_out = np.full((b, max_tgt), PAD, dtype=np.int64)
    for i, e in enumerate(examples):
        src[i, : len(e.src)] = e.src
        tgt_in[i, 0] = BOS
        tgt_in[i, 1 : len(e.tgt) + 1] = e.tgt
        tgt_out[i, : len(e.tgt)] = e.tgt
        tgt_out[i, len(e.tgt)] = EOS
    return Batch(src=src, tgt_in=tgt_in, tgt_out=tgt_out)
