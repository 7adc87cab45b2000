"""Length-complete beam search restricted to trie-valid continuations.

Every hypothesis tracks its trie node, so a step can only extend along
token edges that still complete to a catalog item; decoded results are
therefore always real items, trained model or not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from ..fusion import BOS
from .model import Seq2SeqModel
from .trie import ItemTrie, TrieNode

DEFAULT_BEAM = 20
DEFAULT_MAX_LEN = 20


@dataclass
class _Hyp:
    tokens: tuple[int, ...]
    logprob: float
    node: TrieNode


def beam_decode(
    model: Seq2SeqModel,
    context_tokens,
    trie: ItemTrie,
    beam: int = DEFAULT_BEAM,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[tuple[str, float]]:
    """Top-``beam`` catalog items by total sequence log-probability.

    Results are sorted by log-probability descending, ties broken by
    item id. The per-step candidate cut keeps ``beam`` hypotheses
    (finished hypotheses leave the active set).
    """
    if beam < 1:
        raise ContractViolation("beam must be >= 1")
    if trie.n_items == 0:
        raise ContractViolation("empty item trie")

    src = np.asarray(list(context_tokens), dtype=np.int64)[None, :]
    memory, enc_mask = model.encode_memory(src)

    active = [_Hyp(tokens=(), logprob=0.0, node=trie.root)]
    finished: list[tuple[str, float]] = []
    for _ in range(max_len):
        if not active:
            break
        n = len(active)
        tgt_in = np.full((n, len(active[0].tokens) + 1), 0, dtype=np.int64)
        tgt_in[:, 0] = BOS
        for i, hyp in enumerate(active):
            tgt_in[i, 1:] = hyp.tokens
        mem = np.broadcast_to(memory, (n,) + memory.shape[1:])
        msk = np.broadcast_to(enc_mask, (n,) + enc_mask.shape[1:])
        logprobs = model.logprobs_with_memory(mem, msk, tgt_in)[:, -1, :]  # (n, V)

        candidates: list[_Hyp] = []
        for i, hyp in enumerate(active):
            for token, child in hyp.node.children.items():
                candidates.append(
                    _Hyp(
                        tokens=hyp.tokens + (token,),
                        logprob=hyp.logprob + float(logprobs[i, token]),
                        node=child,
                    )
                )
        candidates.sort(key=lambda h: -h.logprob)
        kept = candidates[:beam]
        active = []
        for hyp in kept:
            if hyp.node.item is not None:
                finished.append((hyp.node.item, hyp.logprob))
            else:
                active.append(hyp)

    finished.sort(key=lambda r: (-r[1], r[0]))
    return finished[:beam]


def exhaustive_rank(model: Seq2SeqModel, context_tokens, trie: ItemTrie) -> list[tuple[str, float]]:
    """Score every catalog sequence by teacher-forced log-probability; the
    brute-force reference ranking for beam widths covering the catalog."""
    seqs = trie.sequences()
    items = sorted(seqs)
    src_row = np.asarray(list(context_tokens), dtype=np.int64)
    scored: list[tuple[str, float]] = []
    max_t = max(len(seqs[i]) for i in items)
    n = len(items)
    src = np.tile(src_row[None, :], (n, 1))
    tgt_in = np.zeros((n, max_t), dtype=np.int64)
    for i, item in enumerate(items):
        toks = seqs[item]
        tgt_in[i, 0] = BOS
        tgt_in[i, 1 : len(toks)] = toks[:-1]
    logprobs = model.decoder_logprobs(src, tgt_in)
    for i, item in enumerate(items):
        toks = seqs[item]
        total = sum(float(logprobs[i, t, tok]) for t, tok in enumerate(toks))
        scored.append((item, total))
    scored.sort(key=lambda r: (-r[1], r[0]))
    return scored
