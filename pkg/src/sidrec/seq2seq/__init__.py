"""Trainable generator over Semantic-ID token sequences."""

from .beam import DEFAULT_BEAM, DEFAULT_MAX_LEN, beam_decode, exhaustive_rank
from .data import SequenceExample, history_tokens, instance_example, make_batch, pair_example
from .model import Batch, ModelConfig, Seq2SeqModel, init_model
from .train import ALIGN_LR, ALIGN_STEPS, TrainConfig, align_pretrain, save_loss_curve, train
from .trie import ItemTrie, build_item_trie

__all__ = [
    "ALIGN_LR",
    "ALIGN_STEPS",
    "Batch",
    "DEFAULT_BEAM",
    "DEFAULT_MAX_LEN",
    "ItemTrie",
    "ModelConfig",
    "Seq2SeqModel",
    "SequenceExample",
    "TrainConfig",
    "align_pretrain",
    "beam_decode",
    "build_item_trie",
    "exhaustive_rank",
    "history_tokens",
    "init_model",
    "instance_example",
    "make_batch",
    "pair_example",
    "save_loss_curve",
    "train",
]
