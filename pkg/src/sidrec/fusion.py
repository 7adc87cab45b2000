"""Fusing per-modality Semantic IDs into token sequences.

Early fusion blends embeddings through a sigmoid gate before quantization;
the late strategies combine already-quantized IDs: plain concatenation
(lateA), token interleaving (lateB), or modality-aware wrapping with
IMG/TXT/SEP delimiters plus bidirectional translation pairs (lateC).

Vocabulary layout: special tokens first, then one contiguous block per
modality holding level-major code tokens followed by that modality's dedup
tokens. Blocks never overlap, so token ids identify modality and level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, DataError, DegenerateInputError
from .rvq import SemanticId

SPECIALS = ("PAD", "BOS", "EOS", "IMG", "TXT", "SEP")
PAD, BOS, EOS, IMG, TXT, SEP = range(6)

LAYOUTS = ("unimodal", "early", "lateA", "lateB", "lateC", "alignment")


def expected_length(layout: str, levels: int) -> int:
    per_id = levels + 1  # codes plus the dedup position
    if layout in ("unimodal", "early"):
        return per_id
    if layout in ("lateA", "lateB"):
        return 2 * per_id
    if layout == "lateC":
        return 2 * per_id + 3
    if layout == "alignment":
        return per_id + 1  # modality marker plus one ID
    raise ConfigError(f"unknown layout {layout!r}")


@dataclass(frozen=True)
class Vocabulary:
    levels: int
    codebook_size: int
    modalities: tuple[str, ...]
    dedup_sizes: tuple[int, ...]  # parallel to modalities

    def __post_init__(self):
        if len(self.modalities) != len(set(self.modalities)):
            raise ConfigError("duplicate modalities in vocabulary")
        if len(self.dedup_sizes) != len(self.modalities):
            raise ConfigError("dedup_sizes must parallel modalities")

    @classmethod
    def for_ids(
        cls,
        ids_by_modality: dict[str, dict[str, SemanticId]],
        levels: int,
        codebook_size: int,
    ) -> "Vocabulary":
        mods = tuple(ids_by_modality)
        dedups = tuple(
            max((sid.dedup for sid in ids.values()), default=0) + 1 for ids in ids_by_modality.values()
        )
        return cls(levels=levels, codebook_size=codebook_size, modalities=mods, dedup_sizes=dedups)

    def _block(self, modality: str) -> tuple[int, int]:
        """(base, dedup_size) of a modality's token block."""
        base = len(SPECIALS)
        for m, ded in zip(self.modalities, self.dedup_sizes):
            if m == modality:
                return base, ded
            base += self.levels * self.codebook_size + ded
        raise ConfigError(f"modality {modality!r} not in vocabulary {self.modalities}")

    @property
    def size(self) -> int:
        return len(SPECIALS) + sum(
            self.levels * self.codebook_size + ded for ded in self.dedup_sizes
        )

    def code_token(self, modality: str, level: int, code: int) -> int:
        if not 0 <= level < self.levels:
            raise ContractViolation(f"level {level} out of range")
        if not 0 <= code < self.codebook_size:
            raise ContractViolation(f"code {code} out of range")
        base, _ = self._block(modality)
        return base + level * self.codebook_size + code

    def dedup_token(self, modality: str, dedup: int) -> int:
        base, ded = self._block(modality)
        if not 0 <= dedup < ded:
            raise ContractViolation(f"dedup index {dedup} outside block of size {ded}")
        return base + self.levels * self.codebook_size + dedup

    def id_tokens(self, modality: str, sid: SemanticId) -> tuple[int, ...]:
        """L code tokens plus the dedup token: one token per ID position."""
        if len(sid.codes) != self.levels:
            raise ContractViolation(f"ID has {len(sid.codes)} codes, vocabulary expects {self.levels}")
        toks = tuple(self.code_token(modality, lv, c) for lv, c in enumerate(sid.codes))
        return toks + (self.dedup_token(modality, sid.dedup),)

    def describe(self, token: int) -> tuple[str, object]:
        """Provenance of a token id: ('special', name), (modality, level) or
        (modality, 'dedup')."""
        if 0 <= token < len(SPECIALS):
            return ("special", SPECIALS[token])
        base = len(SPECIALS)
        for m, ded in zip(self.modalities, self.dedup_sizes):
            span = self.levels * self.codebook_size
            if base <= token < base + span:
                return (m, (token - base) // self.codebook_size)
            if base + span <= token < base + span + ded:
                return (m, "dedup")
            base += span + ded
        raise ContractViolation(f"token {token} outside vocabulary of size {self.size}")

    def decode_id(self, modality: str, tokens: tuple[int, ...]) -> SemanticId:
        """Inverse of id_tokens."""
        if len(tokens) != self.levels + 1:
            raise ContractViolation(f"expected {self.levels + 1} tokens, got {len(tokens)}")
        base, ded = self._block(modality)
        codes = []
        for lv, t in enumerate(tokens[:-1]):
            code = t - base - lv * self.codebook_size
            if not 0 <= code < self.codebook_size:
                raise ContractViolation(f"token {t} is not a level-{lv} {modality} code")
            codes.append(code)
        dedup = tokens[-1] - base - self.levels * self.codebook_size
        if not 0 <= dedup < ded:
            raise ContractViolation(f"token {tokens[-1]} is not a {modality} dedup token")
        return SemanticId(codes=tuple(codes), dedup=dedup)

    def to_json(self) -> dict:
        return {
            "levels": self.levels,
            "codebook_size": self.codebook_size,
            "modalities": list(self.modalities),
            "dedup_sizes": list(self.dedup_sizes),
            "specials": {name: i for i, name in enumerate(SPECIALS)},
            "size": self.size,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        return cls(
            levels=data["levels"],
            codebook_size=data["codebook_size"],
            modalities=tuple(data["modalities"]),
            dedup_sizes=tuple(data["dedup_sizes"]),
        )


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[int, ...]
    layout: str
    provenance: tuple[tuple[str, object], ...]

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        if len(self.tokens) != len(self.provenance):
            raise ContractViolation("provenance must parallel tokens")

    def __len__(self) -> int:
        return len(self.tokens)


def _seq(tokens, layout, vocab: Vocabulary) -> TokenSequence:
    tokens = tuple(int(t) for t in tokens)
    if len(tokens) != expected_length(layout, vocab.levels):
        raise ContractViolation(
            f"{layout} sequence must have {expected_length(layout, vocab.levels)} tokens, got {len(tokens)}"
        )
    prov = tuple(vocab.describe(t) for t in tokens)
    return TokenSequence(tokens=tokens, layout=layout, provenance=prov)


def unimodal_sequence(sid: SemanticId, vocab: Vocabulary, modality: str, layout: str = "unimodal") -> TokenSequence:
    if layout not in ("unimodal", "early"):
        raise ConfigError("single-ID sequences are layout 'unimodal' or 'early'")
    return _seq(vocab.id_tokens(modality, sid), layout, vocab)


def concat_ids(
    s_img: SemanticId,
    s_t: SemanticId,
    vocab: Vocabulary,
    img: str = "image",
    txt: str = "text",
) -> TokenSequence:
    """Late fusion A: image-modality tokens then text-modality tokens."""
    return _seq(vocab.id_tokens(img, s_img) + vocab.id_tokens(txt, s_t), "lateA", vocab)


def interleave_ids(
    s_img: SemanticId,
    s_t: SemanticId,
    vocab: Vocabulary,
    img: str = "image",
    txt: str = "text",
) -> TokenSequence:
    """Late fusion B: alternate image/text tokens position by position."""
    a = vocab.id_tokens(img, s_img)
    b = vocab.id_tokens(txt, s_t)
    if len(a) != len(b):
        raise ContractViolation("interleave requires equal-length IDs")
    tokens = [t for pair in zip(a, b) for t in pair]
    return _seq(tokens, "lateB", vocab)


def deinterleave(seq: TokenSequence, vocab: Vocabulary, img: str = "image", txt: str = "text"):
    """Inverse of interleave_ids; returns (s_img, s_t)."""
    if len(seq.tokens) % 2 != 0:
        raise ContractViolation("interleaved sequence must have even length")
    a = seq.tokens[0::2]
    b = seq.tokens[1::2]
    return vocab.decode_id(img, a), vocab.decode_id(txt, b)


def wrap_modality_aware(
    s_img: SemanticId,
    s_t: SemanticId,
    vocab: Vocabulary,
    img: str = "image",
    txt: str = "text",
) -> TokenSequence:
    """Late fusion C: [IMG, image ID, SEP, TXT, text ID]."""
    tokens = (IMG,) + vocab.id_tokens(img, s_img) + (SEP, TXT) + vocab.id_tokens(txt, s_t)
    return _seq(tokens, "lateC", vocab)


def unwrap_modality_aware(seq: TokenSequence, vocab: Vocabulary, img: str = "image", txt: str = "text"):
    """Strip delimiters of a lateC sequence; returns (s_img, s_t)."""
    per = vocab.levels + 1
    if len(seq.tokens) != 2 * per + 3:
        raise ContractViolation("not a lateC sequence")
    if seq.tokens[0] != IMG or seq.tokens[per + 1] != SEP or seq.tokens[per + 2] != TXT:
        raise ContractViolation("lateC delimiters missing or misplaced")
    return (
        vocab.decode_id(img, seq.tokens[1:per + 1]),
        vocab.decode_id(txt, seq.tokens[per + 3:]),
    )


def make_alignment_pairs(
    ids_img: dict[str, SemanticId],
    ids_txt: dict[str, SemanticId],
    vocab: Vocabulary,
    img: str = "image",
    txt: str = "text",
) -> list[tuple[TokenSequence, TokenSequence]]:
    """Bidirectional translation pairs per item:
    [IMG, image ID] -> [TXT, text ID] and the reverse. Two pairs per item."""
    missing = sorted(set(ids_img) ^ set(ids_txt))
    if missing:
        raise DataError(f"items missing a modality ID: {missing}")
    pairs = []
    for item in ids_img:
        src = _seq((IMG,) + vocab.id_tokens(img, ids_img[item]), "alignment", vocab)
        tgt = _seq((TXT,) + vocab.id_tokens(txt, ids_txt[item]), "alignment", vocab)
        pairs.append((src, tgt))
        pairs.append((tgt, src))
    return pairs


# ---------------------------------------------------------------- gating


class ConstantGate:
    """Fixed elementwise blend weight; the degenerate gate for kmeans_rvq
    runs where no training signal reaches the gate."""

    def __init__(self, dim: int, alpha: float = 0.5):
        if not 0.0 < alpha < 1.0:
            raise ConfigError("constant gate alpha must lie strictly in (0, 1)")
        self.dim = dim
        self._alpha = alpha

    def alpha(self, e_t: np.ndarray, e_img: np.ndarray) -> np.ndarray:
        return np.full(np.broadcast(e_t, e_img).shape, self._alpha, dtype=np.float64)


class GateNetwork:
    """Shallow MLP gate: hidden rectifier layer (2d -> d), sigmoid output (d -> d)."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.dim = w2.shape[1]

    @classmethod
    def init(cls, dim: int, seed: int, scale: float = 0.1) -> "GateNetwork":
        rng = np.random.default_rng(seed)
        return cls(
            w1=scale * rng.normal(size=(2 * dim, dim)),
            b1=np.zeros(dim),
            w2=scale * rng.normal(size=(dim, dim)),
            b2=np.zeros(dim),
        )

    @classmethod
    def zeros(cls, dim: int) -> "GateNetwork":
        return cls(np.zeros((2 * dim, dim)), np.zeros(dim), np.zeros((dim, dim)), np.zeros(dim))

    def params(self) -> dict[str, np.ndarray]:
        return {"gate.w1": self.w1, "gate.b1": self.b1, "gate.w2": self.w2, "gate.b2": self.b2}

    def forward(self, e_t: np.ndarray, e_img: np.ndarray):
        u = np.concatenate([e_t, e_img], axis=-1)
        pre_h = u @ self.w1 + self.b1
        h = np.maximum(pre_h, 0.0)
        s = h @ self.w2 + self.b2
        a = 1.0 / (1.0 + np.exp(-s))
        return a, (u, pre_h, h, a)

    def alpha(self, e_t: np.ndarray, e_img: np.ndarray) -> np.ndarray:
        return self.forward(e_t, e_img)[0]

    def backward(self, d_alpha: np.ndarray, cache, grads: dict) -> None:
        """Accumulate parameter grads for batched inputs (n, 2d)."""
        u, pre_h, h, a = cache
        ds = d_alpha * a * (1.0 - a)
        grads["gate.w2"] += h.T @ ds
        grads["gate.b2"] += ds.sum(axis=0)
        dh = ds @ self.w2.T
        dpre = dh * (pre_h > 0.0)
        grads["gate.w1"] += u.T @ dpre
        grads["gate.b1"] += dpre.sum(axis=0)


def early_fuse(e_t: np.ndarray, e_img: np.ndarray, gate) -> np.ndarray:
    """Gated convex blend of two unit vectors, re-normalized to unit length."""
    e_t = np.asarray(e_t, dtype=np.float64)
    e_img = np.asarray(e_img, dtype=np.float64)
    if e_t.shape != e_img.shape:
        raise ContractViolation(f"modality dims differ: {e_t.shape} vs {e_img.shape}")
    a = gate.alpha(e_t, e_img)
    blend = a * e_t + (1.0 - a) * e_img
    if blend.ndim == 1:
        n = float(np.linalg.norm(blend))
        if n == 0.0:
            raise DegenerateInputError("gated blend is the zero vector")
        return blend / n
    norms = np.linalg.norm(blend, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.argwhere(norms[..., 0] == 0.0)[0][0])
        raise DegenerateInputError(f"gated blend is the zero vector at row {bad}")
    return blend / norms


def fit_gated_rqvae(
    e_t: np.ndarray,
    e_img: np.ndarray,
    levels: int,
    codebook_size: int,
    seed: int,
    beta: float = 0.25,
    hidden: int = 64,
    steps: int = 300,
    lr: float = 1e-3,
):
    """Train gate and RQ-VAE jointly on the fused-vector reconstruction
    objective; returns (RvqModel in rqvae mode, trained GateNetwork).

    The fused vector is both quantizer input and reconstruction target, so
    gate gradients flow through the straight-through estimator and the
    normalization.
    """
    from .optim import Adam
    from .rqvae import Mlp2, RqvaeNet, st_losses_and_grads
    from .rvq import RvqModel, UnderPopulationError, _fit_kmeans_rvq

    e_t = np.asarray(e_t, dtype=np.float64)
    e_img = np.asarray(e_img, dtype=np.float64)
    d = e_t.shape[1]
    rng = np.random.default_rng(seed)
    gate = GateNetwork.init(d, seed=seed + 1)
    net = RqvaeNet(encoder=Mlp2.init(d, hidden, d, rng), decoder=Mlp2.init(d, hidden, d, rng), beta=beta)

    fused0 = early_fuse(e_t, e_img, gate)
    distinct = np.unique(fused0, axis=0).shape[0]
    if distinct < codebook_size:
        raise UnderPopulationError(0, distinct, codebook_size)
    codebooks = _fit_kmeans_rvq(net.encode(fused0), levels, codebook_size, seed).codebooks.copy()

    params = {**net.params(), **gate.params(), "codebooks": codebooks}
    opt = Adam(lr=lr)
    curve = []
    for _ in range(steps):
        a, gcache = gate.forward(e_t, e_img)
        blend = a * e_t + (1.0 - a) * e_img
        norms = np.linalg.norm(blend, axis=-1, keepdims=True)
        if np.any(norms == 0.0):
            raise DegenerateInputError("gated blend collapsed to zero during training")
        z_in = blend / norms

        total, _, grads, d_input = st_losses_and_grads(net, codebooks, z_in)
        curve.append(total)
        for k in gate.params():
            grads[k] = np.zeros_like(params[k])
        # z_in is input AND target: st_losses_and_grads already folds both paths
        # into d_input; push it back through normalization and the gate.
        dot = (d_input * z_in).sum(axis=-1, keepdims=True)
        d_blend = (d_input - z_in * dot) / norms
        d_alpha = d_blend * (e_t - e_img)
        gate.backward(d_alpha, gcache, grads)
        opt.step(params, grads)

    model = RvqModel(
        levels=levels, codebook_size=codebook_size, dim=d, codebooks=codebooks,
        mode="rqvae", seed=seed, net=net,
    )
    model.loss_curve = curve
    return model, gate
