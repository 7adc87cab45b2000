"""Encoder-decoder sequence model in plain NumPy with hand-written backprop.

Pre-LN blocks, multi-head attention, ReLU feed-forward, shared token
embedding, sinusoidal positions, and a linear output head. Parameters live
in one flat name->array dict (float64) so the finite-difference gradient
check can perturb any coordinate. Shapes: (B, T, D) activations,
(B, h, T, d) attention heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractViolation

PAD_ID = 0  # matches fusion.PAD

NEG_INF = -1e30


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    width: int = 128
    heads: int = 4
    ff_width: int = 512
    enc_layers: int = 2
    dec_layers: int = 2
    max_positions: int = 256
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ConfigError(f"width {self.width} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.vocab_size < 2 or self.max_positions < 1:
            raise ConfigError("vocab_size >= 2 and max_positions >= 1 required")


@dataclass
class Batch:
    """Teacher-forced batch; PAD-padded int arrays."""

    src: np.ndarray      # (B, Ts)
    tgt_in: np.ndarray   # (B, Tt), starts with BOS
    tgt_out: np.ndarray  # (B, Tt), ends with EOS; PAD ignored by the loss


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, 2 * (i // 2) / d)
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


def _he(rng, d_in, d_out):
    return rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out))


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x - mu) / sigma
    return xhat * g + b, (xhat, sigma, g)


def _layer_norm_bwd(dy, cache, grads, prefix):
    xhat, sigma, g = cache
    ghat = dy * g
    m1 = ghat.mean(axis=-1, keepdims=True)
    m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
    dx = (ghat - m1 - xhat * m2) / sigma
    axes = tuple(range(dy.ndim - 1))
    grads[prefix + ".g"] += (dy * xhat).sum(axis=axes)
    grads[prefix + ".b"] += dy.sum(axis=axes)
    return dx


class Seq2SeqModel:
    """Trainable next-token generator over Semantic-ID token sequences."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        D, F, V = config.width, config.ff_width, config.vocab_size
        p: dict[str, np.ndarray] = {"emb": rng.normal(0.0, 0.02, size=(V, D))}
        for i in range(config.enc_layers):
            self._init_block(p, f"enc{i}", rng, D, F, cross=False)
        p["enc_ln.g"], p["enc_ln.b"] = np.ones(D), np.zeros(D)
        for i in range(config.dec_layers):
            self._init_block(p, f"dec{i}", rng, D, F, cross=True)
        p["dec_ln.g"], p["dec_ln.b"] = np.ones(D), np.zeros(D)
        p["head.w"] = rng.normal(0.0, np.sqrt(1.0 / D), size=(D, V))
        p["head.b"] = np.zeros(V)
        self.params = p
        self.positions = sinusoidal_positions(config.max_positions, D)

    @staticmethod
    def _init_block(p, name, rng, D, F, cross: bool):
        attns = ["self", "cross"] if cross else ["self"]
        for j, attn in enumerate(attns, start=1):
            p[f"{name}.ln{j}.g"], p[f"{name}.ln{j}.b"] = np.ones(D), np.zeros(D)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"{name}.{attn}.{w}"] = _he(rng, D, D)
        j = len(attns) + 1
        p[f"{name}.ln{j}.g"], p[f"{name}.ln{j}.b"] = np.ones(D), np.zeros(D)
        p[f"{name}.ff.w1"], p[f"{name}.ff.b1"] = _he(rng, D, F), np.zeros(F)
        p[f"{name}.ff.w2"], p[f"{name}.ff.b2"] = _he(rng, F, D), np.zeros(D)

    # ------------------------------------------------------------- info

    @property
    def param_count(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def clone(self) -> "Seq2SeqModel":
        other = Seq2SeqModel.__new__(Seq2SeqModel)
        other.config = self.config
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.positions = self.positions
        return other

    # ------------------------------------------------------------ pieces

    def _attention(self, prefix, x, kv, mask):
        """mask: (B, 1, Tq, Tk) additive or None. Returns (out, cache)."""
        p = self.params
        h = self.config.heads
        B, Tq, D = x.shape
        Tk = kv.shape[1]
        d = D // h
        q = (x @ p[prefix + ".wq"]).reshape(B, Tq, h, d).transpose(0, 2, 1, 3)
        k = (kv @ p[prefix + ".wk"]).reshape(B, Tk, h, d).transpose(0, 2, 1, 3)
        v = (kv @ p[prefix + ".wv"]).reshape(B, Tk, h, d).transpose(0, 2, 1, 3)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(d)  # (B,h,Tq,Tk)
        if mask is not None:
            scores = scores + mask
        attn = _softmax(scores)
        ctx = attn @ v  # (B,h,Tq,d)
        merged = ctx.transpose(0, 2, 1, 3).reshape(B, Tq, D)
        out = merged @ p[prefix + ".wo"]
        return out, (x, kv, q, k, v, attn, merged)

    def _attention_bwd(self, prefix, dout, cache, grads):
        p = self.params
        x, kv, q, k, v, attn, merged = cache
        B, Tq, D = x.shape
        h = self.config.heads
        d = D // h
        grads[prefix + ".wo"] += merged.reshape(B * Tq, D).T @ dout.reshape(B * Tq, D)
        dmerged = dout @ p[prefix + ".wo"].T
        dctx = dmerged.reshape(B, Tq, h, d).transpose(0, 2, 1, 3)
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        rowdot = (dattn * attn).sum(axis=-1, keepdims=True)
        dscores = (dattn - rowdot) * attn / np.sqrt(d)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        Tk = kv.shape[1]
        dq_lin = dq.transpose(0, 2, 1, 3).reshape(B, Tq, D)
        dk_lin = dk.transpose(0, 2, 1, 3).reshape(B, Tk, D)
        dv_lin = dv.transpose(0, 2, 1, 3).reshape(B, Tk, D)
        grads[prefix + ".wq"] += x.reshape(B * Tq, D).T @ dq_lin.reshape(B * Tq, D)
        grads[prefix + ".wk"] += kv.reshape(B * Tk, D).T @ dk_lin.reshape(B * Tk, D)
        grads[prefix + ".wv"] += kv.reshape(B * Tk, D).T @ dv_lin.reshape(B * Tk, D)
        dx = dq_lin @ p[prefix + ".wq"].T
        dkv = dk_lin @ p[prefix + ".wk"].T + dv_lin @ p[prefix + ".wv"].T
        return dx, dkv

    def _ffn(self, prefix, x):
        p = self.params
        u = x @ p[prefix + ".w1"] + p[prefix + ".b1"]
        hdn = np.maximum(u, 0.0)
        y = hdn @ p[prefix + ".w2"] + p[prefix + ".b2"]
        return y, (x, u, hdn)

    def _ffn_bwd(self, prefix, dy, cache, grads):
        p = self.params
        x, u, hdn = cache
        B, T, F = u.shape
        D = x.shape[-1]
        grads[prefix + ".w2"] += hdn.reshape(B * T, F).T @ dy.reshape(B * T, D)
        grads[prefix + ".b2"] += dy.sum(axis=(0, 1))
        dh = dy @ p[prefix + ".w2"].T
        du = dh * (u > 0.0)
        grads[prefix + ".w1"] += x.reshape(B * T, D).T @ du.reshape(B * T, F)
        grads[prefix + ".b1"] += du.sum(axis=(0, 1))
        return du @ p[prefix + ".w1"].T

    def _dropout(self, x, rng):
        rate = self.config.dropout
        if rng is None or rate == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
        return x * keep, keep

    @staticmethod
    def _dropout_bwd(dy, keep):
        return dy if keep is None else dy * keep

    # ----------------------------------------------------------- forward

    def _encode_fwd(self, src: np.ndarray, rng):
        cfg = self.config
        p = self.params
        src = np.asarray(src, dtype=np.int64)
        Ts = src.shape[1]
        if Ts > cfg.max_positions:
            raise ConfigError(f"source length {Ts} exceeds max_positions {cfg.max_positions}")
        src_pad = src == PAD_ID
        enc_mask = np.where(src_pad[:, None, None, :], NEG_INF, 0.0)  # (B,1,1,Ts)

        x = p["emb"][src] + self.positions[:Ts]
        x, kx = self._dropout(x, rng)
        enc_caches = []
        for i in range(cfg.enc_layers):
            name = f"enc{i}"
            xn, c_ln1 = _layer_norm(x, p[name + ".ln1.g"], p[name + ".ln1.b"])
            a, c_att = self._attention(name + ".self", xn, xn, enc_mask)
            a, ka = self._dropout(a, rng)
            x1 = x + a
            x1n, c_ln2 = _layer_norm(x1, p[name + ".ln2.g"], p[name + ".ln2.b"])
            f, c_ff = self._ffn(name + ".ff", x1n)
            f, kf = self._dropout(f, rng)
            x = x1 + f
            enc_caches.append((c_ln1, c_att, ka, c_ln2, c_ff, kf))
        memory, c_encln = _layer_norm(x, p["enc_ln.g"], p["enc_ln.b"])
        return memory, enc_mask, (src, kx, enc_caches, c_encln)

    def _decode_fwd(self, memory: np.ndarray, cross_mask: np.ndarray, tgt_in: np.ndarray, rng):
        cfg = self.config
        p = self.params
        tgt_in = np.asarray(tgt_in, dtype=np.int64)
        Tt = tgt_in.shape[1]
        if Tt > cfg.max_positions:
            raise ConfigError(f"target length {Tt} exceeds max_positions {cfg.max_positions}")
        causal = np.triu(np.full((Tt, Tt), NEG_INF), k=1)[None, None]
        tgt_pad = tgt_in == PAD_ID
        dec_mask = causal + np.where(tgt_pad[:, None, None, :], NEG_INF, 0.0)

        y = p["emb"][tgt_in] + self.positions[:Tt]
        y, ky = self._dropout(y, rng)
        dec_caches = []
        for i in range(cfg.dec_layers):
            name = f"dec{i}"
            yn, c_ln1 = _layer_norm(y, p[name + ".ln1.g"], p[name + ".ln1.b"])
            a, c_self = self._attention(name + ".self", yn, yn, dec_mask)
            a, ka = self._dropout(a, rng)
            y1 = y + a
            y1n, c_ln2 = _layer_norm(y1, p[name + ".ln2.g"], p[name + ".ln2.b"])
            cr, c_cross = self._attention(name + ".cross", y1n, memory, cross_mask)
            cr, kc = self._dropout(cr, rng)
            y2 = y1 + cr
            y2n, c_ln3 = _layer_norm(y2, p[name + ".ln3.g"], p[name + ".ln3.b"])
            f, c_ff = self._ffn(name + ".ff", y2n)
            f, kf = self._dropout(f, rng)
            y = y2 + f
            dec_caches.append((c_ln1, c_self, ka, c_ln2, c_cross, kc, c_ln3, c_ff, kf))
        dec_out, c_decln = _layer_norm(y, p["dec_ln.g"], p["dec_ln.b"])
        logits = dec_out @ p["head.w"] + p["head.b"]
        return logits, (tgt_in, ky, dec_caches, c_decln, dec_out)

    def forward(self, src: np.ndarray, tgt_in: np.ndarray, rng: np.random.Generator | None = None):
        """Teacher-forced forward pass. Returns (logits (B,Tt,V), cache)."""
        memory, enc_mask, enc_pack = self._encode_fwd(src, rng)
        logits, dec_pack = self._decode_fwd(memory, enc_mask, tgt_in, rng)
        src, kx, enc_caches, c_encln = enc_pack
        tgt_in, ky, dec_caches, c_decln, dec_out = dec_pack
        cache = (src, tgt_in, kx, enc_caches, c_encln, memory, ky, dec_caches, c_decln, dec_out)
        return logits, cache

    # -------------------------------------------------------------- loss

    def loss_and_grads(self, batch: Batch, rng: np.random.Generator | None = None):
        """Mean cross-entropy over non-PAD target tokens, plus full gradients."""
        logits, cache = self.forward(batch.src, batch.tgt_in, rng=rng)
        tgt_out = np.asarray(batch.tgt_out, dtype=np.int64)
        B, Tt, V = logits.shape
        mask = tgt_out != PAD_ID
        n_tok = int(mask.sum())
        if n_tok == 0:
            raise ContractViolation("batch has no non-PAD target tokens")

        zmax = logits.max(axis=-1, keepdims=True)
        lse = zmax[..., 0] + np.log(np.exp(logits - zmax).sum(axis=-1))
        picked = np.take_along_axis(logits, tgt_out[..., None], axis=-1)[..., 0]
        loss = float(((lse - picked) * mask).sum() / n_tok)

        probs = _softmax(logits)
        dlogits = probs
        np.subtract.at(dlogits.reshape(B * Tt, V), (np.arange(B * Tt), tgt_out.reshape(-1)), 1.0)
        dlogits *= (mask[..., None] / n_tok)

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._backward(dlogits, cache, grads)
        return loss, grads

    def loss(self, batch: Batch) -> float:
        logits, _ = self.forward(batch.src, batch.tgt_in)
        tgt_out = np.asarray(batch.tgt_out, dtype=np.int64)
        mask = tgt_out != PAD_ID
        n_tok = int(mask.sum())
        if n_tok == 0:
            raise ContractViolation("batch has no non-PAD target tokens")
        zmax = logits.max(axis=-1, keepdims=True)
        lse = zmax[..., 0] + np.log(np.exp(logits - zmax).sum(axis=-1))
        picked = np.take_along_axis(logits, tgt_out[..., None], axis=-1)[..., 0]
        return float(((lse - picked) * mask).sum() / n_tok)

    def _backward(self, dlogits, cache, grads):
        p = self.params
        cfg = self.config
        src, tgt_in, kx, enc_caches, c_encln, memory, ky, dec_caches, c_decln, dec_out = cache
        B, Tt, V = dlogits.shape
        D = cfg.width

        grads["head.w"] += dec_out.reshape(B * Tt, D).T @ dlogits.reshape(B * Tt, V)
        grads["head.b"] += dlogits.sum(axis=(0, 1))
        dy = _layer_norm_bwd(dlogits @ p["head.w"].T, c_decln, grads, "dec_ln")

        dmem_total = np.zeros_like(memory)
        for i in reversed(range(cfg.dec_layers)):
            name = f"dec{i}"
            c_ln1, c_self, ka, c_ln2, c_cross, kc, c_ln3, c_ff, kf = dec_caches[i]
            dy2 = dy.copy()
            df = self._dropout_bwd(dy, kf)
            dy2n = self._ffn_bwd(name + ".ff", df, c_ff, grads)
            dy2 += _layer_norm_bwd(dy2n, c_ln3, grads, name + ".ln3")
            dy1 = dy2.copy()
            dcr = self._dropout_bwd(dy2, kc)
            dy1n, dmem = self._attention_bwd(name + ".cross", dcr, c_cross, grads)
            dmem_total += dmem
            dy1 += _layer_norm_bwd(dy1n, c_ln2, grads, name + ".ln2")
            dy0 = dy1.copy()
            da = self._dropout_bwd(dy1, ka)
            dyn, dyn_kv = self._attention_bwd(name + ".self", da, c_self, grads)
            dy0 += _layer_norm_bwd(dyn + dyn_kv, c_ln1, grads, name + ".ln1")
            dy = dy0
        dy = self._dropout_bwd(dy, ky)
        np.add.at(grads["emb"], tgt_in.reshape(-1), dy.reshape(-1, D))

        dx = _layer_norm_bwd(dmem_total, c_encln, grads, "enc_ln")
        for i in reversed(range(cfg.enc_layers)):
            name = f"enc{i}"
            c_ln1, c_att, ka, c_ln2, c_ff, kf = enc_caches[i]
            dx1 = dx.copy()
            df = self._dropout_bwd(dx, kf)
            dx1n = self._ffn_bwd(name + ".ff", df, c_ff, grads)
            dx1 += _layer_norm_bwd(dx1n, c_ln2, grads, name + ".ln2")
            dx0 = dx1.copy()
            da = self._dropout_bwd(dx1, ka)
            dxn, dxn_kv = self._attention_bwd(name + ".self", da, c_att, grads)
            dx0 += _layer_norm_bwd(dxn + dxn_kv, c_ln1, grads, name + ".ln1")
            dx = dx0
        dx = self._dropout_bwd(dx, kx)
        np.add.at(grads["emb"], src.reshape(-1), dx.reshape(-1, D))

    # ------------------------------------------------------------ decode

    def encode_memory(self, src: np.ndarray):
        """Inference helper: encoder memory plus its attention mask."""
        memory, enc_mask, _ = self._encode_fwd(src, rng=None)
        return memory, enc_mask

    def logprobs_with_memory(self, memory: np.ndarray, enc_mask: np.ndarray, tgt_in: np.ndarray) -> np.ndarray:
        """Log-softmax over the vocabulary at every decoder position, reusing
        precomputed encoder memory (the beam-search hot path)."""
        logits, _ = self._decode_fwd(memory, enc_mask, tgt_in, rng=None)
        zmax = logits.max(axis=-1, keepdims=True)
        lse = zmax + np.log(np.exp(logits - zmax).sum(axis=-1, keepdims=True))
        return logits - lse

    def decoder_logprobs(self, src: np.ndarray, tgt_in: np.ndarray) -> np.ndarray:
        """Log-softmax over the vocabulary at every decoder position."""
        memory, enc_mask = self.encode_memory(src)
        return self.logprobs_with_memory(memory, enc_mask, tgt_in)


def init_model(config: ModelConfig) -> Seq2SeqModel:
    """Deterministic initialization from the config seed."""
    return Seq2SeqModel(config)
