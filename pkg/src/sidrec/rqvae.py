"""RQ-VAE mode: shallow encoder/decoder networks around the residual
quantizer, trained end-to-end with straight-through code gradients.

Loss per batch: reconstruction + codebook pull + beta * commitment, all
hand-differentiated in float64 so gradient checks against central finite
differences are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .optim import Adam

DEFAULT_BETA = 0.25


def _relu(x):
    return np.maximum(x, 0.0)


@dataclass
class Mlp2:
    """Two-layer perceptron with a ReLU hidden layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator) -> "Mlp2":
        return cls(
            w1=rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_hidden)),
            b1=np.zeros(d_hidden),
            w2=rng.normal(0.0, np.sqrt(2.0 / d_hidden), size=(d_hidden, d_out)),
            b2=np.zeros(d_out),
        )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        u = x @ self.w1 + self.b1
        h = _relu(u)
        y = h @ self.w2 + self.b2
        return y, (x, u, h)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, dy: np.ndarray, cache: tuple, grads: dict, prefix: str) -> np.ndarray:
        """Accumulate parameter grads under ``prefix``; return dL/dx."""
        x, u, h = cache
        grads[prefix + ".w2"] += h.T @ dy
        grads[prefix + ".b2"] += dy.sum(axis=0)
        dh = dy @ self.w2.T
        du = dh * (u > 0.0)
        grads[prefix + ".w1"] += x.T @ du
        grads[prefix + ".b1"] += du.sum(axis=0)
        return du @ self.w1.T

    def params(self, prefix: str) -> dict[str, np.ndarray]:
        return {prefix + ".w1": self.w1, prefix + ".b1": self.b1, prefix + ".w2": self.w2, prefix + ".b2": self.b2}


class RqvaeNet:
    """Encoder/decoder pair plus trainable codebooks."""

    def __init__(self, encoder: Mlp2, decoder: Mlp2, beta: float = DEFAULT_BETA):
        self.encoder = encoder
        self.decoder = decoder
        self.beta = beta

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder(np.asarray(x, dtype=np.float64))

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decoder(np.asarray(z, dtype=np.float64))

    def params(self) -> dict[str, np.ndarray]:
        return {**self.encoder.params("enc"), **self.decoder.params("dec")}


def _quantize_residual(z: np.ndarray, codebooks: np.ndarray):
    """Greedy residual quantization of a batch. Returns (q, codes, residuals)
    where residuals[l] is the level-l input residual."""
    levels = codebooks.shape[0]
    r = z.copy()
    q = np.zeros_like(z)
    codes = np.empty((z.shape[0], levels), dtype=np.int64)
    residuals = []
    for level in range(levels):
        residuals.append(r.copy())
        d = (
            np.einsum("ij,ij->i", r, r)[:, None]
            - 2.0 * r @ codebooks[level].T
            + np.einsum("ij,ij->i", codebooks[level], codebooks[level])[None, :]
        )
        c = d.argmin(axis=1)
        codes[:, level] = c
        chosen = codebooks[level, c]
        q += chosen
        r = r - chosen
    return q, codes, residuals


def st_losses_and_grads(net: RqvaeNet, codebooks: np.ndarray, x: np.ndarray):
    """One training step's losses and gradients (params + codebooks + input).

    Returns (total_loss, parts, grads, d_input) where grads covers encoder,
    decoder, and ``codebooks``; d_input is the straight-through gradient of
    the total loss with respect to x (used when a fusion gate feeds x).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    z, enc_cache = net.encoder.forward(x)
    q, codes, residuals = _quantize_residual(z, codebooks)
    z_q = z + (q - z)  # forward value is q; gradient treats (q - z) as constant
    x_hat, dec_cache = net.decoder.forward(z_q)

    rec = float(((x_hat - x) ** 2).sum() / n)
    levels = codebooks.shape[0]
    commit = float(((z - q) ** 2).sum() / n)  # q frozen: classic beta * ||z - sg(q)||^2
    codebook_loss = 0.0
    for level in range(levels):
        diff = residuals[level] - codebooks[level, codes[:, level]]
        codebook_loss += float((diff ** 2).sum() / n)
    total = rec + codebook_loss + net.beta * commit

    grads = {k: np.zeros_like(v) for k, v in net.params().items()}
    # reconstruction path
    d_xhat = 2.0 * (x_hat - x) / n
    d_zq = net.decoder.backward(d_xhat, dec_cache, grads, "dec")
    d_z = d_zq.copy()  # straight-through
    d_z += net.beta * 2.0 * (z - q) / n  # commitment pulls the encoder toward its codes
    d_input = net.encoder.backward(d_z, enc_cache, grads, "enc")
    d_input += -d_xhat  # x is also the reconstruction target
    # codebook pull toward (frozen) residuals
    d_books = np.zeros_like(codebooks)
    for level in range(levels):
        diff = codebooks[level, codes[:, level]] - residuals[level]
        np.add.at(d_books[level], codes[:, level], 2.0 * diff / n)
    grads["codebooks"] = d_books

    parts = {"reconstruction": rec, "codebook": codebook_loss, "commitment": commit}
    return total, parts, grads, d_input


def st_reconstruction_loss_frozen(net: RqvaeNet, x: np.ndarray, offset: np.ndarray) -> float:
    """Reconstruction loss of the straight-through surrogate with the
    quantization offset frozen; the finite-difference oracle for gradient
    checks differentiates exactly this function."""
    x = np.asarray(x, dtype=np.float64)
    z = net.encode(x)
    x_hat = net.decode(z + offset)
    return float(((x_hat - x) ** 2).sum() / x.shape[0])


def st_reconstruction_grad(net: RqvaeNet, codebooks: np.ndarray, x: np.ndarray):
    """Analytic straight-through gradient of the reconstruction loss w.r.t.
    the encoder inputs, plus the frozen offset used by the surrogate."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    z, enc_cache = net.encoder.forward(x)
    q, _, _ = _quantize_residual(z, codebooks)
    offset = q - z
    x_hat, dec_cache = net.decoder.forward(z + offset)
    scratch = {k: np.zeros_like(v) for k, v in net.params().items()}
    d_xhat = 2.0 * (x_hat - x) / n
    d_zq = net.decoder.backward(d_xhat, dec_cache, scratch, "dec")
    d_input = net.encoder.backward(d_zq, enc_cache, scratch, "enc")
    d_input += -d_xhat
    return d_input, offset


def fit_rqvae(
    rows: np.ndarray,
    levels: int,
    codebook_size: int,
    seed: int,
    beta: float = DEFAULT_BETA,
    hidden: int = 64,
    steps: int = 300,
    lr: float = 1e-3,
):
    """Train the RQ-VAE and wrap it in an RvqModel (mode='rqvae')."""
    from .rvq import RvqModel, UnderPopulationError, _fit_kmeans_rvq

    rows = np.asarray(rows, dtype=np.float64)
    d = rows.shape[1]
    distinct = np.unique(rows, axis=0).shape[0]
    if distinct < codebook_size:
        raise UnderPopulationError(0, distinct, codebook_size)
    rng = np.random.default_rng(seed)
    net = RqvaeNet(
        encoder=Mlp2.init(d, hidden, d, rng),
        decoder=Mlp2.init(d, hidden, d, rng),
        beta=beta,
    )
    # warm-start codebooks from the initial encoder geometry
    warm = _fit_kmeans_rvq(net.encode(rows), levels, codebook_size, seed)
    codebooks = warm.codebooks.copy()

    params = net.params()
    params["codebooks"] = codebooks
    opt = Adam(lr=lr)
    curve = []
    for step in range(steps):
        total, _, grads, _ = st_losses_and_grads(net, codebooks, rows)
        if not np.isfinite(total):
            raise DivergenceError(step)
        curve.append(total)
        opt.step(params, grads)

    model = RvqModel(
        levels=levels,
        codebook_size=codebook_size,
        dim=d,
        codebooks=codebooks,
        mode="rqvae",
        seed=seed,
        net=net,
    )
    model.loss_curve = curve
    return model
