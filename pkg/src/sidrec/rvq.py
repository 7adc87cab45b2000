"""Residual vector quantization: multi-level codebooks over item embeddings.

Default mode fits one k-means codebook per residual level (deterministic
given the seed); the trained model maps any vector to a length-L code tuple
by greedy nearest-codeword descent. Collision resolution appends a
disambiguation index so Semantic IDs are injective per modality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedstore import EmbeddingMatrix
from .errors import ConfigError, ContractViolation, DataError

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


class UnderPopulationError(DataError):
    """Fewer distinct points than codewords at some residual level."""

    def __init__(self, level: int, distinct: int, k: int):
        self.level = level
        super().__init__(f"level {level}: {distinct} distinct points < K={k}")


@dataclass(frozen=True)
class SemanticId:
    codes: tuple[int, ...]
    dedup: int = 0

    def tokens(self) -> tuple[int, ...]:
        """Code tuple plus the disambiguation position (always length L+1)."""
        return self.codes + (self.dedup,)


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared euclidean distances, clipped at zero."""
    d = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d, 0.0)


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws after a uniform first center."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = _pairwise_sq_dists(points, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all points coincide with chosen centers; fall back to uniform
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[i] = points[idx]
        closest = np.minimum(closest, _pairwise_sq_dists(points, centers[i:i + 1])[:, 0])
    return centers


def kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_TOL,
    n_init: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a k-means++ start, best of ``n_init`` restarts.

    Ties in assignment go to the lowest index; a cluster that empties is
    re-seeded on the point farthest from its assigned center.
    """
    points = np.asarray(points, dtype=np.float64)
    if n_init > 1:
        best = None
        for _ in range(n_init):
            centers, assign = kmeans(points, k, rng, max_iter=max_iter, tol=tol, n_init=1)
            sse = float(((points - centers[assign]) ** 2).sum())
            if best is None or sse < best[0]:
                best = (sse, centers, assign)
        return best[1], best[2]
    n = points.shape[0]
    if n < k:
        raise ConfigError(f"need at least k={k} points, got {n}")
    centers = kmeans_pp_init(points, k, rng)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = _pairwise_sq_dists(points, centers)
        assign = dists.argmin(axis=1)
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            far = int(np.argmax(dists[np.arange(n), assign]))
            new_centers[empty] = points[far]
            assign[far] = empty
            dists = _pairwise_sq_dists(points, new_centers)
            counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(new_centers)
        np.add.at(sums, assign, points)
        nonzero = counts > 0
        new_centers[nonzero] = sums[nonzero] / counts[nonzero, None]
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        if shift <= tol:
            break
    assign = _pairwise_sq_dists(points, centers).argmin(axis=1)
    return centers, assign


@dataclass
class RvqModel:
    """L stacked codebooks of K codewords each, in the common code dimension."""

    levels: int
    codebook_size: int
    dim: int
    codebooks: np.ndarray  # (L, K, d) float64
    mode: str = "kmeans_rvq"
    seed: int = 0
    net: "object | None" = field(default=None, repr=False)  # rqvae-mode networks

    def __post_init__(self):
        if self.levels < 1 or self.codebook_size < 2:
            raise ConfigError("need levels >= 1 and codebook_size >= 2")
        self.codebooks = np.asarray(self.codebooks, dtype=np.float64)
        if self.codebooks.shape != (self.levels, self.codebook_size, self.dim):
            raise ConfigError(f"codebooks shape {self.codebooks.shape} != (L, K, d)")
        if not np.isfinite(self.codebooks).all():
            raise DataError("codebooks contain non-finite values")

    def encode(self, v: np.ndarray) -> SemanticId:
        codes, _ = self.encode_with_residual(v)
        return SemanticId(codes=codes)

    def encode_with_residual(self, v: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
        """Greedy per-level nearest codeword; returns (codes, final residual)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ContractViolation(f"vector shape {v.shape} != ({self.dim},)")
        if self.net is not None:
            v = self.net.encode(v)
        r = v.copy()
        codes = []
        for level in range(self.levels):
            d = ((self.codebooks[level] - r) ** 2).sum(axis=1)
            c = int(d.argmin())  # argmin ties resolve to the smallest index
            codes.append(c)
            r = r - self.codebooks[level, c]
        return tuple(codes), r

    def encode_batch(self, vectors: np.ndarray) -> list[SemanticId]:
        vectors = np.asarray(vectors, dtype=np.float64)
        if self.net is not None:
            vectors = self.net.encode(vectors)
        r = vectors.copy()
        all_codes = np.empty((vectors.shape[0], self.levels), dtype=np.int64)
        for level in range(self.levels):
            codes = _pairwise_sq_dists(r, self.codebooks[level]).argmin(axis=1)
            all_codes[:, level] = codes
            r -= self.codebooks[level, codes]
        return [SemanticId(codes=tuple(int(c) for c in row)) for row in all_codes]

    def decode(self, sid: SemanticId) -> np.ndarray:
        if len(sid.codes) != self.levels:
            raise ContractViolation(f"id has {len(sid.codes)} codes, model has {self.levels} levels")
        out = np.zeros(self.dim, dtype=np.float64)
        for level, c in enumerate(sid.codes):
            if not 0 <= c < self.codebook_size:
                raise ContractViolation(f"code {c} out of range at level {level}")
            out += self.codebooks[level, c]
        if self.net is not None:
            out = self.net.decode(out)
        return out

    def reconstruction_mse(self, vectors: np.ndarray) -> float:
        vectors = np.asarray(vectors, dtype=np.float64)
        errs = []
        for v in vectors:
            sid = self.encode(v)
            errs.append(((self.decode(sid) - v) ** 2).sum())
        return float(np.mean(errs))

    def save(self, out_dir: str | Path) -> Path:
        """JSON header + codebooks in the embedding-store binary format."""
        import json

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        header = {
            "levels": self.levels,
            "codebook_size": self.codebook_size,
            "dim": self.dim,
            "mode": self.mode,
            "seed": self.seed,
            "beta": getattr(self.net, "beta", None),
        }
        (out_dir / "rvq.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        flat = self.codebooks.reshape(self.levels * self.codebook_size, self.dim)
        (out_dir / "codebooks.bin").write_bytes(flat.astype("<f4").tobytes(order="C"))
        return out_dir / "rvq.json"

    @classmethod
    def load(cls, in_dir: str | Path) -> "RvqModel":
        import json

        in_dir = Path(in_dir)
        header = json.loads((in_dir / "rvq.json").read_text())
        raw = (in_dir / "codebooks.bin").read_bytes()
        l, k, d = header["levels"], header["codebook_size"], header["dim"]
        if len(raw) != l * k * d * 4:
            raise DataError(f"codebooks.bin size {len(raw)} != {l}x{k}x{d} f32")
        books = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(l, k, d)
        return cls(levels=l, codebook_size=k, dim=d, codebooks=books, mode=header["mode"], seed=header["seed"])


DEFAULT_N_INIT = 10


def fit(
    rows: np.ndarray | EmbeddingMatrix,
    levels: int,
    codebook_size: int,
    mode: str = "kmeans_rvq",
    seed: int = 0,
    n_init: int = DEFAULT_N_INIT,
    **rqvae_kwargs,
) -> RvqModel:
    """Fit an RVQ model. kmeans_rvq stacks per-level k-means on residuals;
    rqvae trains encoder/decoder networks around the quantizer."""
    if isinstance(rows, EmbeddingMatrix):
        rows = rows.rows64()
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ConfigError("expected a (count, dim) matrix")
    if rows.shape[0] < codebook_size:
        raise UnderPopulationError(0, rows.shape[0], codebook_size)
    if mode == "kmeans_rvq":
        return _fit_kmeans_rvq(rows, levels, codebook_size, seed, n_init=n_init)
    if mode == "rqvae":
        from .rqvae import fit_rqvae

        return fit_rqvae(rows, levels, codebook_size, seed, **rqvae_kwargs)
    raise ConfigError(f"unknown rvq mode {mode!r}")


def _fit_kmeans_rvq(rows: np.ndarray, levels: int, codebook_size: int, seed: int, n_init: int = DEFAULT_N_INIT) -> RvqModel:
    rng = np.random.default_rng(seed)
    residuals = rows.copy()
    books = np.empty((levels, codebook_size, rows.shape[1]), dtype=np.float64)
    for level in range(levels):
        distinct = np.unique(residuals, axis=0).shape[0]
        if distinct < codebook_size:
            raise UnderPopulationError(level, distinct, codebook_size)
        centers, assign = kmeans(residuals, codebook_size, rng, n_init=n_init)
        books[level] = centers
        residuals = residuals - centers[assign]
    return RvqModel(
        levels=levels,
        codebook_size=codebook_size,
        dim=rows.shape[1],
        codebooks=books,
        mode="kmeans_rvq",
        seed=seed,
    )


def assign_ids(model: RvqModel, matrix: EmbeddingMatrix, projected: np.ndarray) -> dict[str, SemanticId]:
    """Encode every item row (already projected/normalized) to a Semantic ID."""
    ids = model.encode_batch(projected)
    return dict(zip(matrix.item_ids, ids))


def resolve_collisions(ids: dict[str, SemanticId]) -> dict[str, SemanticId]:
    """Give items sharing a code tuple dedup indices 0,1,2,... in item-id
    order. The result maps items to IDs injectively."""
    by_codes: dict[tuple[int, ...], list[str]] = {}
    for item, sid in ids.items():
        by_codes.setdefault(sid.codes, []).append(item)
    out: dict[str, SemanticId] = {}
    for codes, items in by_codes.items():
        for idx, item in enumerate(sorted(items)):
            out[item] = SemanticId(codes=codes, dedup=idx)
    return {item: out[item] for item in ids}  # preserve input order
