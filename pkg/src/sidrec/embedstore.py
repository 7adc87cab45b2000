"""Portable storage for per-modality item embedding matrices.

Directory layout: ``manifest.json`` (version, modality, encoder, dim, count,
dtype, byte order, item ids) next to ``data.bin`` holding row-major float32
little-endian values. Rows are kept float32 in memory so a write/read
round-trip is bit-exact; numerical code upcasts to float64 at the point of
use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateInputError

MODALITIES = ("text", "image", "ocr_text")

MANIFEST_NAME = "manifest.json"
DATA_NAME = "data.bin"


@dataclass
class EmbeddingMatrix:
    """One row of content features per item, for a single modality."""

    modality: str
    encoder_name: str
    item_ids: list[str]
    rows: np.ndarray  # (count, dim) float32
    extra: dict = field(default_factory=dict)  # free-form manifest metadata

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DataError(f"unknown modality {self.modality!r}, expected one of {MODALITIES}")
        self.rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise DataError(f"rows must be a (count, dim) matrix with dim > 0, got shape {self.rows.shape}")
        if len(self.item_ids) != self.rows.shape[0]:
            raise DataError(f"{len(self.item_ids)} item ids for {self.rows.shape[0]} rows")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise DataError("item ids are not unique")
        if not np.isfinite(self.rows).all():
            raise DataError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    def rows64(self) -> np.ndarray:
        """Float64 view for numerical work (copy; rows themselves stay f32)."""
        return self.rows.astype(np.float64)

    def row_for(self, item_id: str) -> np.ndarray:
        return self.rows[self.item_ids.index(item_id)]


def write_matrix(m: EmbeddingMatrix, out_dir: str | Path) -> Path:
    """Write manifest + data files; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "modality": m.modality,
        "encoder": m.encoder_name,
        "dim": int(m.dim),
        "count": int(m.count),
        "dtype": "f32",
        "byte_order": "little",
        "item_ids": list(m.item_ids),
    }
    manifest.update(m.extra)
    data = m.rows.astype("<f4", copy=False)
    (out_dir / DATA_NAME).write_bytes(data.tobytes(order="C"))
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def read_matrix(in_dir: str | Path) -> EmbeddingMatrix:
    """Load a matrix directory, validating manifest/data integrity."""
    in_dir = Path(in_dir)
    manifest_path = in_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"missing {MANIFEST_NAME} in {in_dir}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"unparseable manifest {manifest_path}: {e}") from e
    for key in ("modality", "encoder", "dim", "count", "item_ids"):
        if key not in manifest:
            raise DataError(f"manifest {manifest_path} missing key {key!r}")
    if manifest.get("dtype", "f32") != "f32" or manifest.get("byte_order", "little") != "little":
        raise DataError("unsupported dtype/byte_order in manifest")
    count, dim = int(manifest["count"]), int(manifest["dim"])
    raw = (in_dir / DATA_NAME).read_bytes()
    expected = count * dim * 4
    if len(raw) != expected:
        raise DataError(
            f"data.bin holds {len(raw)} bytes, manifest declares {count}x{dim} f32 ({expected} bytes)"
        )
    rows = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    if not np.isfinite(rows).all():
        raise DataError(f"non-finite values in {in_dir / DATA_NAME}")
    known = {"version", "modality", "encoder", "dim", "count", "dtype", "byte_order", "item_ids"}
    extra = {k: v for k, v in manifest.items() if k not in known}
    return EmbeddingMatrix(
        modality=manifest["modality"],
        encoder_name=manifest["encoder"],
        item_ids=list(manifest["item_ids"]),
        rows=rows,
        extra=extra,
    )


@dataclass
class Projection:
    """Fixed linear map to the common code dimension, or identity when dims match."""

    d_in: int
    d_out: int
    matrix: np.ndarray | None = None  # (d_out, d_in) float64; None marks identity

    def __post_init__(self):
        if self.matrix is None:
            if self.d_in != self.d_out:
                raise ConfigError("identity projection requires d_in == d_out")
        else:
            self.matrix = np.asarray(self.matrix, dtype=np.float64)
            if self.matrix.shape != (self.d_out, self.d_in):
                raise ConfigError(f"projection matrix shape {self.matrix.shape} != ({self.d_out}, {self.d_in})")

    @classmethod
    def identity(cls, d: int) -> "Projection":
        return cls(d_in=d, d_out=d, matrix=None)

    @classmethod
    def random(cls, d_in: int, d_out: int, seed: int) -> "Projection":
        """Seeded orthonormal projection: geometry-preserving rows (or columns
        when mapping into a higher dimension)."""
        if d_in == d_out:
            return cls.identity(d_in)
        rng = np.random.default_rng(seed)
        big, small = max(d_in, d_out), min(d_in, d_out)
        q, r = np.linalg.qr(rng.normal(size=(big, small)))
        q = q * np.sign(np.diag(r))  # canonical sign fix: deterministic across LAPACK builds
        w = q.T if d_out < d_in else q  # (d_out, d_in) either way
        return cls(d_in=d_in, d_out=d_out, matrix=w)

    def apply(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=np.float64)
        if e.shape[-1] != self.d_in:
            raise ConfigError(f"vector dim {e.shape[-1]} != projection input dim {self.d_in}")
        if self.matrix is None:
            return e.copy()
        return e @ self.matrix.T


def project_normalize(e: np.ndarray, p: Projection) -> np.ndarray:
    """Project to the common dimension and L2-normalize; unit norm within 1e-6."""
    v = p.apply(e)
    if v.ndim == 1:
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise DegenerateInputError("projected vector has zero norm")
        return v / n
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.argwhere(norms[..., 0] == 0.0)[0][0])
        raise DegenerateInputError(f"projected row {bad} has zero norm")
    return v / norms


def project_matrix(m: EmbeddingMatrix, p: Projection) -> np.ndarray:
    """All rows of a matrix through project_normalize, as float64 (count, d_out)."""
    return project_normalize(m.rows64(), p)


@dataclass
class SyntheticEmbeddings:
    """Clustered synthetic modality matrices plus the labels that generated them."""

    matrices: dict[str, EmbeddingMatrix]
    cluster_labels: dict[str, np.ndarray]  # per modality, (n_items,) int
    item_ids: list[str]


def synthesize_embeddings(
    n_items: int,
    dim: int,
    n_clusters: int,
    cross_modal_correlation: float,
    seed: int,
    modalities: tuple[str, ...] = ("text", "image"),
    cluster_std: float = 0.1,
    item_ids: list[str] | None = None,
) -> SyntheticEmbeddings:
    """Draw per-modality matrices from shared Gaussian clusters.

    The first modality gets uniform cluster labels; each further modality
    keeps the same label with probability ``cross_modal_correlation`` and
    resamples uniformly otherwise. Deterministic given the seed.
    """
    if not 0.0 <= cross_modal_correlation <= 1.0:
        raise ConfigError("cross_modal_correlation must lie in [0, 1]")
    if n_clusters > n_items:
        raise ConfigError("n_clusters must not exceed n_items")
    if dim < 2:
        raise ConfigError("dim must be at least 2")
    if not modalities or any(m not in MODALITIES for m in modalities):
        raise ConfigError(f"modalities must be drawn from {MODALITIES}")
    if item_ids is None:
        width = max(4, len(str(n_items - 1)))
        item_ids = [f"item_{i:0{width}d}" for i in range(n_items)]
    elif len(item_ids) != n_items:
        raise ConfigError("item_ids length must equal n_items")

    rng = np.random.default_rng(seed)
    base_labels = rng.integers(0, n_clusters, size=n_items)
    matrices: dict[str, EmbeddingMatrix] = {}
    labels: dict[str, np.ndarray] = {}
    for k, modality in enumerate(modalities):
        if k == 0:
            lab = base_labels
        else:
            keep = rng.random(n_items) < cross_modal_correlation
            lab = np.where(keep, base_labels, rng.integers(0, n_clusters, size=n_items))
        centers = rng.normal(size=(n_clusters, dim))
        rows = centers[lab] + cluster_std * rng.normal(size=(n_items, dim))
        matrices[modality] = EmbeddingMatrix(
            modality=modality,
            encoder_name=f"synthetic(seed={seed})",
            item_ids=list(item_ids),
            rows=rows,
        )
        labels[modality] = lab.copy()
    return SyntheticEmbeddings(matrices=matrices, cluster_labels=labels, item_ids=list(item_ids))
