"""Self-contained synthetic study: clustered item embeddings, users whose
sequences follow cluster-level Markov dynamics, and attribute-style item
descriptions for the text-as-vision route.

The point of the construction: content clusters drive the dynamics, so
Semantic IDs carved from informative embeddings expose next-cluster
structure to the generator, while label-shuffled embeddings destroy it
with the architecture held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import InteractionLog
from .embedstore import EmbeddingMatrix, SyntheticEmbeddings, synthesize_embeddings
from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    n_items: int = 200
    n_users: int = 300
    n_clusters: int = 8
    dim: int = 32
    cross_modal_correlation: float = 0.9
    cluster_std: float = 0.1
    min_seq_len: int = 8
    max_seq_len: int = 12
    # sticky cluster dynamics: the held-out target sits two steps past the
    # train prefix, so the cluster signal must survive a two-step horizon
    p_stay: float = 0.75
    p_next: float = 0.15
    seed: int = 0
    modalities: tuple[str, ...] = ("text", "image")

    def __post_init__(self):
        if self.min_seq_len < 3:
            raise ConfigError("sequences must allow leave-one-out (min_seq_len >= 3)")
        if self.max_seq_len < self.min_seq_len:
            raise ConfigError("max_seq_len < min_seq_len")
        if not 0.0 <= self.p_stay + self.p_next <= 1.0:
            raise ConfigError("p_stay + p_next must lie in [0, 1]")


@dataclass
class SyntheticStudy:
    spec: SyntheticSpec
    embeddings: SyntheticEmbeddings
    log: InteractionLog
    descriptions: dict[str, str] = field(default_factory=dict)

    @property
    def item_ids(self) -> list[str]:
        return self.embeddings.item_ids


def _markov_sequences(labels: np.ndarray, item_ids: list[str], spec: SyntheticSpec, rng) -> dict[str, list[str]]:
    n_clusters = spec.n_clusters
    by_cluster = [np.flatnonzero(labels == c) for c in range(n_clusters)]
    # guard: every cluster must be inhabited for the walk to draw items
    empty = [c for c, members in enumerate(by_cluster) if len(members) == 0]
    if empty:
        raise ConfigError(f"clusters {empty} received no items; lower n_clusters or raise n_items")
    sequences: dict[str, list[str]] = {}
    width = max(4, len(str(spec.n_users - 1)))
    for u in range(spec.n_users):
        length = int(rng.integers(spec.min_seq_len, spec.max_seq_len + 1))
        c = int(rng.integers(n_clusters))
        seq = []
        for _ in range(length):
            seq.append(item_ids[int(rng.choice(by_cluster[c]))])
            roll = rng.random()
            if roll < spec.p_stay:
                pass
            elif roll < spec.p_stay + spec.p_next:
                c = (c + 1) % n_clusters
            else:
                c = int(rng.integers(n_clusters))
        sequences[f"user_{u:0{width}d}"] = seq
    return sequences


_UNITS = ("mm", "V", "Hz", "g", "ohm", "ml", "W", "K")


def _descriptions(labels: np.ndarray, item_ids: list[str], spec: SyntheticSpec, rng) -> dict[str, str]:
    """Attribute-dense description per item; same-cluster items share the
    attribute block, so rendering them yields visually similar images."""
    n_attrs = 6
    cluster_attrs = []
    for c in range(spec.n_clusters):
        parts = []
        for a in range(n_attrs):
            val = round(float(rng.uniform(0.1, 999.0)), 1)
            unit = _UNITS[int(rng.integers(len(_UNITS)))]
            parts.append(f"A{a}={val}{unit}")
        cluster_attrs.append(" ".join(parts))
    out = {}
    for idx, item in enumerate(item_ids):
        c = int(labels[idx])
        out[item] = f"{item} TYPE-C{c} {cluster_attrs[c]} REV {idx % 7}"
    return out


def make_study(spec: SyntheticSpec) -> SyntheticStudy:
    """Deterministic full fixture: embeddings, interaction log, descriptions."""
    emb = synthesize_embeddings(
        n_items=spec.n_items,
        dim=spec.dim,
        n_clusters=spec.n_clusters,
        cross_modal_correlation=spec.cross_modal_correlation,
        seed=spec.seed,
        modalities=spec.modalities,
        cluster_std=spec.cluster_std,
    )
    rng = np.random.default_rng(spec.seed + 104729)  # separate stream from the embeddings
    labels = emb.cluster_labels[spec.modalities[0]]
    sequences = _markov_sequences(labels, emb.item_ids, spec, rng)
    descriptions = _descriptions(labels, emb.item_ids, spec, rng)
    return SyntheticStudy(
        spec=spec,
        embeddings=emb,
        log=InteractionLog(sequences=sequences),
        descriptions=descriptions,
    )


def write_study_files(study: SyntheticStudy, out_dir) -> dict[str, str]:
    """Materialize interactions TSV, catalog JSON, and metadata JSONL."""
    import json
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    interactions = out_dir / "interactions.tsv"
    with open(interactions, "w", encoding="utf-8") as f:
        for user, seq in study.log.sequences.items():
            for t, item in enumerate(seq):
                f.write(f"{user}\t{item}\t{t}\n")
    catalog = out_dir / "catalog.json"
    catalog.write_text(json.dumps(study.item_ids, indent=0) + "\n", encoding="utf-8")
    metadata = out_dir / "metadata.jsonl"
    with open(metadata, "w", encoding="utf-8") as f:
        for item in study.item_ids:
            f.write(json.dumps({"item_id": item, "description": study.descriptions[item]}) + "\n")
    return {"interactions": str(interactions), "catalog": str(catalog), "metadata": str(metadata)}


def hierarchical_embeddings(
    n_items: int,
    dim: int,
    n_clusters: int,
    seed: int,
    split_scale: float = 0.30,
    mid_scale: float = 0.06,
    fine_scale: float = 0.018,
    noise_std: float = 0.0002,
    n_offsets: int = 16,
) -> np.ndarray:
    """Rows with structure at three residual scales below the cluster level.

    Each cluster splits into two sub-centers; all items then share one of
    ``n_offsets`` global mid-scale offsets and one of ``n_offsets`` global
    fine-scale offsets (assigned round-robin so every subgroup sees a
    balanced mix), plus tiny noise. Offsets are +/- an orthonormal set, so
    their pairwise separations are uniform and their mean is exactly zero.
    Residual quantization peels these scales off level by level, which is
    the regime the multi-level codebook is for.
    """
    if n_offsets % 2 != 0 or n_offsets > 2 * dim:
        raise ConfigError("n_offsets must be even and at most 2*dim")
    rng = np.random.default_rng(seed)

    def unit(shape):
        v = rng.normal(size=shape)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def pm_orthonormal(scale):
        q, r = np.linalg.qr(rng.normal(size=(dim, n_offsets // 2)))
        q = q * np.sign(np.diag(r))
        dirs = q.T  # (n_offsets/2, dim), orthonormal
        return scale * np.vstack([dirs, -dirs])

    top = unit((n_clusters, dim))
    split_dirs = unit((n_clusters, dim))
    mid = pm_orthonormal(mid_scale)
    fine = pm_orthonormal(fine_scale)

    idx = np.arange(n_items)
    labels = idx % n_clusters
    halves = (idx // n_clusters) % 2
    mid_idx = (idx // (2 * n_clusters)) % n_offsets
    fine_idx = (idx // (2 * n_clusters * n_offsets) + idx) % n_offsets

    rows = (
        top[labels]
        + split_scale * np.where(halves[:, None] == 0, 1.0, -1.0) * split_dirs[labels]
        + mid[mid_idx]
        + fine[fine_idx]
        + noise_std * rng.normal(size=(n_items, dim))
    )
    return rows[rng.permutation(n_items)]


def shuffle_rows(matrix: EmbeddingMatrix, seed: int) -> EmbeddingMatrix:
    """Label-shuffled control: permute the item->row assignment, keeping the
    embedding cloud itself (and hence codebook geometry) unchanged."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(matrix.count)
    return EmbeddingMatrix(
        modality=matrix.modality,
        encoder_name=matrix.encoder_name + "+shuffled",
        item_ids=list(matrix.item_ids),
        rows=matrix.rows[perm],
        extra=dict(matrix.extra),
    )
