"""Leave-one-out evaluation (Recall@K, NDCG@K over K in {5, 10, 20}),
multi-seed aggregation, paired significance testing, and embedding-geometry
diagnostics (modality gap, anisotropy, 2D PCA export)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .embedstore import EmbeddingMatrix
from .errors import ConfigError, ContractViolation, DataError

DEFAULT_KS = (5, 10, 20)
DEFAULT_N_SEEDS = 5
MAX_ANISOTROPY_PAIRS = 10_000
GEOMETRY_SAMPLE_SEED = 0


def recall_at_k(ranked: Sequence[str], target: str, k: int) -> float:
    """1.0 iff the target appears in the first k entries (list deduplicated)."""
    if k <= 0:
        raise ConfigError("k must be positive")
    return 1.0 if target in list(ranked)[:k] else 0.0


def ndcg_at_k(ranked: Sequence[str], target: str, k: int) -> float:
    """Single-relevant-item NDCG: 1/log2(rank+1) inside the cutoff, else 0."""
    if k <= 0:
        raise ConfigError("k must be positive")
    ranked = list(ranked)[:k]
    if target not in ranked:
        return 0.0
    rank = ranked.index(target) + 1
    return 1.0 / np.log2(rank + 1)


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    seeds: tuple[int, ...]
    n_users: int
    per_seed: dict[int, dict[str, dict[int, float]]]  # seed -> metric -> k -> value
    mean: dict[str, dict[int, float]]
    std: dict[str, dict[int, float]]
    config_digest: str = ""
    user_scores: dict[int, dict[str, dict[int, np.ndarray]]] = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        if not self.seeds:
            raise ContractViolation("report has no seeds")
        for seed in self.seeds:
            for metric in ("recall", "ndcg"):
                vals = [self.per_seed[seed][metric][k] for k in self.ks]
                if any(not 0.0 <= v <= 1.0 for v in vals):
                    raise ContractViolation(f"{metric} outside [0, 1] for seed {seed}")
                if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
                    raise ContractViolation(f"{metric} not monotone in K for seed {seed}")

    def to_json(self) -> dict:
        return {
            "ks": list(self.ks),
            "seeds": list(self.seeds),
            "n_users": self.n_users,
            "per_seed": {
                str(seed): {m: {str(k): v for k, v in ks.items()} for m, ks in metrics.items()}
                for seed, metrics in self.per_seed.items()
            },
            "mean": {m: {str(k): v for k, v in ks.items()} for m, ks in self.mean.items()},
            "std": {m: {str(k): v for k, v in ks.items()} for m, ks in self.std.items()},
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        return cls(
            ks=tuple(data["ks"]),
            seeds=tuple(data["seeds"]),
            n_users=data["n_users"],
            per_seed={
                int(seed): {m: {int(k): v for k, v in ks.items()} for m, ks in metrics.items()}
                for seed, metrics in data["per_seed"].items()
            },
            mean={m: {int(k): v for k, v in ks.items()} for m, ks in data["mean"].items()},
            std={m: {int(k): v for k, v in ks.items()} for m, ks in data["std"].items()},
            config_digest=data.get("config_digest", ""),
        )


RankingsForSeed = Callable[[int], "list[tuple[list[str], str]]"]


def evaluate(
    run_seed: RankingsForSeed,
    seeds: Sequence[int],
    ks: Sequence[int] = DEFAULT_KS,
    config_digest: str = "",
) -> EvalReport:
    """Run the protocol once per seed and aggregate.

    ``run_seed(seed)`` returns one (ranked item list, test target) pair per
    user, in a fixed user order. Users lacking a target are a protocol
    error upstream; rankings shorter than K simply miss.
    """
    seeds = tuple(int(s) for s in seeds)
    ks = tuple(sorted(int(k) for k in ks))
    if not seeds:
        raise ContractViolation("need at least one seed")
    per_seed: dict[int, dict[str, dict[int, float]]] = {}
    user_scores: dict[int, dict[str, dict[int, np.ndarray]]] = {}
    n_users = None
    for seed in seeds:
        rankings = run_seed(seed)
        if n_users is None:
            n_users = len(rankings)
        elif n_users != len(rankings):
            raise ContractViolation("user count varies across seeds")
        if n_users == 0:
            raise ContractViolation("no users to evaluate")
        rec = {k: np.empty(n_users) for k in ks}
        ndc = {k: np.empty(n_users) for k in ks}
        for u, (ranked, target) in enumerate(rankings):
            if target is None:
                raise DataError(f"user index {u} lacks a test target")
            for k in ks:
                rec[k][u] = recall_at_k(ranked, target, k)
                ndc[k][u] = ndcg_at_k(ranked, target, k)
        per_seed[seed] = {
            "recall": {k: float(rec[k].mean()) for k in ks},
            "ndcg": {k: float(ndc[k].mean()) for k in ks},
        }
        user_scores[seed] = {"recall": rec, "ndcg": ndc}

    mean = {
        m: {k: float(np.mean([per_seed[s][m][k] for s in seeds])) for k in ks}
        for m in ("recall", "ndcg")
    }
    std = {
        m: {k: float(np.std([per_seed[s][m][k] for s in seeds])) for k in ks}
        for m in ("recall", "ndcg")
    }
    report = EvalReport(
        ks=ks,
        seeds=seeds,
        n_users=n_users,
        per_seed=per_seed,
        mean=mean,
        std=std,
        config_digest=config_digest,
        user_scores=user_scores,
    )
    report.validate()
    return report


@dataclass(frozen=True)
class PairedTTest:
    t_stat: float | None
    p_value: float | None
    dof: int
    degenerate: bool  # zero-variance differences: no test, reported as such


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTTest:
    """Two-sided paired t-test on per-user score pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolation("paired scores must be 1D arrays of equal length")
    n = a.shape[0]
    if n < 2:
        raise ContractViolation("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        return PairedTTest(t_stat=None, p_value=None, dof=n - 1, degenerate=True)
    t = float(d.mean() / (sd / np.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return PairedTTest(t_stat=t, p_value=p, dof=n - 1, degenerate=False)


@dataclass
class GeometryStats:
    modality_gap: float          # mean (1 - cosine) over paired items
    anisotropy: dict[str, float]  # per matrix label: mean pairwise cosine
    projection: np.ndarray        # (n_a + n_b, 2) PCA coordinates
    labels: tuple[str, str]
    n_pairs: int


def _check_unit_rows(m: EmbeddingMatrix, label: str) -> np.ndarray:
    rows = m.rows64()
    norms = np.linalg.norm(rows, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        raise ContractViolation(f"{label} rows are not unit-normalized")
    return rows


def _mean_pairwise_cosine(rows: np.ndarray, rng: np.random.Generator) -> float:
    n = rows.shape[0]
    if n < 2:
        raise ContractViolation("anisotropy needs at least two rows")
    total_pairs = n * (n - 1) // 2
    if total_pairs <= MAX_ANISOTROPY_PAIRS:
        gram = rows @ rows.T
        iu = np.triu_indices(n, k=1)
        return float(gram[iu].mean())
    i = rng.integers(0, n, size=MAX_ANISOTROPY_PAIRS)
    j = rng.integers(0, n - 1, size=MAX_ANISOTROPY_PAIRS)
    j = np.where(j >= i, j + 1, j)  # uniform over off-diagonal pairs
    return float(np.einsum("ij,ij->i", rows[i], rows[j]).mean())


def geometry_stats(
    m_a: EmbeddingMatrix,
    m_b: EmbeddingMatrix,
    label_a: str | None = None,
    label_b: str | None = None,
) -> GeometryStats:
    """Cross-modal gap, per-matrix anisotropy, and a 2D PCA of both clouds."""
    label_a = label_a or m_a.modality
    label_b = label_b or m_b.modality
    rows_a = _check_unit_rows(m_a, label_a)
    rows_b = _check_unit_rows(m_b, label_b)

    common = [i for i in m_a.item_ids if i in set(m_b.item_ids)]
    if not common:
        raise DataError("matrices share no item ids")
    idx_a = {iid: r for r, iid in enumerate(m_a.item_ids)}
    idx_b = {iid: r for r, iid in enumerate(m_b.item_ids)}
    pa = rows_a[[idx_a[i] for i in common]]
    pb = rows_b[[idx_b[i] for i in common]]
    cosines = np.einsum("ij,ij->i", pa, pb)
    gap = float((1.0 - cosines).mean())

    rng = np.random.default_rng(GEOMETRY_SAMPLE_SEED)
    aniso = {
        label_a: _mean_pairwise_cosine(rows_a, rng),
        label_b: _mean_pairwise_cosine(rows_b, rng),
    }

    stacked = np.vstack([rows_a, rows_b])
    centered = stacked - stacked.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    flip = np.sign(comps[np.arange(2), np.abs(comps).argmax(axis=1)])
    comps = comps * flip[:, None]  # deterministic sign convention
    projection = centered @ comps.T

    return GeometryStats(
        modality_gap=gap,
        anisotropy=aniso,
        projection=projection,
        labels=(label_a, label_b),
        n_pairs=len(common),
    )
