import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from sidrec.embedstore import EmbeddingMatrix
from sidrec.errors import ConfigError, ContractViolation, DataError
from sidrec.metrics import (
    EvalReport,
    evaluate,
    geometry_stats,
    ndcg_at_k,
    paired_t_test,
    recall_at_k,
)


def test_recall_fixtures():
    assert recall_at_k(["t", "a", "b", "c", "d"], "t", 5) == 1.0
    assert recall_at_k(["a", "b", "c", "d", "e", "t"], "t", 5) == 0.0
    assert recall_at_k(["a", "b"], "t", 10) == 0.0
    with pytest.raises(ConfigError):
        recall_at_k(["a"], "a", 0)


def test_ndcg_fixtures():
    assert ndcg_at_k(["t", "a"], "t", 5) == 1.0
    assert abs(ndcg_at_k(["a", "b", "t", "c"], "t", 5) - 0.5) < 1e-12  # rank 3 -> 1/log2(4)
    assert ndcg_at_k(["a"] * 10 + ["t"], "t", 10) == 0.0


def test_recall_dominates_ndcg():
    rng = np.random.default_rng(0)
    items = [f"i{k}" for k in range(30)]
    for _ in range(200):
        ranked = list(rng.permutation(items))
        target = items[int(rng.integers(30))]
        for k in (1, 3, 5, 10, 20):
            assert recall_at_k(ranked, target, k) >= ndcg_at_k(ranked, target, k)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metric_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    ranked = [f"i{j}" for j in rng.permutation(n)]
    target = f"i{int(rng.integers(n + 5))}"
    ks = (1, 2, 5, 10, 20)
    recalls = [recall_at_k(ranked, target, k) for k in ks]
    ndcgs = [ndcg_at_k(ranked, target, k) for k in ks]
    assert all(b >= a for a, b in zip(recalls, recalls[1:]))
    assert all(b >= a for a, b in zip(ndcgs, ndcgs[1:]))


def perfect_memorizer(seed):
    return [(["t1", "x", "y"], "t1"), (["t2", "x", "y"], "t2"), (["t3", "x", "y"], "t3")]


def test_evaluate_perfect_memorizer():
    report = evaluate(perfect_memorizer, seeds=[0, 1], ks=(5, 10, 20))
    assert report.mean["recall"][5] == 1.0
    assert report.mean["ndcg"][5] == 1.0
    assert report.std["recall"][5] == 0.0


def test_evaluate_hand_built_two_user_fixture():
    # user 1: target at rank 1; user 2: target at rank 3
    def run(seed):
        return [
            (["t1", "a", "b", "c", "d"], "t1"),
            (["a", "b", "t2", "c", "d"], "t2"),
        ]

    report = evaluate(run, seeds=[0], ks=(5,))
    assert report.per_seed[0]["recall"][5] == 1.0
    assert abs(report.per_seed[0]["ndcg"][5] - 0.75) < 1e-12


def test_evaluate_default_seed_count_is_five():
    from sidrec.metrics import DEFAULT_N_SEEDS

    assert DEFAULT_N_SEEDS == 5


def test_evaluate_missing_target_is_error():
    def run(seed):
        return [(["a"], None)]

    with pytest.raises(DataError):
        evaluate(run, seeds=[0])


def test_evaluate_short_rankings_count_as_misses():
    def run(seed):
        return [(["a"], "t")]

    report = evaluate(run, seeds=[0], ks=(5,))
    assert report.per_seed[0]["recall"][5] == 0.0


def test_report_json_round_trip():
    report = evaluate(perfect_memorizer, seeds=[0, 1], ks=(5, 10))
    back = EvalReport.from_json(report.to_json())
    assert back.ks == report.ks and back.seeds == report.seeds
    assert back.mean == report.mean and back.per_seed == report.per_seed


def test_report_validation_catches_bad_values():
    report = evaluate(perfect_memorizer, seeds=[0], ks=(5, 10))
    report.per_seed[0]["recall"][10] = 0.2  # break monotonicity
    with pytest.raises(ContractViolation):
        report.validate()


# -------------------------------------------------------------- t-test


def test_t_test_degenerate_on_equal_arrays():
    a = [0.5, 0.25, 0.75, 0.5]
    out = paired_t_test(a, a)
    assert out.degenerate and out.p_value is None


def test_t_test_matches_reference_tables():
    # nine +0.1 differences and one -0.1: t = 4.0 on 9 dof, p ~= 0.0031
    a = [0.1] * 10
    b = [0.0] * 9 + [0.2]
    out = paired_t_test(a, b)
    assert abs(out.t_stat - 4.0) < 1e-12
    assert abs(out.p_value - 0.003117) < 1e-3
    ref = sps.ttest_rel(a, b)  # independent reference implementation
    assert abs(out.p_value - ref.pvalue) < 1e-12


def test_t_test_symmetric():
    rng = np.random.default_rng(1)
    a = rng.random(20)
    b = rng.random(20)
    assert abs(paired_t_test(a, b).p_value - paired_t_test(b, a).p_value) < 1e-15


def test_t_test_input_validation():
    with pytest.raises(ContractViolation):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ContractViolation):
        paired_t_test([1.0, 2.0], [1.0])


# ------------------------------------------------------------- geometry


def unit_matrix(modality, ids, rows):
    rows = np.asarray(rows, dtype=np.float64)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return EmbeddingMatrix(modality, "t", ids, rows)


def test_identical_matrices_zero_gap():
    rng = np.random.default_rng(2)
    ids = [f"i{k}" for k in range(20)]
    m = unit_matrix("text", ids, rng.normal(size=(20, 8)))
    m2 = EmbeddingMatrix("image", "t", ids, m.rows)
    g = geometry_stats(m, m2)
    assert abs(g.modality_gap) < 1e-6
    assert g.n_pairs == 20


def test_orthonormal_rows_zero_anisotropy():
    ids = [f"i{k}" for k in range(6)]
    m = unit_matrix("text", ids, np.eye(6))
    m2 = unit_matrix("image", ids, np.eye(6))
    g = geometry_stats(m, m2)
    assert abs(g.anisotropy["text"]) < 1e-12


def test_isotropic_cloud_anisotropy_near_zero():
    rng = np.random.default_rng(3)
    ids = [f"i{k}" for k in range(1000)]
    rows = rng.normal(size=(1000, 64))
    m = unit_matrix("text", ids, rows)
    m2 = unit_matrix("image", ids, rng.normal(size=(1000, 64)))
    g = geometry_stats(m, m2)
    assert abs(g.anisotropy["text"]) < 0.05
    assert abs(g.anisotropy["image"]) < 0.05


def test_projection_centered_and_shaped():
    rng = np.random.default_rng(4)
    ids = [f"i{k}" for k in range(50)]
    m = unit_matrix("text", ids, rng.normal(size=(50, 16)))
    m2 = unit_matrix("image", ids, rng.normal(size=(50, 16)))
    g = geometry_stats(m, m2)
    assert g.projection.shape == (100, 2)
    np.testing.assert_allclose(g.projection.mean(axis=0), 0.0, atol=1e-9)


def test_geometry_requires_common_items():
    rng = np.random.default_rng(5)
    m = unit_matrix("text", ["a", "b"], rng.normal(size=(2, 4)))
    m2 = unit_matrix("image", ["c", "d"], rng.normal(size=(2, 4)))
    with pytest.raises(DataError):
        geometry_stats(m, m2)


def test_geometry_rejects_unnormalized():
    ids = ["a", "b"]
    m = EmbeddingMatrix("text", "t", ids, np.array([[3.0, 0.0], [0.0, 2.0]]))
    with pytest.raises(ContractViolation):
        geometry_stats(m, m)
