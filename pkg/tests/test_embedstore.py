import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidrec.embedstore import (
    EmbeddingMatrix,
    Projection,
    project_normalize,
    read_matrix,
    synthesize_embeddings,
    write_matrix,
)
from sidrec.errors import ConfigError, DataError, DegenerateInputError


def small_matrix():
    return EmbeddingMatrix(
        modality="text",
        encoder_name="unit-test",
        item_ids=["a", "b"],
        rows=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=np.float32),
    )


def test_round_trip_elementwise(tmp_path):
    m = small_matrix()
    write_matrix(m, tmp_path / "m")
    back = read_matrix(tmp_path / "m")
    assert back.modality == m.modality
    assert back.encoder_name == m.encoder_name
    assert back.item_ids == m.item_ids
    np.testing.assert_array_equal(back.rows, m.rows)


def test_round_trip_bytes_exact(tmp_path):
    m = small_matrix()
    write_matrix(m, tmp_path / "m1")
    back = read_matrix(tmp_path / "m1")
    write_matrix(back, tmp_path / "m2")
    assert (tmp_path / "m1" / "data.bin").read_bytes() == (tmp_path / "m2" / "data.bin").read_bytes()
    assert (tmp_path / "m1" / "manifest.json").read_bytes() == (tmp_path / "m2" / "manifest.json").read_bytes()


def test_size_mismatch_is_integrity_error(tmp_path):
    m = small_matrix()
    write_matrix(m, tmp_path / "m")
    data = (tmp_path / "m" / "data.bin").read_bytes()
    (tmp_path / "m" / "data.bin").write_bytes(data[:-4])  # drop one float
    with pytest.raises(DataError, match="bytes"):
        read_matrix(tmp_path / "m")


def test_nan_on_read_is_data_error(tmp_path):
    m = small_matrix()
    write_matrix(m, tmp_path / "m")
    rows = np.frombuffer((tmp_path / "m" / "data.bin").read_bytes(), dtype="<f4").copy()
    rows[0] = np.nan
    (tmp_path / "m" / "data.bin").write_bytes(rows.tobytes())
    with pytest.raises(DataError, match="non-finite"):
        read_matrix(tmp_path / "m")


def test_ocr_modality_tag_round_trips(tmp_path):
    m = EmbeddingMatrix("ocr_text", "enc", ["x"], np.ones((1, 4), dtype=np.float32),
                        extra={"render_resolution": 256})
    write_matrix(m, tmp_path / "m")
    back = read_matrix(tmp_path / "m")
    assert back.modality == "ocr_text"
    assert back.extra["render_resolution"] == 256


def test_invariants_rejected():
    with pytest.raises(DataError):
        EmbeddingMatrix("text", "e", ["a"], np.ones((2, 3)))
    with pytest.raises(DataError):
        EmbeddingMatrix("text", "e", ["a", "a"], np.ones((2, 3)))
    with pytest.raises(DataError):
        EmbeddingMatrix("smell", "e", ["a"], np.ones((1, 3)))
    with pytest.raises(DataError):
        EmbeddingMatrix("text", "e", ["a"], np.array([[np.inf, 0.0]]))


# ---------------------------------------------------------- projection


def test_identity_normalization_analytic():
    p = Projection.identity(2)
    np.testing.assert_allclose(project_normalize(np.array([3.0, 4.0]), p), [0.6, 0.8], atol=1e-12)


def test_unit_input_unchanged():
    p = Projection.identity(3)
    e = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(project_normalize(e, p), e, atol=1e-6)


def test_zero_vector_degenerate():
    p = Projection.identity(2)
    with pytest.raises(DegenerateInputError):
        project_normalize(np.zeros(2), p)


def test_random_projection_preserves_norm_when_reducing():
    p = Projection.random(16, 8, seed=0)
    rng = np.random.default_rng(1)
    # rows orthonormal: projected norms never exceed input norms
    for _ in range(10):
        e = rng.normal(size=16)
        assert np.linalg.norm(p.apply(e)) <= np.linalg.norm(e) + 1e-9
        assert abs(np.linalg.norm(project_normalize(e, p)) - 1.0) < 1e-6


def test_random_projection_into_higher_dim_is_isometric():
    p = Projection.random(4, 9, seed=0)
    rng = np.random.default_rng(2)
    e = rng.normal(size=4)
    assert abs(np.linalg.norm(p.apply(e)) - np.linalg.norm(e)) < 1e-9


def test_projection_deterministic():
    a = Projection.random(8, 4, seed=5)
    b = Projection.random(8, 4, seed=5)
    np.testing.assert_array_equal(a.matrix, b.matrix)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
    st.floats(1e-3, 1e3),
)
def test_scale_invariance(vec, c):
    p = Projection.identity(4)
    e = np.array(vec)
    np.testing.assert_allclose(project_normalize(c * e, p), project_normalize(e, p), atol=1e-9)


# ----------------------------------------------------------- synthesis


def test_synthesis_deterministic():
    a = synthesize_embeddings(50, 8, 4, 0.5, seed=9)
    b = synthesize_embeddings(50, 8, 4, 0.5, seed=9)
    for mod in a.matrices:
        np.testing.assert_array_equal(a.matrices[mod].rows, b.matrices[mod].rows)


def test_full_correlation_shares_labels():
    s = synthesize_embeddings(200, 8, 4, 1.0, seed=3)
    np.testing.assert_array_equal(s.cluster_labels["text"], s.cluster_labels["image"])


def test_zero_correlation_agreement_near_chance():
    # Monte Carlo oracle: with independent labels, agreement ~= 1/n_clusters
    s = synthesize_embeddings(1000, 8, 4, 0.0, seed=11)
    agree = float((s.cluster_labels["text"] == s.cluster_labels["image"]).mean())
    assert abs(agree - 0.25) < 0.05


def test_synthesis_bounds_checked():
    with pytest.raises(ConfigError):
        synthesize_embeddings(10, 8, 11, 0.5, seed=0)
    with pytest.raises(ConfigError):
        synthesize_embeddings(10, 1, 2, 0.5, seed=0)
    with pytest.raises(ConfigError):
        synthesize_embeddings(10, 8, 2, 1.5, seed=0)
