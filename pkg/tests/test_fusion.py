import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidrec.errors import ContractViolation, DataError, DegenerateInputError
from sidrec.fusion import (
    BOS,
    EOS,
    IMG,
    PAD,
    SEP,
    SPECIALS,
    TXT,
    ConstantGate,
    GateNetwork,
    Vocabulary,
    concat_ids,
    deinterleave,
    early_fuse,
    fit_gated_rqvae,
    interleave_ids,
    make_alignment_pairs,
    unimodal_sequence,
    unwrap_modality_aware,
    wrap_modality_aware,
)
from sidrec.rvq import SemanticId, resolve_collisions


def vocab(levels=3, k=4, dedup=2):
    return Vocabulary(levels=levels, codebook_size=k, modalities=("image", "text"), dedup_sizes=(dedup, dedup))


def rand_sid(rng, levels=3, k=4, dedup=2):
    return SemanticId(tuple(int(c) for c in rng.integers(0, k, size=levels)), dedup=int(rng.integers(dedup)))


# ------------------------------------------------------------ vocabulary


def test_token_ranges_disjoint():
    v = vocab()
    seen = {}
    for mod in v.modalities:
        for lv in range(v.levels):
            for c in range(v.codebook_size):
                t = v.code_token(mod, lv, c)
                assert t not in seen
                seen[t] = (mod, lv)
        for d in range(2):
            t = v.dedup_token(mod, d)
            assert t not in seen
            seen[t] = (mod, "dedup")
    assert set(range(len(SPECIALS))).isdisjoint(seen)
    assert len(seen) + len(SPECIALS) == v.size


def test_describe_inverts_token_layout():
    v = vocab()
    assert v.describe(PAD) == ("special", "PAD")
    t = v.code_token("text", 2, 3)
    assert v.describe(t) == ("text", 2)
    assert v.describe(v.dedup_token("image", 1)) == ("image", "dedup")


def test_id_tokens_round_trip():
    v = vocab()
    sid = SemanticId((1, 2, 3), dedup=1)
    toks = v.id_tokens("text", sid)
    assert len(toks) == 4
    assert v.decode_id("text", toks) == sid


def test_vocab_json_round_trip():
    v = vocab()
    assert Vocabulary.from_json(v.to_json()) == v


# ------------------------------------------------------------ sequences


def test_concat_order_image_then_text():
    v = vocab()
    rng = np.random.default_rng(0)
    si, st_ = rand_sid(rng), rand_sid(rng)
    seq = concat_ids(si, st_, v)
    assert seq.layout == "lateA"
    assert len(seq) == 2 * (v.levels + 1)
    assert seq.tokens[: v.levels + 1] == v.id_tokens("image", si)
    assert seq.tokens[v.levels + 1 :] == v.id_tokens("text", st_)
    half = v.levels + 1
    assert all(m == "image" for m, _ in seq.provenance[:half])
    assert all(m == "text" for m, _ in seq.provenance[half:])


def test_interleave_pattern_and_multiset():
    v = vocab()
    rng = np.random.default_rng(1)
    si, st_ = rand_sid(rng), rand_sid(rng)
    inter = interleave_ids(si, st_, v)
    a = v.id_tokens("image", si)
    b = v.id_tokens("text", st_)
    assert inter.tokens == tuple(t for pair in zip(a, b) for t in pair)
    assert sorted(inter.tokens) == sorted(concat_ids(si, st_, v).tokens)


def test_interleave_round_trip_many():
    v = vocab()
    rng = np.random.default_rng(2)
    for _ in range(200):
        si, st_ = rand_sid(rng), rand_sid(rng)
        seq = interleave_ids(si, st_, v)
        back_i, back_t = deinterleave(seq, v)
        assert back_i == si and back_t == st_


def test_wrap_modality_aware_layout():
    v = vocab()
    rng = np.random.default_rng(3)
    si, st_ = rand_sid(rng), rand_sid(rng)
    seq = wrap_modality_aware(si, st_, v)
    assert len(seq) == 2 * (v.levels + 1) + 3 == 11
    assert seq.tokens[0] == IMG
    assert seq.tokens[v.levels + 2] == SEP
    assert seq.tokens[v.levels + 3] == TXT
    assert unwrap_modality_aware(seq, v) == (si, st_)


def test_alignment_pairs():
    v = vocab()
    rng = np.random.default_rng(4)
    items = [f"it{k}" for k in range(5)]
    ids_img = {i: rand_sid(rng) for i in items}
    ids_txt = {i: rand_sid(rng) for i in items}
    pairs = make_alignment_pairs(ids_img, ids_txt, v)
    assert len(pairs) == 10
    for fwd, bwd in zip(pairs[0::2], pairs[1::2]):
        assert fwd[0].tokens[0] == IMG and fwd[1].tokens[0] == TXT
        assert (fwd[0], fwd[1]) == (bwd[1], bwd[0])  # reversal yields the sibling pair


def test_alignment_pairs_missing_modality():
    v = vocab()
    rng = np.random.default_rng(5)
    ids_img = {"a": rand_sid(rng), "b": rand_sid(rng)}
    ids_txt = {"a": rand_sid(rng)}
    with pytest.raises(DataError, match="b"):
        make_alignment_pairs(ids_img, ids_txt, v)


def test_late_fusion_injective_after_collision_resolution():
    rng = np.random.default_rng(6)
    n = 500
    raw_i = {f"i{k:03d}": SemanticId(tuple(rng.integers(0, 4, size=3))) for k in range(n)}
    raw_t = {f"i{k:03d}": SemanticId(tuple(rng.integers(0, 4, size=3))) for k in range(n)}
    ids_i = resolve_collisions(raw_i)
    ids_t = resolve_collisions(raw_t)
    v = Vocabulary.for_ids({"image": ids_i, "text": ids_t}, levels=3, codebook_size=4)
    for builder in (concat_ids, interleave_ids, wrap_modality_aware):
        seqs = {item: builder(ids_i[item], ids_t[item], v).tokens for item in ids_i}
        assert len(set(seqs.values())) == n, builder.__name__


def test_unimodal_sequence_layout():
    ids = resolve_collisions({"a": SemanticId((0, 1, 2)), "b": SemanticId((0, 1, 2))})
    v = Vocabulary.for_ids({"text": ids}, levels=3, codebook_size=4)
    seq = unimodal_sequence(ids["a"], v, "text")
    assert seq.layout == "unimodal" and len(seq) == 4


# --------------------------------------------------------------- gating


def test_zero_gate_gives_half_alpha():
    d = 8
    gate = GateNetwork.zeros(d)
    rng = np.random.default_rng(7)
    e_t = rng.normal(size=d)
    e_t /= np.linalg.norm(e_t)
    e_img = rng.normal(size=d)
    e_img /= np.linalg.norm(e_img)
    a = gate.alpha(e_t, e_img)
    np.testing.assert_allclose(a, 0.5)
    z = early_fuse(e_t, e_img, gate)
    want = 0.5 * (e_t + e_img)
    np.testing.assert_allclose(z, want / np.linalg.norm(want), atol=1e-12)


def test_equal_inputs_pass_through():
    d = 6
    gate = GateNetwork.init(d, seed=0)
    e = np.random.default_rng(8).normal(size=d)
    e /= np.linalg.norm(e)
    np.testing.assert_allclose(early_fuse(e, e, gate), e, atol=1e-9)


def test_opposite_inputs_zero_gate_degenerate():
    d = 4
    gate = GateNetwork.zeros(d)
    e = np.ones(d) / 2.0
    with pytest.raises(DegenerateInputError):
        early_fuse(e, -e, gate)


def test_gate_alpha_strictly_inside_unit_interval():
    d = 8
    gate = GateNetwork.init(d, seed=1)
    rng = np.random.default_rng(9)
    for _ in range(50):
        e_t = rng.normal(size=d)
        e_t /= np.linalg.norm(e_t)
        e_img = rng.normal(size=d)
        e_img /= np.linalg.norm(e_img)
        a = gate.alpha(e_t, e_img)
        assert ((a > 0.0) & (a < 1.0)).all()


def test_constant_gate():
    g = ConstantGate(4, alpha=0.3)
    np.testing.assert_allclose(g.alpha(np.ones(4), np.ones(4)), 0.3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_early_fuse_unit_norm_property(seed):
    rng = np.random.default_rng(seed)
    d = 8
    gate = GateNetwork.init(d, seed=seed % 1000)
    e_t = rng.normal(size=d)
    e_t /= np.linalg.norm(e_t)
    e_img = rng.normal(size=d)
    e_img /= np.linalg.norm(e_img)
    z = early_fuse(e_t, e_img, gate)
    assert abs(np.linalg.norm(z) - 1.0) < 1e-6


def test_fused_sequence_length_contract():
    v = vocab()
    with pytest.raises(ContractViolation):
        deinterleave(
            interleave_ids(SemanticId((0, 1, 2), 0), SemanticId((1, 1, 1), 0), v),
            vocab(levels=2),
        )


def test_gated_rqvae_joint_training_converges():
    rng = np.random.default_rng(10)
    n, d = 40, 8
    e_t = rng.normal(size=(n, d))
    e_t /= np.linalg.norm(e_t, axis=1, keepdims=True)
    e_img = rng.normal(size=(n, d))
    e_img /= np.linalg.norm(e_img, axis=1, keepdims=True)
    model, gate = fit_gated_rqvae(e_t, e_img, levels=2, codebook_size=4, seed=0, steps=120, hidden=8)
    assert all(np.isfinite(v) for v in model.loss_curve)
    assert model.loss_curve[-1] < model.loss_curve[0]
    a = gate.alpha(e_t, e_img)
    assert ((a > 0.0) & (a < 1.0)).all()
    fused = early_fuse(e_t, e_img, gate)
    sid = model.encode(fused[0])
    assert len(sid.codes) == 2
