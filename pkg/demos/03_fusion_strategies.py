"""All four multimodal fusion strategies over the same pair of item IDs:
gated early fusion in embedding space, then the three late (token-level)
constructions, plus the bidirectional alignment pairs used by the
modality-aware variant.
"""

import numpy as np

from sidrec.embedstore import synthesize_embeddings
from sidrec.fusion import (
    GateNetwork,
    Vocabulary,
    concat_ids,
    deinterleave,
    early_fuse,
    interleave_ids,
    make_alignment_pairs,
    wrap_modality_aware,
)
from sidrec.rvq import fit, resolve_collisions

syn = synthesize_embeddings(n_items=80, dim=16, n_clusters=4,
                            cross_modal_correlation=0.9, seed=3)
rows = {m: syn.matrices[m].rows64() for m in ("text", "image")}
unit = {m: r / np.linalg.norm(r, axis=1, keepdims=True) for m, r in rows.items()}
items = syn.item_ids

print("=== early fusion: gated blend before quantization ===")
gate = GateNetwork.init(16, seed=0)
fused = early_fuse(unit["text"], unit["image"], gate)
alpha = gate.alpha(unit["text"][0], unit["image"][0])
print(f"gate alpha range for item 0: [{alpha.min():.3f}, {alpha.max():.3f}] (always in (0,1))")
print(f"fused vectors are unit norm: {np.allclose(np.linalg.norm(fused, axis=1), 1.0)}")
fused_model = fit(fused, levels=3, codebook_size=8, seed=0)
print(f"fused Semantic ID of item 0: {fused_model.encode(fused[0]).codes}\n")

print("=== per-modality IDs for the late strategies ===")
ids = {}
for m in ("image", "text"):
    model = fit(unit[m], levels=3, codebook_size=8, seed=0)
    ids[m] = resolve_collisions(dict(zip(items, model.encode_batch(unit[m]))))
vocab = Vocabulary.for_ids(ids, levels=3, codebook_size=8)
print(f"vocabulary size: {vocab.size} "
      f"(6 specials + per-modality code and dedup blocks)\n")

item = items[0]
s_img, s_txt = ids["image"][item], ids["text"][item]
print(f"item {item}: image codes {s_img.codes}+{s_img.dedup}, text codes {s_txt.codes}+{s_txt.dedup}\n")

late_a = concat_ids(s_img, s_txt, vocab)
print(f"late A (concatenation), {len(late_a)} tokens: {late_a.tokens}")

late_b = interleave_ids(s_img, s_txt, vocab)
print(f"late B (interleaving),  {len(late_b)} tokens: {late_b.tokens}")
back = deinterleave(late_b, vocab)
print(f"  deinterleave recovers both IDs: {back == (s_img, s_txt)}")

late_c = wrap_modality_aware(s_img, s_txt, vocab)
print(f"late C (modality-aware), {len(late_c)} tokens: {late_c.tokens}")
print("  provenance:", [tag for tag, _ in late_c.provenance])

print("\n=== alignment pairs (late C pretraining corpus) ===")
pairs = make_alignment_pairs(ids["image"], ids["text"], vocab)
print(f"{len(pairs)} pairs for {len(items)} items (2 per item)")
src, tgt = pairs[0]
print(f"example: {src.tokens} -> {tgt.tokens}")
