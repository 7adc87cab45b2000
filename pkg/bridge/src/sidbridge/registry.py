"""Encoder registry.

Known model identifiers per modality route to Hugging Face checkpoints via
``transformers`` (kept frozen; mean-pooled last hidden state unless the
model has a dedicated pooled output). Prefixing any known identifier with
``toy:`` selects a deterministic offline featurizer with the same output
contract — no downloads, stable across runs — which is what the
conformance tests use.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .errors import BridgeConfigError, BridgeEnvironmentError

TOY_PREFIX = "toy:"
TOY_DIM = 64

TEXT_MODELS = {
    "llama-3.1-8b": "meta-llama/Llama-3.1-8B",
    "all-minilm-l6-v2": "sentence-transformers/all-MiniLM-L6-v2",
}
IMAGE_MODELS = {
    "clip-vit-large-patch14": "openai/clip-vit-large-patch14",
}
OCR_MODELS = {
    "deepseek-ocr": "deepseek-ai/DeepSeek-OCR",
    "donut-base": "naver-clova-ix/donut-base",
    "trocr-base-printed": "microsoft/trocr-base-printed",
}

MODELS_BY_MODALITY = {"text": TEXT_MODELS, "image": IMAGE_MODELS, "ocr": OCR_MODELS}


def split_model_id(model_id: str) -> tuple[str, bool]:
    """(base identifier, is_toy)."""
    if not model_id:
        raise BridgeConfigError("model identifier must be non-empty")
    if model_id.startswith(TOY_PREFIX):
        return model_id[len(TOY_PREFIX):], True
    return model_id, False


def validate_model(modality: str, model_id: str) -> tuple[str, bool]:
    if modality not in MODELS_BY_MODALITY:
        raise BridgeConfigError(f"modality must be one of {tuple(MODELS_BY_MODALITY)}, got {modality!r}")
    base, toy = split_model_id(model_id)
    known = MODELS_BY_MODALITY[modality]
    if base not in known:
        raise BridgeConfigError(
            f"unsupported {modality} model {base!r}; supported: {sorted(known)}"
        )
    return base, toy


# ------------------------------------------------------------- toy route


def _seeded_unit(seed_bytes: bytes, dim: int = TOY_DIM) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(seed_bytes).digest()[:8], "little")
    v = np.random.default_rng(seed).normal(size=dim)
    return v / np.linalg.norm(v)


def toy_text_embedding(text: str) -> np.ndarray:
    return _seeded_unit(b"text:" + text.encode("utf-8"))


def toy_image_embedding(image: Image.Image | None, fallback_key: str) -> np.ndarray:
    if image is None:
        return _seeded_unit(b"image-missing:" + fallback_key.encode("utf-8"))
    arr = np.asarray(image.convert("L").resize((32, 32), resample=Image.BOX), dtype=np.uint8)
    return _seeded_unit(b"image:" + arr.tobytes())


def toy_ocr_embedding(rendered: Image.Image) -> np.ndarray:
    """Keyed on the rendered pixels only, never on the backbone identifier:
    swapping backbones under the toy route changes manifest metadata, not data."""
    arr = np.asarray(rendered.convert("L").resize((32, 32), resample=Image.BOX), dtype=np.uint8)
    return _seeded_unit(b"ocr:" + arr.tobytes())


# -------------------------------------------------------------- hf route


def load_hf_text_encoder(repo: str):
    try:
        import torch
        from transformers import AutoModel, AutoTokenizer
    except ImportError as e:
        raise BridgeEnvironmentError(f"transformers/torch unavailable for {repo}: {e}") from e
    try:
        tok = AutoTokenizer.from_pretrained(repo)
        model = AutoModel.from_pretrained(repo)
    except Exception as e:  # missing weights, no network, gated repo
        raise BridgeEnvironmentError(f"cannot load {repo}: {e}") from e
    model.eval()

    def encode(texts: list[str]) -> np.ndarray:
        with torch.no_grad():
            batch = tok(texts, padding=True, truncation=True, return_tensors="pt")
            out = model(**batch)
            hidden = out.last_hidden_state  # (B, T, H)
            mask = batch["attention_mask"].unsqueeze(-1)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
            return pooled.cpu().numpy().astype(np.float64)

    return encode


def load_hf_image_encoder(repo: str):
    try:
        import torch
        from transformers import AutoModel, AutoProcessor
    except ImportError as e:
        raise BridgeEnvironmentError(f"transformers/torch unavailable for {repo}: {e}") from e
    try:
        proc = AutoProcessor.from_pretrained(repo)
        model = AutoModel.from_pretrained(repo)
    except Exception as e:
        raise BridgeEnvironmentError(f"cannot load {repo}: {e}") from e
    model.eval()

    def encode(images: list[Image.Image]) -> np.ndarray:
        with torch.no_grad():
            batch = proc(images=images, return_tensors="pt")
            if hasattr(model, "get_image_features"):
                feats = model.get_image_features(**batch)
            else:
                feats = model(**batch).last_hidden_state.mean(dim=1)
            return feats.cpu().numpy().astype(np.float64)

    return encode


def load_hf_ocr_encoder(repo: str):
    try:
        import torch
        from transformers import AutoImageProcessor, AutoModel
    except ImportError as e:
        raise BridgeEnvironmentError(f"transformers/torch unavailable for {repo}: {e}") from e
    try:
        proc = AutoImageProcessor.from_pretrained(repo)
        model = AutoModel.from_pretrained(repo)
    except Exception as e:
        raise BridgeEnvironmentError(f"cannot load {repo}: {e}") from e
    model.eval()
    encoder = model.encoder if hasattr(model, "encoder") else model

    def encode(images: list[Image.Image]) -> np.ndarray:
        with torch.no_grad():
            batch = proc(images=[im.convert("RGB") for im in images], return_tensors="pt")
            hidden = encoder(batch["pixel_values"]).last_hidden_state
            return hidden.mean(dim=1).cpu().numpy().astype(np.float64)

    return encode
