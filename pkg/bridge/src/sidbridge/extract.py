"""Batch embedding extraction over item metadata.

Reads JSONL metadata ({item_id, description, image_path}), runs the
configured encoder frozen over every item in catalog order, and writes an
embedding directory in the downstream engine's exact format: manifest.json
plus row-major float32 little-endian data.bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import registry
from .errors import BridgeConfigError, BridgeDataError
from .rendering import render_description

EMPTY_SENTINEL_TEXT = "no description available"
DEFAULT_RESOLUTION = 1024
MODALITY_TAGS = {"text": "text", "image": "image", "ocr": "ocr_text"}


@dataclass(frozen=True)
class BridgeJob:
    modality: str  # text | image | ocr
    model_id: str
    input_path: str
    output_dir: str
    resolution: int = DEFAULT_RESOLUTION  # ocr only
    batch_size: int = 16

    def __post_init__(self):
        registry.validate_model(self.modality, self.model_id)
        if self.batch_size < 1:
            raise BridgeConfigError("batch size must be >= 1")
        if self.modality == "ocr" and self.resolution < 32:
            raise BridgeConfigError("resolution must be >= 32")


@dataclass
class ItemRecord:
    item_id: str
    description: str
    image_path: str | None


def read_metadata(path: str | Path) -> list[ItemRecord]:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise BridgeDataError(f"{path}:{lineno}: invalid JSON: {e}") from e
            item_id = raw.get("item_id")
            if not item_id:
                raise BridgeDataError(f"{path}:{lineno}: missing item_id")
            if item_id in seen:
                raise BridgeDataError(f"{path}:{lineno}: duplicate item_id {item_id!r}")
            seen.add(item_id)
            records.append(ItemRecord(
                item_id=item_id,
                description=raw.get("description", "") or "",
                image_path=raw.get("image_path"),
            ))
    if not records:
        raise BridgeDataError(f"{path}: no metadata records")
    return records


def _prepare_output_dir(path: str | Path) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        raise BridgeConfigError(f"output dir {out} must be empty or absent")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _batched(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i:i + size]


def _load_image(rec: ItemRecord) -> Image.Image | None:
    if not rec.image_path:
        return None
    p = Path(rec.image_path)
    if not p.exists():
        raise BridgeDataError(f"item {rec.item_id}: image {p} not found")
    return Image.open(p)


def extract_embeddings(job: BridgeJob) -> Path:
    """Run the job; returns the output directory (validated schema)."""
    base, toy = registry.validate_model(job.modality, job.model_id)
    records = read_metadata(job.input_path)
    out = _prepare_output_dir(job.output_dir)

    empty_items = [r.item_id for r in records if not r.description.strip()]
    if job.modality in ("text", "ocr"):
        texts = {r.item_id: (r.description.strip() or EMPTY_SENTINEL_TEXT) for r in records}

    rows: list[np.ndarray] = []
    if toy:
        for rec in records:
            if job.modality == "text":
                rows.append(registry.toy_text_embedding(texts[rec.item_id]))
            elif job.modality == "image":
                rows.append(registry.toy_image_embedding(_load_image(rec), rec.item_id))
            else:
                rendered = render_description(texts[rec.item_id], job.resolution)
                rows.append(registry.toy_ocr_embedding(rendered))
    else:
        repo = registry.MODELS_BY_MODALITY[job.modality][base]
        if job.modality == "text":
            encode = registry.load_hf_text_encoder(repo)
            for batch in _batched(records, job.batch_size):
                rows.extend(encode([texts[r.item_id] for r in batch]))
        elif job.modality == "image":
            encode = registry.load_hf_image_encoder(repo)
            for batch in _batched(records, job.batch_size):
                rows.extend(encode([_load_image(r) or Image.new("RGB", (64, 64), "white")
                                    for r in batch]))
        else:
            encode = registry.load_hf_ocr_encoder(repo)
            for batch in _batched(records, job.batch_size):
                rendered = [render_description(texts[r.item_id], job.resolution) for r in batch]
                rows.extend(encode(rendered))

    matrix = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(matrix).all():
        raise BridgeDataError("encoder produced non-finite values")
    _write_embedding_dir(
        out,
        modality=MODALITY_TAGS[job.modality],
        encoder_name=job.model_id,
        item_ids=[r.item_id for r in records],
        rows=matrix,
        extra={
            "model_id": job.model_id,
            "backbone": base,
            "pooling": "mean_last_hidden" if not toy else "toy_hash",
            "empty_description_items": empty_items,
            **({"render_resolution": job.resolution} if job.modality == "ocr" else {}),
        },
    )
    return out


def swap_ocr_backbone(job: BridgeJob, backbone: str, output_dir: str | Path) -> Path:
    """Re-run an OCR job with a different backbone identifier; the output
    schema is unchanged and the manifest records the new backbone."""
    if job.modality != "ocr":
        raise BridgeConfigError("backbone swap applies to OCR jobs only")
    _, toy = registry.split_model_id(job.model_id)
    new_id = (registry.TOY_PREFIX if toy else "") + backbone
    swapped = BridgeJob(
        modality="ocr",
        model_id=new_id,  # validates the backbone against the supported set
        input_path=job.input_path,
        output_dir=str(output_dir),
        resolution=job.resolution,
        batch_size=job.batch_size,
    )
    return extract_embeddings(swapped)


def _write_embedding_dir(out: Path, modality: str, encoder_name: str,
                         item_ids: list[str], rows: np.ndarray, extra: dict) -> None:
    manifest = {
        "version": 1,
        "modality": modality,
        "encoder": encoder_name,
        "dim": int(rows.shape[1]),
        "count": int(rows.shape[0]),
        "dtype": "f32",
        "byte_order": "little",
        "item_ids": list(item_ids),
    }
    manifest.update(extra)
    (out / "data.bin").write_bytes(rows.astype("<f4").tobytes(order="C"))
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
