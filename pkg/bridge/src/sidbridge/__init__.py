"""sidbridge: adapters that run frozen pretrained encoders over item
metadata and emit sidrec-format embedding directories."""

__version__ = "0.1.0"

from .extract import BridgeJob, extract_embeddings, read_metadata, swap_ocr_backbone

__all__ = ["BridgeJob", "extract_embeddings", "read_metadata", "swap_ocr_backbone"]
