"""Reference visual feature extractor: a fixed, seeded stand-in for a real
vision/OCR encoder, cheap enough to run per item at desk scale.

Pipeline: 16x16 patch grid -> per-patch mean intensity (256 features, plus a
constant bias feature so no image maps to the zero vector) -> seeded Gaussian
projection -> L2 normalization.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .render import TextImage

PATCH_GRID = 16


def patch_features(img: TextImage) -> np.ndarray:
    """(256,) mean intensities in [0, 1], row-major over the patch grid."""
    pix = img.pixels.astype(np.float64) / 255.0
    row_parts = np.array_split(pix, PATCH_GRID, axis=0)
    feats = np.empty(PATCH_GRID * PATCH_GRID, dtype=np.float64)
    i = 0
    for rp in row_parts:
        for cp in np.array_split(rp, PATCH_GRID, axis=1):
            feats[i] = cp.mean()
            i += 1
    return feats


def projection_for(out_dim: int, seed: int) -> np.ndarray:
    """Fixed Gaussian projection (257, out_dim); last input row is the bias."""
    rng = np.random.default_rng(seed)
    n_in = PATCH_GRID * PATCH_GRID + 1
    return rng.normal(size=(n_in, out_dim)) / np.sqrt(n_in)


def reference_visual_encode(img: TextImage, out_dim: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm embedding of a rendered image."""
    if out_dim < 8:
        raise ConfigError("out_dim must be >= 8")
    feats = np.concatenate([patch_features(img), [1.0]])
    v = feats @ projection_for(out_dim, seed)
    return v / np.linalg.norm(v)
