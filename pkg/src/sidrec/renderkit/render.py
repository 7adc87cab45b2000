"""Deterministic text-to-image rendering on a square grayscale canvas.

Same (text, config) always yields the same pixels: the font is embedded,
layout is a plain monospace grid, and scaling is nearest-neighbor. Ink is
black (0) on a white (255) background.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractViolation
from . import glyphs

DEFAULT_CANVASES = (256, 512, 1024)


@dataclass(frozen=True)
class RenderConfig:
    canvas: int = 1024  # square canvas edge, pixels
    font: str = "fixed-5x7"
    glyph_size: int = 16  # rendered cell height, multiple of the 8px base cell
    margin: int = 16
    wrap: int | None = None  # characters per line; None = fit to canvas

    def __post_init__(self):
        if self.canvas < 16:
            raise ConfigError(f"canvas {self.canvas} too small")
        if self.glyph_size < glyphs.CELL_H or self.glyph_size % glyphs.CELL_H != 0:
            raise ConfigError(f"glyph_size must be a positive multiple of {glyphs.CELL_H}")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        if self.wrap is not None and self.wrap < 1:
            raise ConfigError("wrap must be >= 1")
        if self.columns < 1 or self.max_lines < 1:
            raise ConfigError(
                f"glyph_size {self.glyph_size} with margin {self.margin} does not fit canvas {self.canvas}"
            )

    @property
    def scale(self) -> int:
        return self.glyph_size // glyphs.CELL_H

    @property
    def cell_w(self) -> int:
        return glyphs.CELL_W * self.scale

    @property
    def cell_h(self) -> int:
        return glyphs.CELL_H * self.scale

    @property
    def columns(self) -> int:
        """Characters per line actually rendered (wrap capped to the canvas)."""
        fit = (self.canvas - 2 * self.margin) // self.cell_w
        return min(self.wrap, fit) if self.wrap is not None else fit

    @property
    def max_lines(self) -> int:
        return (self.canvas - 2 * self.margin) // self.cell_h

    def digest_fields(self) -> dict:
        return {
            "canvas": self.canvas,
            "font": self.font,
            "glyph_size": self.glyph_size,
            "margin": self.margin,
            "wrap": self.wrap,
        }


@dataclass(frozen=True)
class TextImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8
    source_hash: str

    def ink_count(self) -> int:
        return int(np.count_nonzero(self.pixels != 255))


def normalize_text(t: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return " ".join(t.split())


def _hash_source(text: str, c: RenderConfig) -> str:
    payload = json.dumps({"text": text, "config": c.digest_fields()}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def render_text(t: str, c: RenderConfig) -> TextImage:
    """Lay out ``t`` top-left on the canvas, hard-wrapped at ``c.wrap`` chars;
    overflow past the last line is cut and marked with an ellipsis glyph."""
    text = normalize_text(t)
    if not text:
        raise ContractViolation("cannot render empty text")

    cols = c.columns
    lines = [text[i:i + cols] for i in range(0, len(text), cols)]
    truncated = len(lines) > c.max_lines
    if truncated:
        lines = lines[: c.max_lines]
        last = lines[-1].ljust(cols)
        lines[-1] = last[:-1] + glyphs.ELLIPSIS

    canvas = np.full((c.canvas, c.canvas), 255, dtype=np.uint8)
    s = c.scale
    for row, line in enumerate(lines):
        y0 = c.margin + row * c.cell_h
        for col, ch in enumerate(line):
            cell = glyphs.glyph_for(ch)
            if not cell.any():
                continue
            x0 = c.margin + col * c.cell_w
            block = np.kron(cell, np.ones((s, s), dtype=bool))
            region = canvas[y0:y0 + c.cell_h, x0:x0 + c.cell_w]
            region[block] = 0

    return TextImage(width=c.canvas, height=c.canvas, pixels=canvas, source_hash=_hash_source(text, c))


def downsample(img: TextImage, target: int) -> TextImage:
    """Box-filter average pooling down to ``target`` x ``target`` pixels."""
    if target < 1 or img.width % target != 0:
        raise ConfigError(f"target {target} must divide image size {img.width}")
    f = img.width // target
    if f == 1:
        return img
    pooled = img.pixels.reshape(target, f, target, f).mean(axis=(1, 3))
    pixels = np.rint(pooled).astype(np.uint8)
    h = hashlib.sha256(f"{img.source_hash}:downsample:{target}".encode("ascii")).hexdigest()
    return TextImage(width=target, height=target, pixels=pixels, source_hash=h)


def to_png(img: TextImage, path) -> None:
    """Export as 8-bit grayscale PNG for inspection."""
    from PIL import Image

    Image.fromarray(img.pixels, mode="L").save(path, format="PNG")
