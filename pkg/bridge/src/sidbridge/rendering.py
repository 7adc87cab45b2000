"""Text rendering for the OCR route: description -> grayscale image.

Real OCR encoders want a legible raster, not bit-exact pixels, so this uses
Pillow's built-in bitmap font on a white square canvas with simple
character wrapping.
"""

from __future__ import annotations

from PIL import Image, ImageDraw, ImageFont

MARGIN = 16
LINE_HEIGHT = 14
CHARS_PER_LINE_AT_1024 = 120


def render_description(text: str, resolution: int) -> Image.Image:
    """Render at a 1024px working canvas, then resize to ``resolution``."""
    canvas = 1024
    img = Image.new("L", (canvas, canvas), color=255)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    text = " ".join(text.split()) or " "
    wrap = CHARS_PER_LINE_AT_1024
    lines = [text[i:i + wrap] for i in range(0, len(text), wrap)]
    max_lines = (canvas - 2 * MARGIN) // LINE_HEIGHT
    for row, line in enumerate(lines[:max_lines]):
        draw.text((MARGIN, MARGIN + row * LINE_HEIGHT), line, fill=0, font=font)
    if resolution != canvas:
        img = img.resize((resolution, resolution), resample=Image.BOX)
    return img
