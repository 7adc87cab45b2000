"""Text-as-vision rendering and the reference visual encoder."""

from .encode import patch_features, projection_for, reference_visual_encode
from .render import DEFAULT_CANVASES, RenderConfig, TextImage, downsample, normalize_text, render_text, to_png

__all__ = [
    "DEFAULT_CANVASES",
    "RenderConfig",
    "TextImage",
    "downsample",
    "normalize_text",
    "patch_features",
    "projection_for",
    "reference_visual_encode",
    "render_text",
    "to_png",
]
