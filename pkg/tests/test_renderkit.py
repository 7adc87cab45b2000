import numpy as np
import pytest

from sidrec.errors import ConfigError, ContractViolation
from sidrec.renderkit import (
    RenderConfig,
    downsample,
    patch_features,
    reference_visual_encode,
    render_text,
    to_png,
)
from sidrec.renderkit.glyphs import ATLAS, ELLIPSIS
from sidrec.renderkit.render import TextImage


def test_render_deterministic():
    c = RenderConfig(canvas=256, glyph_size=8, margin=8)
    a = render_text("Wireless Mouse, 2.4G, 1600DPI", c)
    b = render_text("Wireless Mouse, 2.4G, 1600DPI", c)
    assert a.source_hash == b.source_hash
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_whitespace_normalization_equivalence():
    c = RenderConfig(canvas=256, glyph_size=8, margin=8)
    a = render_text("a  b\n\tc", c)
    b = render_text("a b c", c)
    assert a.source_hash == b.source_hash
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_single_glyph_ink_bounds():
    img = render_text("A", RenderConfig(canvas=1024, glyph_size=16, margin=16))
    ink = img.ink_count()
    assert 0 < ink < 0.01 * 1024 * 1024


def test_long_text_truncates_with_ellipsis():
    c = RenderConfig(canvas=256, glyph_size=8, margin=8, wrap=80)
    text = "x" * 10_000
    img = render_text(text, c)  # no error
    # the ellipsis glyph occupies the last cell of the last line
    cols = c.columns
    last_row_y = c.margin + (c.max_lines - 1) * c.cell_h
    last_col_x = c.margin + (cols - 1) * c.cell_w
    cell = img.pixels[last_row_y:last_row_y + c.cell_h, last_col_x:last_col_x + c.cell_w]
    scale = c.scale
    expected = np.where(np.kron(ATLAS[ELLIPSIS], np.ones((scale, scale), dtype=bool)), 0, 255)
    np.testing.assert_array_equal(cell, expected)


def test_empty_text_rejected():
    c = RenderConfig(canvas=256, glyph_size=8, margin=8)
    with pytest.raises(ContractViolation):
        render_text("   \n\t ", c)


def test_unknown_glyph_uses_replacement_not_error():
    c = RenderConfig(canvas=256, glyph_size=8, margin=8)
    img = render_text("héllo", c)
    assert img.ink_count() > 0


def test_config_validation():
    with pytest.raises(ConfigError):
        RenderConfig(canvas=256, glyph_size=12)  # not a multiple of the cell
    with pytest.raises(ConfigError):
        RenderConfig(canvas=64, glyph_size=32, margin=30)  # nothing fits


def test_downsample_shape_and_identity():
    img = render_text("resolution study", RenderConfig(canvas=1024, glyph_size=16, margin=16))
    low = downsample(img, 256)
    assert low.width == low.height == 256
    same = downsample(img, 1024)
    np.testing.assert_array_equal(same.pixels, img.pixels)


def test_downsample_uniform_mean():
    img = TextImage(width=64, height=64, pixels=np.full((64, 64), 77, dtype=np.uint8), source_hash="x")
    low = downsample(img, 16)
    assert (low.pixels == 77).all()


def test_downsample_non_divisor_rejected():
    img = render_text("a", RenderConfig(canvas=256, glyph_size=8, margin=8))
    with pytest.raises(ConfigError):
        downsample(img, 100)


def test_encode_deterministic_and_unit_norm():
    img = render_text("ID 42 | cap 3.3uF", RenderConfig(canvas=256, glyph_size=8, margin=8))
    v1 = reference_visual_encode(img, out_dim=32, seed=7)
    v2 = reference_visual_encode(img, out_dim=32, seed=7)
    np.testing.assert_array_equal(v1, v2)
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-6


def test_encode_white_vs_black_distinct():
    white = TextImage(64, 64, np.full((64, 64), 255, dtype=np.uint8), "w")
    black = TextImage(64, 64, np.zeros((64, 64), dtype=np.uint8), "b")
    vw = reference_visual_encode(white, out_dim=16, seed=0)
    vb = reference_visual_encode(black, out_dim=16, seed=0)
    assert float(vw @ vb) < 1.0 - 1e-6


def test_encode_out_dim_bound():
    img = TextImage(64, 64, np.zeros((64, 64), dtype=np.uint8), "b")
    with pytest.raises(ConfigError):
        reference_visual_encode(img, out_dim=4, seed=0)


def test_patch_features_count():
    img = render_text("abc", RenderConfig(canvas=256, glyph_size=8, margin=8))
    assert patch_features(img).shape == (256,)


def test_degradation_cosine_computable():
    img = render_text("A7=45.2mm A8=9V lot 3", RenderConfig(canvas=1024, glyph_size=16, margin=16))
    base = reference_visual_encode(img, out_dim=32, seed=1)
    for r in (512, 256):
        v = reference_visual_encode(downsample(img, r), out_dim=32, seed=1)
        cos = float(base @ v)
        assert np.isfinite(cos) and -1.0 <= cos <= 1.0 + 1e-12


def test_png_export(tmp_path):
    img = render_text("png check", RenderConfig(canvas=256, glyph_size=8, margin=8))
    out = tmp_path / "img.png"
    to_png(img, out)
    from PIL import Image

    back = np.asarray(Image.open(out))
    np.testing.assert_array_equal(back, img.pixels)
