from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from textcontrol.domain import AnnotatedImage
from textcontrol.enums import HintKind
from textcontrol.exceptions import GlyphOverflow, UnknownFont
from textcontrol.hints.benchmark import generate_tiny_benchmark
from textcontrol.hints.canny import CannyParams, canny, gradient
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.render import HintBuilder, make_font_hint, make_glyph_hint, rasterize_region, \
    render_typographic_image
from textcontrol.tests.helpers import region


def union_mask(regions, size):
    mask = np.zeros(size, dtype=bool)
    for r in regions:
        x, y, w, h = r.bbox
        mask[y:y + h, x:x + w] = True
    return mask


def brute_force_sobel(gray):
    h, w = gray.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    weights = {-1: 1.0, 0: 2.0, 1: 1.0}

    def at(i, j):
        return gray[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]

    for i in range(h):
        for j in range(w):
            for d, weight in weights.items():
                gx[i, j] += weight * (at(i + d, j + 1) - at(i + d, j - 1))
                gy[i, j] += weight * (at(i + 1, j + d) - at(i - 1, j + d))
    return gx, gy


class HintInvariantTestCase(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.registry = FontRegistry()
        cls.images = generate_tiny_benchmark(count=50, canvas=64, max_lines=3, max_char_px=14, seed=11,
                                             font_registry=cls.registry).images

    def builders(self):
        return [HintBuilder(kind, self.registry) for kind in HintKind]

    def test_zero_outside_regions(self):
        for builder in self.builders():
            for image in self.images:
                hint = builder.build(image)
                self.assertEqual(hint.pixels.shape, image.size)
                outside = ~union_mask(image.regions, image.size)
                self.assertFalse(hint.pixels[outside].any(), f"{builder.kind.value} hint of {image.image_id}")

    def test_disjoint_regions_compose_by_maximum(self):
        for builder in self.builders():
            for image in self.images:
                if len(image.regions) < 2:
                    continue
                whole = builder.build(image).pixels
                parts = [builder.build(replace(image, regions=[r])).pixels for r in image.regions]
                np.testing.assert_array_equal(whole, np.maximum.reduce(parts))

    def test_deterministic(self):
        for builder in self.builders():
            for image in self.images[:10]:
                first = builder.build(image).to_uint8()
                second = HintBuilder(builder.kind, FontRegistry()).build(image).to_uint8()
                self.assertEqual(first.tobytes(), second.tobytes())

    def test_value_ranges(self):
        image = self.images[0]
        glyph = make_glyph_hint(image.regions, image.size, 'default', self.registry)
        self.assertGreaterEqual(glyph.pixels.min(), 0.0)
        self.assertLessEqual(glyph.pixels.max(), 1.0)
        self.assertTrue(glyph.pixels.any())
        font = make_font_hint(image)
        self.assertTrue(set(np.unique(font.pixels)).issubset({0.0, 1.0}))


class HintErrorTestCase(SimpleTestCase):
    def test_unknown_font(self):
        with self.assertRaises(UnknownFont):
            make_glyph_hint([region('AB', 0, 0, 20, 12)], (16, 32), 'no-such-font', FontRegistry())

    def test_glyph_overflow_names_region(self):
        with self.assertRaises(GlyphOverflow) as raised:
            rasterize_region(region('ABC', 0, 0, 40, 3, font_px=12), FontRegistry())
        self.assertIn('ABC', str(raised.exception))

    def test_failed_segmentation_is_noted(self):
        pixels = render_typographic_image([region('AB', 0, 0, 20, 12)], (16, 32), FontRegistry())
        image = AnnotatedImage('x', pixels, '', regions=[region('AB', 0, 0, 20, 12)])

        def broken(crop):
            raise RuntimeError("no mask")

        hint = make_font_hint(image, broken)
        self.assertFalse(hint.pixels.any())
        self.assertEqual(len(hint.notes), 1)

    def test_degenerate_region_skipped(self):
        pixels = np.full((16, 16, 3), 255, dtype=np.uint8)
        image = AnnotatedImage('x', pixels, '', regions=[region('A', 20, 20, 4, 4)])
        hint = HintBuilder(HintKind.CANNY, FontRegistry()).build(image)
        self.assertEqual(len(hint.notes), 1)


class OffCanvasLayoutTestCase(SimpleTestCase):
    size = (64, 64)

    def builders(self):
        registry = FontRegistry()
        return [HintBuilder(kind, registry) for kind in HintKind]

    def test_region_outside_canvas_leaves_hint_empty(self):
        outside = region('AB', -70, 0, 20, 12)
        for builder in self.builders():
            hint = builder.build_from_layout([outside], self.size)
            self.assertFalse(hint.pixels.any(), builder.kind.value)
            self.assertEqual(len(hint.notes), 1, builder.kind.value)
        typographic = render_typographic_image([outside], self.size, FontRegistry())
        self.assertTrue((typographic == 255).all())

    def test_region_across_left_edge_is_clipped(self):
        across = region('ABC', -4, 0, 24, 12)
        for builder in self.builders():
            hint = builder.build_from_layout([across], self.size)
            self.assertTrue(hint.pixels[:12, :20].any(), builder.kind.value)
            self.assertFalse(hint.pixels[12:].any(), builder.kind.value)
            self.assertFalse(hint.pixels[:, 20:].any(), builder.kind.value)

    def test_clipped_glyphs_match_shifted_layout(self):
        registry = FontRegistry()
        clipped = make_glyph_hint([region('ABC', -4, 0, 24, 12)], self.size, 'default', registry)
        whole = make_glyph_hint([region('ABC', 0, 0, 24, 12)], self.size, 'default', registry)
        np.testing.assert_array_equal(clipped.pixels[:, :20], whole.pixels[:, 4:24])
        self.assertEqual(clipped.notes, [])

        clipped = render_typographic_image([region('ABC', 0, -3, 24, 12)], self.size, registry)
        whole = render_typographic_image([region('ABC', 0, 0, 24, 12)], self.size, registry)
        np.testing.assert_array_equal(clipped[:9], whole[3:12])


class CannyTestCase(SimpleTestCase):
    def test_sobel_matches_brute_force(self):
        gray = np.random.default_rng(0).random((9, 11))
        gx, gy, magnitude = gradient(gray, sigma=0)
        expected_gx, expected_gy = brute_force_sobel(gray)
        np.testing.assert_allclose(gx, expected_gx, atol=1e-12)
        np.testing.assert_allclose(gy, expected_gy, atol=1e-12)
        np.testing.assert_allclose(magnitude, np.hypot(expected_gx, expected_gy) / 4.0, atol=1e-12)

    def test_unit_step_magnitude(self):
        gray = np.zeros((8, 8))
        gray[:, 4:] = 1.0
        _, _, magnitude = gradient(gray, sigma=0)
        np.testing.assert_allclose(magnitude[:, 3:5], 1.0)

    def test_step_edge_is_thin(self):
        gray = np.zeros((16, 16))
        gray[:, 8:] = 1.0
        edges = canny(gray, CannyParams(0.1, 0.3, 1.0))
        columns = np.nonzero(edges.any(axis=0))[0]
        self.assertTrue(edges.any())
        self.assertTrue(set(columns.tolist()).issubset({7, 8}))
        self.assertEqual(int(edges[4].sum()), 1)

    def test_flat_image_has_no_edges(self):
        self.assertFalse(canny(np.full((8, 8), 0.5)).any())

    def test_threshold_order(self):
        with self.assertRaises(ValueError):
            CannyParams(0.3, 0.1)
