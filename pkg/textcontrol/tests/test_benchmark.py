import itertools

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from textcontrol.enums import BenchmarkStyle
from textcontrol.hints.benchmark import generate_tiny_benchmark
from textcontrol.hints.fonts import FontRegistry
from textcontrol.manifest import load_dataset
from textcontrol.tests.helpers import TemporaryDirectoryMixin


class TinyBenchmarkTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.benchmark = generate_tiny_benchmark(count=50, canvas=128, max_lines=8, max_char_px=16, seed=7,
                                                font_registry=FontRegistry())

    def test_geometry(self):
        pool = set(settings.TEXTCONTROL_CHARACTER_POOL)
        self.assertEqual(len(self.benchmark.images), 50)
        for image in self.benchmark.images:
            self.assertEqual(image.image.shape, (128, 128, 3))
            self.assertTrue(1 <= len(image.regions) <= 8)
            for r in image.regions:
                x, y, w, h = r.bbox
                self.assertTrue(0 <= x and 0 <= y and x + w <= 128 and y + h <= 128, r.bbox)
                self.assertLess(r.font_px, 16)
                self.assertTrue(r.text.strip())
                self.assertTrue(set(r.text) <= pool)
            for a, b in itertools.combinations(image.regions, 2):
                self.assertFalse(a.overlaps(b), f"{image.image_id}: {a.bbox} overlaps {b.bbox}")

    def test_white_outside_text(self):
        for image in self.benchmark.images:
            outside = np.ones((128, 128), dtype=bool)
            for r in image.regions:
                x, y, w, h = r.bbox
                outside[y:y + h, x:x + w] = False
            self.assertTrue((image.image[outside] == 255).all())
            self.assertTrue((image.image[~outside] < 255).any())

    def test_deterministic(self):
        again = generate_tiny_benchmark(count=50, canvas=128, max_lines=8, max_char_px=16, seed=7,
                                        font_registry=FontRegistry())
        for a, b in zip(self.benchmark.images, again.images):
            self.assertEqual(a.regions, b.regions)
            self.assertEqual(a.image.tobytes(), b.image.tobytes())
        other = generate_tiny_benchmark(count=5, canvas=128, max_lines=8, max_char_px=16, seed=8,
                                        font_registry=FontRegistry())
        self.assertNotEqual([i.regions for i in other.images], [i.regions for i in self.benchmark.images[:5]])

    def test_char_size_must_fit_canvas(self):
        with self.assertRaises(ValueError):
            generate_tiny_benchmark(count=1, canvas=16, max_lines=1, max_char_px=16, seed=0,
                                    font_registry=FontRegistry())

    def test_small_char_sizes(self):
        for max_char_px in (2, 6):
            benchmark = generate_tiny_benchmark(count=5, canvas=64, max_lines=2, max_char_px=max_char_px, seed=0,
                                                font_registry=FontRegistry())
            self.assertEqual(len(benchmark.images), 5)
            self.assertLess(benchmark.parameters['min_char_px'], max_char_px)
            for image in benchmark.images:
                self.assertTrue(all(0 < r.font_px < max_char_px for r in image.regions))
        self.assertEqual(generate_tiny_benchmark(count=1, canvas=64, max_lines=1, max_char_px=16, seed=0,
                                                 font_registry=FontRegistry()).parameters['min_char_px'], 8)

    def test_scene_style(self):
        scene = generate_tiny_benchmark(count=3, canvas=64, max_lines=2, max_char_px=12, seed=1,
                                        font_registry=FontRegistry(), style=BenchmarkStyle.SCENE)
        for image in scene.images:
            background = np.median(image.image.reshape(-1, 3), axis=0)
            self.assertNotEqual(background.tolist(), [255.0, 255.0, 255.0])

    def test_write_and_load(self):
        manifest = self.benchmark.write(self.tmp)
        dataset = load_dataset(manifest)
        self.assertEqual(dataset.metadata['parameters']['max_char_px'], 16)
        self.assertEqual([i.regions for i in dataset.images], [i.regions for i in self.benchmark.images])
        self.assertEqual(dataset.dropped_regions, 0)
