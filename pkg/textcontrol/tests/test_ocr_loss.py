import numpy as np
import torch
from django.test import SimpleTestCase

from textcontrol.exceptions import LossContractError, ShapeMismatch
from textcontrol.perception.ocr_loss import PatchBatch, crop_pairs, crop_regions, feature_distance, ocr_loss, \
    total_loss
from textcontrol.perception.recognizer import Recognizer
from textcontrol.tests.helpers import ALPHABET, region


def loop_distance(gt, pred, widths):
    """
    Reference distance with explicit loops over pairs, layers, rows and valid columns.
    """
    per_pair = []
    for n in range(gt[0].shape[0]):
        pair = 0.0
        for layer in range(len(gt)):
            _, channels, height, _ = gt[layer].shape
            valid = int(widths[layer][n])
            area = 0.0
            for h in range(height):
                for w in range(valid):
                    area += sum((pred[layer][n, c, h, w] - gt[layer][n, c, h, w]) ** 2 for c in range(channels))
            pair += area / (height * valid)
        per_pair.append(pair)
    return sum(per_pair) / len(per_pair)


class FeatureDistanceTestCase(SimpleTestCase):
    def test_matches_loop_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            pairs = int(rng.integers(1, 4))
            shapes = [(pairs, int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 6)))
                      for _ in range(3)]
            gt = [rng.normal(size=shape) for shape in shapes]
            pred = [rng.normal(size=shape) for shape in shapes]
            widths = [rng.integers(1, shape[3] + 1, size=pairs) for shape in shapes]
            value = feature_distance([torch.from_numpy(a) for a in gt], [torch.from_numpy(a) for a in pred],
                                     [torch.from_numpy(w) for w in widths])
            self.assertAlmostEqual(float(value), loop_distance(gt, pred, widths), delta=1e-9)

    def test_known_value(self):
        # Unit difference in every channel: each layer contributes its channel count.
        shapes = [(2, 3, 4, 8), (2, 5, 2, 4), (2, 2, 2, 4)]
        gt = [torch.zeros(shape, dtype=torch.float64) for shape in shapes]
        pred = [torch.ones(shape, dtype=torch.float64) for shape in shapes]
        self.assertEqual(float(feature_distance(gt, pred)), 10.0)
        self.assertEqual(float(feature_distance(gt, gt)), 0.0)

    def test_padding_is_ignored(self):
        gt = [torch.zeros((1, 1, 2, 4), dtype=torch.float64)]
        pred = [torch.zeros((1, 1, 2, 4), dtype=torch.float64)]
        pred[0][..., 2:] = 100.0
        self.assertEqual(float(feature_distance(gt, pred, [torch.tensor([2])])), 0.0)

    def test_layer_mismatch(self):
        with self.assertRaises(LossContractError):
            feature_distance([torch.zeros((1, 1, 2, 2))], [torch.zeros((1, 1, 2, 2))] * 2)
        with self.assertRaises(LossContractError):
            feature_distance([torch.zeros((1, 1, 2, 2))], [torch.zeros((1, 2, 2, 2))])


class OcrLossTestCase(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.recognizer = Recognizer(ALPHABET, patch_height=16, patch_max_width=16, channels=(4, 4, 4, 4),
                                     hidden=4).double().freeze()
        generator = torch.Generator().manual_seed(1)
        self.widths = torch.tensor([16, 16])
        self.gt = PatchBatch(torch.rand((2, 1, 16, 16), generator=generator, dtype=torch.float64), self.widths,
                             ['AB', 'C'])
        self.pred_pixels = torch.rand((2, 1, 16, 16), generator=generator, dtype=torch.float64)

    def test_identical_patches(self):
        self.assertEqual(float(ocr_loss(self.gt, self.gt, self.recognizer)), 0.0)

    def test_positive_for_different_patches(self):
        pred = PatchBatch(self.pred_pixels, self.widths, self.gt.texts)
        self.assertGreater(float(ocr_loss(self.gt, pred, self.recognizer)), 0.0)

    def test_gradient_reaches_prediction_only(self):
        pixels = self.pred_pixels.clone().requires_grad_(True)

        def loss(p):
            return ocr_loss(self.gt, PatchBatch(p, self.widths, self.gt.texts), self.recognizer)

        self.assertTrue(torch.autograd.gradcheck(loss, (pixels,), eps=1e-6, atol=1e-5))
        loss(pixels).backward()
        self.assertTrue(pixels.grad.abs().sum() > 0)
        self.assertTrue(all(p.grad is None for p in self.recognizer.parameters()))

    def test_contract(self):
        pred = PatchBatch(self.pred_pixels[:1], self.widths[:1], ['AB'])
        with self.assertRaises(LossContractError):
            ocr_loss(self.gt, pred, self.recognizer)
        misaligned = PatchBatch(self.pred_pixels, torch.tensor([16, 8]), self.gt.texts)
        with self.assertRaises(LossContractError):
            ocr_loss(self.gt, misaligned, self.recognizer)
        wrong_size = PatchBatch(torch.zeros((2, 1, 16, 8), dtype=torch.float64), self.widths, self.gt.texts)
        with self.assertRaises(ShapeMismatch):
            ocr_loss(wrong_size, wrong_size, self.recognizer)

    def test_empty(self):
        empty = PatchBatch.empty(16, 16, torch.float64)
        self.assertEqual(float(ocr_loss(empty, empty, self.recognizer)), 0.0)


class TotalLossTestCase(SimpleTestCase):
    def test_known_value(self):
        self.assertAlmostEqual(float(total_loss(torch.tensor(0.5), torch.tensor(0.3), 0.1)), 0.53, places=6)

    def test_weighted_sum(self):
        rng = np.random.default_rng(2)
        for l_ldm, l_ocr, lam in rng.uniform(0.0, 10.0, size=(1000, 3)):
            self.assertEqual(total_loss(float(l_ldm), float(l_ocr), float(lam)), l_ldm + lam * l_ocr)

    def test_zero_weight_is_ldm_alone(self):
        l_ldm = torch.tensor(0.7, requires_grad=True)
        self.assertIs(total_loss(l_ldm, torch.tensor(5.0), 0.0), l_ldm)

    def test_contract(self):
        for l_ldm, l_ocr, lam in ((-0.1, 0.2, 0.1), (0.1, -0.2, 0.1), (0.1, float('inf'), 0.1),
                                  (float('nan'), 0.2, 0.1), (0.1, 0.2, -0.5)):
            with self.assertRaises(LossContractError):
                total_loss(l_ldm, l_ocr, lam)


class CropRegionsTestCase(SimpleTestCase):
    def setUp(self):
        self.image = torch.ones((3, 32, 64))
        self.image[:, 4:16, 8:32] = 0.0

    def test_crop_geometry(self):
        patches = crop_regions(self.image, [region('AB', 8, 4, 24, 12)], target_height=32, max_width=256)
        self.assertEqual(tuple(patches.pixels.shape), (1, 1, 32, 256))
        self.assertEqual(patches.widths.tolist(), [64])
        self.assertEqual(patches.texts, ['AB'])
        self.assertTrue(torch.allclose(patches.pixels[0, 0, :, :64], torch.ones((32, 64))))
        self.assertFalse(patches.pixels[0, 0, :, 64:].any())

    def test_width_is_capped(self):
        patches = crop_regions(self.image, [region('WIDE', 0, 0, 64, 4)], target_height=32, max_width=128)
        self.assertEqual(patches.widths.tolist(), [128])

    def test_outside_regions_skipped(self):
        patches = crop_regions(self.image, [region('GONE', 70, 0, 10, 10), region('IN', 60, 30, 10, 10)])
        self.assertEqual(patches.texts, ['IN'])
        self.assertEqual(len(crop_regions(self.image, [])), 0)

    def test_differentiable(self):
        image = self.image.clone().requires_grad_(True)
        crop_regions(image, [region('AB', 8, 4, 24, 12)]).pixels.sum().backward()
        self.assertTrue(image.grad[:, 4:16, 8:32].abs().sum() > 0)
        self.assertEqual(float(image.grad[:, 20:, :].abs().sum()), 0.0)

    def test_pairs_aligned(self):
        gt, pred = crop_pairs(self.image[None].repeat(2, 1, 1, 1), torch.rand((2, 3, 32, 64)),
                              [[region('A', 0, 0, 8, 8)], [region('B', 0, 0, 8, 8), region('C', 8, 8, 16, 8)]])
        self.assertEqual(gt.texts, pred.texts)
        self.assertTrue(torch.equal(gt.widths, pred.widths))
        with self.assertRaises(ShapeMismatch):
            crop_pairs(torch.zeros((1, 3, 32, 64)), torch.zeros((1, 3, 32, 32)), [[]])
        with self.assertRaises(ShapeMismatch):
            crop_regions(torch.zeros((1, 32, 64)), [])
