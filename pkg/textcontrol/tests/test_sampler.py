import json

import numpy as np
from django.test import SimpleTestCase

from textcontrol.diffusion.model import TextControlModel
from textcontrol.enums import HintKind
from textcontrol.exceptions import RequestError, TimestepOutOfRange
from textcontrol.hints.fonts import FontRegistry
from textcontrol.manifest import load_dataset
from textcontrol.rng import seeded_rng
from textcontrol.sampler import SampleRequest, Sampler, ddim_timesteps, write_samples
from textcontrol.tests.helpers import TemporaryDirectoryMixin, region, tiny_config


class DdimTimestepsTestCase(SimpleTestCase):
    def test_uniform_stride(self):
        plan = ddim_timesteps(1000, 20)
        self.assertEqual(len(plan), 20)
        self.assertEqual(plan[0], (1000, 950))
        self.assertEqual(plan[1], (950, 900))
        self.assertEqual(plan[-1], (50, 0))

    def test_strictly_decreasing(self):
        for T, steps in ((1000, 7), (50, 50), (50, 1), (999, 20)):
            plan = ddim_timesteps(T, steps)
            self.assertEqual(plan[0][0], T)
            self.assertEqual(plan[-1][1], 0)
            self.assertTrue(all(t > t_prev for t, t_prev in plan))
            self.assertTrue(all(a[1] == b[0] for a, b in zip(plan, plan[1:])))

    def test_step_range(self):
        for steps in (0, 51):
            with self.assertRaises(TimestepOutOfRange):
                ddim_timesteps(50, steps)


class SamplerTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.model = TextControlModel.initialise(tiny_config(), seeded_rng(0))
        self.sampler = Sampler(self.model, FontRegistry())
        self.regions = [region('HI', 2, 2, 20, 12)]

    def request(self, **overrides) -> SampleRequest:
        values = {'caption': 'a card that says "HI"', 'regions': self.regions, 'steps': 4, 'seed': 1, 'batch': 2}
        values.update(overrides)
        return SampleRequest(**values)

    def test_images(self):
        result = self.sampler.sample(self.request())
        self.assertEqual(len(result.images), 2)
        for image in result.images:
            self.assertEqual(image.shape, (32, 32, 3))
            self.assertEqual(image.dtype, np.uint8)
        self.assertEqual(result.timesteps[0][0], 50)
        self.assertEqual(result.timesteps[-1][1], 0)

    def test_evaluation_count(self):
        self.assertEqual(self.sampler.sample(self.request()).evaluations, 2 * 4)
        guided = self.sampler.sample(self.request(guidance=3.0, negative_prompt='blurry'))
        self.assertEqual(guided.evaluations, 2 * 2 * 4)
        self.assertEqual(self.sampler.evaluations, 8 + 16)

    def test_deterministic(self):
        first = self.sampler.sample(self.request())
        second = Sampler(TextControlModel.initialise(tiny_config(), seeded_rng(0)), FontRegistry()).sample(
            self.request())
        self.assertEqual([i.tobytes() for i in first.images], [i.tobytes() for i in second.images])
        other = self.sampler.sample(self.request(seed=2))
        self.assertNotEqual([i.tobytes() for i in first.images], [i.tobytes() for i in other.images])

    def test_hint_kinds(self):
        for kind in HintKind:
            result = self.sampler.sample(self.request(hint_kind=kind, batch=1, steps=1))
            self.assertEqual(result.hint.kind, kind)
            self.assertEqual(result.hint.pixels.shape, (32, 32))
            self.assertTrue(result.hint.pixels.any())

    def test_off_canvas_region_is_noted(self):
        regions = [region('HI', -40, 0, 20, 12), region('HI', 2, 2, 20, 12)]
        inside = np.zeros((32, 32), dtype=bool)
        inside[2:14, 2:22] = True
        for kind in HintKind:
            hint = self.sampler.build_hint(self.request(regions=regions, hint_kind=kind))
            self.assertFalse(hint.pixels[~inside].any(), kind.value)
            self.assertEqual(len(hint.notes), 1, kind.value)

    def test_bad_requests(self):
        for overrides in ({'steps': 0}, {'steps': 51}, {'batch': 0}, {'guidance': -1.0},
                          {'regions': [region('TALL', 0, 0, 30, 3, font_px=20)]},
                          {'regions': [region('HI', 0, 0, 20, 12, font_id='missing')], 'hint_kind': HintKind.FONT}):
            with self.assertRaises(RequestError, msg=overrides):
                self.sampler.sample(self.request(**overrides))

    def test_request_round_trip(self):
        request = self.request(hint_kind=HintKind.CANNY, guidance=2.0, negative_prompt='x', request_id='r1')
        self.assertEqual(SampleRequest.from_dict(json.loads(json.dumps(request.to_dict()))), request)
        with self.assertRaises(RequestError):
            SampleRequest.from_dict({'regions': []})
        with self.assertRaises(RequestError):
            SampleRequest.from_dict({'caption': 'x', 'hint_kind': 'sketch'})
        with self.assertRaises(RequestError):
            SampleRequest.read(self.path('missing.json'))

    def test_write_samples(self):
        result = self.sampler.sample(self.request(request_id='card'))
        manifest = write_samples(self.tmp, result, metadata={'checkpoint': 'model.pt'})
        dataset = load_dataset(manifest)
        self.assertEqual(len(dataset), 2)
        self.assertEqual(dataset.images[0].regions, self.regions)
        self.assertEqual(dataset.metadata['evaluations'], 8)
        self.assertEqual(dataset.metadata['checkpoint'], 'model.pt')
        self.assertEqual(dataset.metadata['request']['request_id'], 'card')
        for image, written in zip(result.images, dataset.images):
            self.assertEqual(image.tobytes(), written.image.tobytes())
