from celery.backends.base import DisabledBackend
from celery.contrib.abortable import AbortableAsyncResult
from celery.result import AsyncResult
from django.conf import settings
from django.test import SimpleTestCase

from django_font_diffusion.celery import app
from textcontrol.manifest import load_dataset
from textcontrol.tasks import build_hints_group
from textcontrol.tests.helpers import TemporaryDirectoryMixin, tiny_config, write_toy_dataset


class ResultBackendTestCase(SimpleTestCase):
    def test_backend_from_settings(self):
        self.assertEqual(app.conf.result_backend, settings.CELERY_RESULT_BACKEND)
        self.assertNotIsInstance(app.backend, DisabledBackend)

    def test_results_can_be_collected(self):
        app.backend.store_result('train-run-result', {'step': 2}, 'SUCCESS')
        self.assertEqual(AsyncResult('train-run-result', app=app).get(timeout=1), {'step': 2})

    def test_abort_flag_is_stored(self):
        result = AbortableAsyncResult('train-run-abort', app=app)
        self.assertFalse(result.is_aborted())
        result.abort()
        self.assertTrue(AbortableAsyncResult('train-run-abort', app=app).is_aborted())


class BuildHintsGroupTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    def test_results_in_input_order(self):
        manifest = write_toy_dataset(self.path('data'), count=3)
        dataset = load_dataset(manifest)
        results = build_hints_group(dataset.images, self.path('data'), tiny_config(), self.path('hints'))
        self.assertEqual([r['id'] for r in results], [image.image_id for image in dataset.images])
        self.assertTrue(all(r['kind'] == 'glyph' for r in results))
