import json
import os

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from textcontrol.evaluation.harness import EvalReport
from textcontrol.evaluation.plots import emit_plots, unique_labels
from textcontrol.tests.helpers import TemporaryDirectoryMixin


def report(name: str, acc: float, ned: float, fid=None) -> EvalReport:
    return EvalReport(name=name, acc=acc, ned=ned, lines=10, images=5, failures=0, fid=fid)


class EmitPlotsTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    def write_log(self, run: str, steps: int, with_ocr: bool = True) -> str:
        os.makedirs(self.path(run), exist_ok=True)
        path = self.path(run, 'metrics.jsonl')
        with open(path, 'w') as log:
            for step in range(1, steps + 1):
                record = {'step': step, 'l_ldm': 1.0 / step, 'total': 1.2 / step, 'grad_norm': 0.5,
                          't_mean': 500.0, 'wallclock': 0.1 * step}
                if with_ocr:
                    record['l_ocr'] = 2.0 / step
                log.write(json.dumps(record) + '\n')
        return path

    def test_scores_only(self):
        result = emit_plots([report('baseline', 0.4, 0.7), report('ocr-loss', 0.6, 0.8)], self.path('plots'))
        self.assertEqual(result.files, [self.path('plots', 'scores.png')])
        self.assertTrue(any('FID' in note for note in result.notes))
        self.assertFalse(os.path.exists(self.path('plots', 'fid.png')))

    def test_all_panels(self):
        logs = [self.write_log('with-ocr', 30), self.write_log('without-ocr', 30, with_ocr=False)]
        result = emit_plots([report('a', 0.4, 0.7, fid=12.5), report('b', 0.6, 0.8)], self.path('plots'),
                            training_logs=logs, window=5)
        self.assertEqual([os.path.basename(f) for f in result.files], ['scores.png', 'fid.png', 'losses.png'])
        for path in result.files:
            with open(path, 'rb') as png:
                self.assertEqual(png.read(8), b'\x89PNG\r\n\x1a\n')

    def test_empty_log_noted(self):
        empty = self.path('empty.jsonl')
        open(empty, 'w').close()
        result = emit_plots([report('a', 0.4, 0.7)], self.path('plots'), training_logs=[empty])
        self.assertFalse(os.path.exists(self.path('plots', 'losses.png')))
        self.assertTrue(any('empty' in note for note in result.notes))

    def test_identical_reruns(self):
        reports = [report('a', 0.4, 0.7, fid=3.0), report('a', 0.5, 0.75, fid=2.0)]
        logs = [self.write_log('run', 20)]
        first = emit_plots(reports, self.path('first'), training_logs=logs)
        second = emit_plots(reports, self.path('second'), training_logs=logs)
        for a, b in zip(first.files, second.files):
            with open(a, 'rb') as fa, open(b, 'rb') as fb:
                self.assertEqual(fa.read(), fb.read(), os.path.basename(a))

    def test_needs_reports(self):
        with self.assertRaises(ValidationError):
            emit_plots([], self.path('plots'))

    def test_unique_labels(self):
        self.assertEqual(unique_labels(['a', 'b', 'a', 'a']), ['a', 'b', 'a (2)', 'a (3)'])
