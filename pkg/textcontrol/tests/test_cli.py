import io
import json
import os
import shlex
import sys

from django.test import SimpleTestCase

from textcontrol.cli import COMMANDS, dispatch
from textcontrol.evaluation.harness import EvalReport
from textcontrol.manifest import load_dataset
from textcontrol.tests.helpers import TINY, TemporaryDirectoryMixin

BENCHMARK_EXAMPLE = ['make-benchmark', '--count', '10', '--canvas', '128', '--max-lines', '8', '--max-char-px', '16',
                     '--seed', '0']


def read_bytes(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


class DispatchTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    def run_cli(self, *argv) -> int:
        self.stderr = io.StringIO()
        return dispatch(list(argv), stderr=self.stderr)

    def test_usage(self):
        self.assertEqual(self.run_cli(), 1)
        self.assertEqual(self.run_cli('--help'), 0)
        for name in COMMANDS:
            self.assertIn(name, self.stderr.getvalue())

    def test_unknown_command(self):
        self.assertEqual(self.run_cli('frobnicate'), 1)
        self.assertIn("Unknown command: 'frobnicate'", self.stderr.getvalue())

    def test_missing_required_flag(self):
        with self.assertLogs('textcontrol.cli', 'ERROR') as logs:
            self.assertEqual(self.run_cli('train', '--out', self.path('run')), 1)
        self.assertIn('--data', '\n'.join(logs.output))

    def test_bad_flag_values(self):
        with self.assertLogs('textcontrol.cli', 'ERROR'):
            self.assertEqual(self.run_cli('make-benchmark', '--out', self.tmp, '--count', 'many'), 1)
        with self.assertLogs('textcontrol.cli', 'ERROR'):
            self.assertEqual(self.run_cli('make-benchmark', '--out', self.tmp, '--max-char-px', '200'), 1)
        with self.assertLogs('textcontrol.cli', 'ERROR'):
            self.assertEqual(self.run_cli('train', '--data', 'x.jsonl', '--out', self.tmp, '--lambda-ocr', '-1'), 1)

    def test_missing_input_file(self):
        with self.assertLogs('textcontrol.cli', 'ERROR'):
            self.assertEqual(self.run_cli('sample', '--checkpoint', self.path('missing.pt'), '--caption', 'x',
                                          '--out', self.tmp), 1)

    def test_make_benchmark(self):
        self.assertEqual(self.run_cli(*BENCHMARK_EXAMPLE, '--out', self.path('first')), 0)
        dataset = load_dataset(self.path('first', 'manifest.jsonl'))
        self.assertEqual(len(dataset), 10)
        self.assertEqual(len(os.listdir(self.path('first', 'images'))), 10)
        self.assertTrue(os.path.exists(self.path('first', 'effective-config.yaml')))
        for image in dataset.images:
            self.assertEqual(image.size, (128, 128))
            self.assertTrue(1 <= len(image.regions) <= 8)
            self.assertTrue(all(r.font_px < 16 for r in image.regions))

        self.assertEqual(self.run_cli(*BENCHMARK_EXAMPLE, '--out', self.path('second')), 0)
        self.assertEqual(read_bytes(self.path('first', 'manifest.jsonl')),
                         read_bytes(self.path('second', 'manifest.jsonl')))
        for name in os.listdir(self.path('first', 'images')):
            self.assertEqual(read_bytes(self.path('first', 'images', name)),
                             read_bytes(self.path('second', 'images', name)))

    def test_config_file(self):
        with open(self.path('benchmark.yaml'), 'w') as config_file:
            config_file.write('count: 3\ncanvas: 64\nmax_char_px: 12\n')
        self.assertEqual(self.run_cli('make-benchmark', '--config', self.path('benchmark.yaml'), '--count', '2',
                                      '--out', self.path('out')), 0)
        self.assertEqual(len(load_dataset(self.path('out', 'manifest.jsonl'))), 2)
        with open(self.path('out', 'effective-config.yaml')) as effective:
            content = effective.read()
        self.assertIn('canvas: 64', content)
        self.assertIn('count: 2', content)

        with open(self.path('bad.yaml'), 'w') as config_file:
            config_file.write('count: 3\ncolour: red\n')
        with self.assertLogs('textcontrol.cli', 'ERROR') as logs:
            self.assertEqual(self.run_cli('make-benchmark', '--config', self.path('bad.yaml'),
                                          '--out', self.path('bad')), 1)
        self.assertIn('colour', '\n'.join(logs.output))


class PipelineTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    """
    Benchmark, hints, recognizer, training, sampling, evaluation and plots on a tiny configuration.
    """

    def run_cli(self, *argv):
        self.assertEqual(dispatch(list(argv), stderr=io.StringIO()), 0, argv)

    def write_train_config(self) -> str:
        path = self.path('train.yaml')
        with open(path, 'w') as config_file:
            for key, value in TINY.items():
                if isinstance(value, tuple):
                    value = ','.join(str(v) for v in value)
                config_file.write(f"{key}: {json.dumps(value)}\n")
            config_file.write('epochs: 1\n')
        return path

    def test_pipeline(self):
        bench = self.path('bench')
        self.run_cli('make-benchmark', '--count', '4', '--canvas', '32', '--max-lines', '2', '--max-char-px', '12',
                     '--out', bench)
        manifest = os.path.join(bench, 'manifest.jsonl')
        config = self.write_train_config()

        self.run_cli('make-hints', '--data', manifest, '--config', config, '--hint-kind', 'canny',
                     '--out', self.path('hints'))
        with open(self.path('hints', 'hints.jsonl')) as hints:
            self.assertEqual(len(hints.readlines()), 4)

        self.run_cli('pretrain-recognizer', '--count', '20', '--epochs', '1', '--accuracy-floor', '0',
                     '--out', self.path('recognizer'))
        recognizer = self.path('recognizer', 'recognizer.pt')
        self.assertTrue(os.path.exists(recognizer))

        self.run_cli('train', '--data', manifest, '--config', config, '--recognizer', recognizer,
                     '--out', self.path('run'))
        checkpoint = self.path('run', 'checkpoint.pt')
        self.assertTrue(os.path.exists(checkpoint))
        with open(self.path('run', 'metrics.jsonl')) as metrics:
            records = [json.loads(line) for line in metrics]
        self.assertEqual(len(records), 2)
        self.assertTrue(all('l_ocr' in r for r in records))

        with open(self.path('request.json'), 'w') as request:
            json.dump({'caption': 'a card that says "HI"', 'steps': 3, 'batch': 2,
                       'regions': [{'text': 'HI', 'bbox': [2, 2, 20, 12], 'font_id': 'default', 'font_px': 10}]},
                      request)
        self.run_cli('sample', '--checkpoint', checkpoint, '--request', self.path('request.json'), '--seed', '7',
                     '--out', self.path('samples'))
        samples = load_dataset(self.path('samples', 'samples.jsonl'))
        self.assertEqual(len(samples), 2)
        self.assertEqual(samples.metadata['request']['seed'], 7)

        self.run_cli('evaluate', '--benchmark', manifest, '--checkpoint', checkpoint, '--recognizer', recognizer,
                     '--steps', '2', '--batch', '1', '--out', self.path('reports', 'ocr.json'))
        generated = EvalReport.read(self.path('reports', 'ocr.json'))
        self.assertIsNotNone(generated.fid)

        command = ' '.join(shlex.quote(p) for p in (sys.executable, '-c', 'print("HI")'))
        self.run_cli('evaluate', '--benchmark', manifest, '--no-generate', '--ocr', 'external-cmd',
                     '--ocr-command', command, '--out', self.path('reports', 'reference.json'))
        reference = EvalReport.read(self.path('reports', 'reference.json'))
        self.assertEqual(reference.lines, sum(len(i.regions) for i in load_dataset(manifest).images))

        self.run_cli('recognizer-eval', '--recognizer', recognizer, '--count', '5', '--out', self.path('receval'))
        self.assertTrue(os.path.exists(self.path('receval', 'recognizer-eval.json')))

        self.run_cli('plot', '--reports', ','.join([self.path('reports', 'ocr.json'),
                                                    self.path('reports', 'reference.json')]),
                     '--logs', self.path('run', 'metrics.jsonl'), '--out', self.path('plots'))
        self.assertEqual(sorted(os.listdir(self.path('plots'))),
                         ['effective-config.yaml', 'fid.png', 'losses.png', 'scores.png'])
