import logging
import os

from textcontrol.enums import HintKind, OcrBackend
from textcontrol.evaluation.engines import build_engine
from textcontrol.evaluation.harness import evaluate_benchmark
from textcontrol.hints.fonts import FontRegistry
from textcontrol.management.base import PipelineCommand
from textcontrol.perception.recognizer import load_recognizer
from textcontrol.sampler import DEFAULT_BATCH, DEFAULT_STEPS

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Generates images for every benchmark entry, reads their text regions back with OCR and reports ACC/NED."
    required = ('benchmark', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--checkpoint', help="Model checkpoint (not needed with --no-generate).")
        self.add_option(parser, '--base-checkpoint', help="Checkpoint to take the base weights from instead.")
        self.add_option(parser, '--benchmark', help="Benchmark manifest.")
        self.add_option(parser, '--ocr', default=OcrBackend.BUILTIN.value, choices=[b.value for b in OcrBackend])
        self.add_option(parser, '--ocr-command', help="Command run per patch file by the external OCR engine.")
        self.add_option(parser, '--recognizer', help="Recognizer checkpoint: the builtin OCR engine and the FID "
                                                     "feature extractor.")
        self.add_option(parser, '--no-fid', default=False, action='store_true')
        self.add_option(parser, '--no-generate', default=False, action='store_true',
                        help="Score the benchmark's own images.")
        self.add_option(parser, '--save-images', default=False, action='store_true')
        self.add_option(parser, '--hint-kind', choices=[k.value for k in HintKind],
                        help="Default: the checkpoint's training hint kind.")
        self.add_option(parser, '--steps', default=DEFAULT_STEPS, type=int)
        self.add_option(parser, '--batch', default=DEFAULT_BATCH, type=int)
        self.add_option(parser, '--seed', default=0, type=int)
        self.add_option(parser, '--name', help="Configuration name shown in plots (default: report file stem).")

    def output_dir(self, params):
        return os.path.dirname(os.path.abspath(params['out']))

    def run(self, params, config):
        out_dir = self.output_dir(params)
        stem = os.path.splitext(os.path.basename(params['out']))[0]
        engine = build_engine(OcrBackend(params['ocr']), recognizer_path=params['recognizer'],
                              command=params['ocr_command'], work_dir=os.path.join(out_dir, f"{stem}-ocr-patches"))
        generate = not params['no_generate']
        feature_recognizer = None
        if generate and params['recognizer'] and not params['no_fid']:
            feature_recognizer = load_recognizer(params['recognizer'])
        report = evaluate_benchmark(
            params['benchmark'], engine, checkpoint=params['checkpoint'], seed=params['seed'], generate=generate,
            steps=params['steps'], batch=params['batch'],
            hint_kind=HintKind(params['hint_kind']) if params['hint_kind'] else None,
            base_checkpoint=params['base_checkpoint'], feature_recognizer=feature_recognizer,
            font_registry=FontRegistry.from_settings(),
            image_dir=os.path.join(out_dir, f"{stem}-images") if params['save_images'] else None,
            name=params['name'] or stem)
        logger.info("Report written to %s", report.write(params['out']))
